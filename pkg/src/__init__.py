"""Time-local master equation simulator for driven bosons and qubits."""
