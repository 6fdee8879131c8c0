"""Test suite for the tlme-sim simulator.

Unit tests for the readers, writers and configuration, physics checks against
closed-form results and the pseudomode reference, and end-to-end CLI runs.
"""
