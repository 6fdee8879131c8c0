"""CSV emission for kernel, Green's-function, coefficient, trajectory and sweep tracks.

Floats are written with a fixed number of significant digits (17 by default)
so repeated runs produce byte-identical files.
"""

import csv
import logging
import os
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from ..settings import get_settings

logger = logging.getLogger(__name__)

KERNEL_HEADER = ["tau", "re_F", "im_F", "re_G", "im_G"]
GREEN_HEADER = ["t", "re_V", "im_V", "re_dV", "im_dV", "abs_det_V", "near_singular"]
COEFFS_HEADER = ["t", "re_gamma", "im_gamma", "re_xi", "im_xi", "re_lambda", "im_lambda", "pole_flag"]
QUBIT_HEADER = ["t", "re_sigma_minus", "im_sigma_minus", "sigma_z", "trace_error", "min_eigenvalue"]
BOSON_HEADER = ["t", "re_a", "im_a", "n", "trace_error", "min_eigenvalue"]
MOMENT_HEADER = ["t", "re_a", "im_a"]
SWEEP_HEADER = ["value", "sigma_z", "re_sigma_minus", "im_sigma_minus", "residual",
                "normalized_violation", "cutoff", "converged"]


def format_value(value, precision: Optional[int] = None) -> str:
    if precision is None:
        precision = get_settings().csv_precision
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if value is None:
        return ""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return f"{float(value):.{precision}g}"


def write_rows(path: str, header: Sequence[str], rows: Iterable[Sequence]) -> str:
    """Write a header and formatted rows; returns the path written."""
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    count = 0
    with open(path, "w", newline="", encoding="utf-8") as csvfile:
        writer = csv.writer(csvfile, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_value(value) for value in row])
            count += 1
    logger.info(f"Wrote {count} rows to {path}")
    return path


def _matrix_columns(name: str, matrix_stack: np.ndarray) -> Tuple[List[str], List[np.ndarray]]:
    """re/im columns for every (j, k) entry; a 1x1 stack keeps the bare names."""
    stack = np.asarray(matrix_stack)
    size = stack.shape[1]
    header: List[str] = []
    columns: List[np.ndarray] = []
    for j in range(size):
        for k in range(size):
            suffix = f"_{j}{k}" if size > 1 else ""
            header += [f"re_{name}{suffix}", f"im_{name}{suffix}"]
            columns += [stack[:, j, k].real, stack[:, j, k].imag]
    return header, columns


def _vector_columns(name: str, vector_stack: np.ndarray) -> Tuple[List[str], List[np.ndarray]]:
    stack = np.asarray(vector_stack)
    size = stack.shape[1]
    header: List[str] = []
    columns: List[np.ndarray] = []
    for j in range(size):
        suffix = f"_{j}" if size > 1 else ""
        header += [f"re_{name}{suffix}", f"im_{name}{suffix}"]
        columns += [stack[:, j].real, stack[:, j].imag]
    return header, columns


def _write_columns(path: str, leading: Tuple[str, np.ndarray], blocks, trailing=()) -> str:
    header = [leading[0]]
    columns = [leading[1]]
    for block_header, block_columns in blocks:
        header += block_header
        columns += block_columns
    for name, column in trailing:
        header.append(name)
        columns.append(column)
    return write_rows(path, header, zip(*columns))


def write_kernel_csv(path: str, lags: np.ndarray, dissipation: np.ndarray, noise: np.ndarray) -> str:
    return _write_columns(path, ("tau", lags),
                          [_matrix_columns("F", dissipation), _matrix_columns("G", noise)])


def write_green_csv(path: str, trajectory) -> str:
    return _write_columns(path, ("t", trajectory.times),
                          [_matrix_columns("V", trajectory.green),
                           _matrix_columns("dV", trajectory.derivative)],
                          [("abs_det_V", np.abs(trajectory.determinants())),
                           ("near_singular", trajectory.singular_mask)])


def write_coeffs_csv(path: str, track) -> str:
    return _write_columns(path, ("t", track.times),
                          [_matrix_columns("gamma", track.gamma), _vector_columns("xi", track.xi),
                           _matrix_columns("lambda", track.lam)],
                          [("pole_flag", track.pole_flags)])


def write_trajectory_csv(path: str, trajectory) -> str:
    lowering_name = "sigma_minus" if trajectory.sigma_z is not None else "a"
    blocks = [_vector_columns(lowering_name, trajectory.lowering)]
    if trajectory.sigma_z is not None:
        trailing = [("sigma_z", trajectory.sigma_z)]
    else:
        number = np.asarray(trajectory.number)
        modes = number.shape[1]
        trailing = [(f"n_{j}" if modes > 1 else "n", number[:, j]) for j in range(modes)]
    trailing += [("trace_error", trajectory.trace_error),
                 ("min_eigenvalue", trajectory.min_eigenvalue)]
    return _write_columns(path, ("t", trajectory.times), blocks, trailing)


def write_moment_csv(path: str, times: np.ndarray, moment: np.ndarray) -> str:
    return _write_columns(path, ("t", times), [_vector_columns("a", moment)])


def write_sweep_csv(path: str, result) -> str:
    rows = ((r.value, r.sigma_z, complex(r.sigma_minus).real, complex(r.sigma_minus).imag,
             r.residual, r.normalized_violation, r.cutoff, r.converged) for r in result.records)
    return write_rows(path, SWEEP_HEADER, rows)
