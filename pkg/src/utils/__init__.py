"""Utilities package for file input/output and reporting."""

from .csv_writer import (write_coeffs_csv, write_green_csv, write_kernel_csv, write_moment_csv,
                         write_rows, write_sweep_csv, write_trajectory_csv)
from .json_reader import load_run_config
from .report_generator import build_report, generate_sweep_summary_report, write_json_report
from .spectrum_reader import load_tabulated_model, parse_spectrum_file

__all__ = [
    'write_coeffs_csv', 'write_green_csv', 'write_kernel_csv', 'write_moment_csv', 'write_rows',
    'write_sweep_csv', 'write_trajectory_csv', 'load_run_config', 'build_report',
    'generate_sweep_summary_report', 'write_json_report', 'load_tabulated_model',
    'parse_spectrum_file',
]
