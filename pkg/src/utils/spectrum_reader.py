"""Reader for tabulated spectral densities.

Files are whitespace- or comma-separated text with two columns, frequency and
J(w), measured from the drive frequency. Lines starting with ``#`` are comments.
"""

import os
from typing import Tuple

import numpy as np

from ..errors import SpectrumParseError
from ..spectral import SpectralModel


def parse_spectrum_file(path: str) -> Tuple[np.ndarray, np.ndarray]:
    """Read (frequencies, density) columns from a spectrum file.

    Raises:
        FileNotFoundError: If the file doesn't exist.
        SpectrumParseError: If the columns are missing, non-numeric or unsorted.
    """
    if not os.path.exists(path):
        raise FileNotFoundError(f"Spectrum file not found: {path}")

    with open(path, "r", encoding="utf-8") as file:
        text = file.read().replace(",", " ")
    try:
        table = np.loadtxt(text.splitlines(), comments="#", ndmin=2)
    except ValueError as exc:
        raise SpectrumParseError(f"cannot parse {path}: {exc}", field="spectrum_file") from exc

    if table.shape[1] != 2:
        raise SpectrumParseError(f"{path} has {table.shape[1]} columns, expected 2", field="spectrum_file")
    if table.shape[0] < 2:
        raise SpectrumParseError(f"{path} needs at least two rows", field="spectrum_file")
    frequencies, density = table[:, 0], table[:, 1]
    if np.any(np.diff(frequencies) <= 0):
        raise SpectrumParseError(f"{path}: frequencies must be strictly increasing", field="spectrum_file")
    if np.any(density < 0):
        raise SpectrumParseError(f"{path}: spectral density must be non-negative", field="spectrum_file")
    return frequencies, density


def load_tabulated_model(path: str, temperature: float = 0.0) -> SpectralModel:
    """Tabulated ``SpectralModel`` from a spectrum file."""
    frequencies, density = parse_spectrum_file(path)
    return SpectralModel.tabulated(frequencies, density, temperature=temperature)
