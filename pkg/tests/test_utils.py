import csv
import json

import numpy as np
import pytest

from src.coeffs import Drive, build_coefficients
from src.errors import ConfigurationError, SpectrumParseError
from src.evolve import Basis, TlmeTrajectory
from src.utils.csv_writer import (BOSON_HEADER, COEFFS_HEADER, GREEN_HEADER, KERNEL_HEADER, MOMENT_HEADER,
                                  QUBIT_HEADER, format_value, write_coeffs_csv, write_green_csv,
                                  write_kernel_csv, write_moment_csv, write_rows, write_trajectory_csv)
from src.utils.json_reader import load_run_config
from src.utils.spectrum_reader import load_tabulated_model, parse_spectrum_file
from src.volterra import CouplingMatrix, trajectory_from_values


def _trajectory(qubit: bool) -> TlmeTrajectory:
    times = np.array([0.0, 0.5])
    return TlmeTrajectory(times=times, basis=Basis.QUBIT if qubit else Basis.BOSON_FOCK,
                          lowering=np.array([[0.0], [0.1 - 0.2j]]), number=np.array([[0.0], [0.05]]),
                          trace_error=np.zeros(2), hermiticity_error=np.zeros(2),
                          min_eigenvalue=np.zeros(2), final_state=np.eye(2) / 2,
                          sigma_z=np.array([-1.0, -0.9]) if qubit else None)


@pytest.mark.unit
class TestCsvWriter:

    def test_format_value(self):
        assert format_value(True) == "true"
        assert format_value(np.bool_(False)) == "false"
        assert format_value(None) == ""
        assert format_value(np.int64(12)) == "12"
        assert format_value(0.1) == "0.10000000000000001"
        assert format_value(0.1, precision=6) == "0.1"
        assert format_value(float("nan")) == "nan"

    def test_write_rows_creates_directory(self, tmp_path):
        path = write_rows(str(tmp_path / "a" / "b.csv"), ["x", "y"], [(1, 0.5), (2, 0.25)])
        with open(path, encoding="utf-8") as f:
            assert f.read() == "x,y\n1,0.5\n2,0.25\n"

    @pytest.mark.parametrize("qubit,header", [(True, QUBIT_HEADER), (False, BOSON_HEADER)])
    def test_trajectory_header(self, tmp_path, qubit, header):
        path = write_trajectory_csv(str(tmp_path / "run.csv"), _trajectory(qubit))
        with open(path, newline="", encoding="utf-8") as f:
            rows = list(csv.reader(f))
        assert rows[0] == header
        assert float(rows[2][2]) == pytest.approx(-0.2)

    def test_single_subsystem_headers(self, tmp_path):
        traj = trajectory_from_values([0.0, 0.1], [1.0, 0.9], [-0.5, -0.4], CouplingMatrix.diagonal(0.0))
        green = write_green_csv(str(tmp_path / "g.csv"), traj)
        coeffs = write_coeffs_csv(str(tmp_path / "c.csv"), build_coefficients(traj, Drive.zero()))
        with open(green, newline="", encoding="utf-8") as f:
            assert next(csv.reader(f)) == GREEN_HEADER
        with open(coeffs, newline="", encoding="utf-8") as f:
            assert next(csv.reader(f)) == COEFFS_HEADER

    def test_two_subsystems_write_every_entry(self, tmp_path):
        green = np.stack([np.eye(2), [[0.9, 0.05j], [0.02, 0.8]]]).astype(complex)
        traj = trajectory_from_values([0.0, 0.1], green, -np.ones((2, 2, 2)),
                                      CouplingMatrix.diagonal(0.0, 0.0))
        path = write_green_csv(str(tmp_path / "g.csv"), traj)
        with open(path, newline="", encoding="utf-8") as f:
            rows = list(csv.reader(f))
        header = rows[0]
        assert len(header) == 1 + 16 + 2
        assert header[1:9] == ["re_V_00", "im_V_00", "re_V_01", "im_V_01",
                               "re_V_10", "im_V_10", "re_V_11", "im_V_11"]
        assert float(rows[2][header.index("im_V_01")]) == pytest.approx(0.05)
        assert float(rows[2][header.index("re_V_10")]) == pytest.approx(0.02)

        track = build_coefficients(traj, Drive.zero(2))
        path = write_coeffs_csv(str(tmp_path / "c.csv"), track)
        with open(path, newline="", encoding="utf-8") as f:
            header = next(csv.reader(f))
        assert "re_gamma_11" in header and "re_xi_1" in header and "im_lambda_01" in header
        assert header[-1] == "pole_flag"

    def test_kernel_header(self, tmp_path):
        lags = np.array([0.0, 0.1])
        path = write_kernel_csv(str(tmp_path / "k.csv"), lags, np.ones((2, 1, 1)), np.zeros((2, 1, 1)))
        with open(path, newline="", encoding="utf-8") as f:
            assert next(csv.reader(f)) == KERNEL_HEADER

    def test_moment(self, tmp_path):
        path = write_moment_csv(str(tmp_path / "m.csv"), np.array([0.0, 1.0]),
                                np.array([[1.0 + 0j], [0.5 - 0.5j]]))
        with open(path, encoding="utf-8") as f:
            lines = f.read().splitlines()
        assert lines[0] == ",".join(MOMENT_HEADER)
        assert lines[-1] == "1,0.5,-0.5"


@pytest.mark.unit
class TestSpectrumReader:

    def test_parse(self, spectrum_file):
        frequencies, density = parse_spectrum_file(spectrum_file)
        assert frequencies.size == 1601
        assert density.max() == pytest.approx(1.0 / np.sqrt(2.0 * np.pi))

    def test_comma_separated(self, tmp_path):
        path = tmp_path / "j.csv"
        path.write_text("0,1\n1,2\n2,0.5\n", encoding="utf-8")
        frequencies, density = parse_spectrum_file(str(path))
        assert list(density) == [1.0, 2.0, 0.5]

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            parse_spectrum_file(str(tmp_path / "absent.txt"))

    @pytest.mark.parametrize("content", [
        "0 1 2\n1 2 3\n",
        "0 1\n",
        "1 1\n0 1\n",
        "0 1\n1 -1\n",
        "0 one\n1 2\n",
    ])
    def test_rejects_bad_tables(self, tmp_path, content):
        path = tmp_path / "bad.txt"
        path.write_text(content, encoding="utf-8")
        with pytest.raises(SpectrumParseError) as excinfo:
            parse_spectrum_file(str(path))
        assert excinfo.value.field == "spectrum_file"
        assert excinfo.value.exit_code == 2

    def test_model(self, spectrum_file):
        model = load_tabulated_model(spectrum_file, temperature=10.0)
        assert model.temperature == 10.0
        assert not model.is_exponential


@pytest.mark.unit
class TestJsonReader:

    def test_flattens_sweep(self, run_config_file):
        data = load_run_config(run_config_file({"step": 0.1, "sweep": {"start": 0, "points": 3}}))
        assert data == {"step": 0.1, "sweep_start": 0, "sweep_points": 3}

    def test_missing(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_run_config(str(tmp_path / "none.json"))

    def test_malformed(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json", encoding="utf-8")
        with pytest.raises(ConfigurationError):
            load_run_config(str(path))

    def test_not_an_object(self, tmp_path):
        path = tmp_path / "list.json"
        path.write_text(json.dumps([1, 2]), encoding="utf-8")
        with pytest.raises(ConfigurationError):
            load_run_config(str(path))
