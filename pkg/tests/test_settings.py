import pytest
from pydantic import ValidationError

from src.errors import ConfigurationError
from src.presets import PRESETS, get_preset, list_presets
from src.settings import RunConfig, get_settings


@pytest.mark.unit
class TestSettings:

    def test_defaults(self):
        settings = get_settings()
        assert settings.omega0 == 1000.0
        assert settings.cutoff_step == 5
        assert settings.csv_precision == 17

    def test_environment_override(self, monkeypatch):
        monkeypatch.setenv("TLME_OMEGA0", "250")
        monkeypatch.setenv("TLME_SWEEP_WORKERS", "3")
        settings = get_settings()
        assert settings.omega0 == 250.0
        assert settings.sweep_workers == 3

    def test_invalid_environment(self, monkeypatch):
        monkeypatch.setenv("TLME_CUTOFF_TOLERANCE", "-1")
        with pytest.raises(ValidationError):
            get_settings()

    def test_dotenv_file(self, workdir):
        (workdir / ".env").write_text("TLME_DEFAULT_CUTOFF=14\n", encoding="utf-8")
        assert get_settings().default_cutoff == 14


@pytest.mark.unit
class TestRunConfig:

    def test_defaults(self):
        cfg = RunConfig(command="green")
        assert cfg.stem == "run"
        assert cfg.steps == 1000

    def test_rejects_unknown_keys(self):
        with pytest.raises(ValidationError):
            RunConfig(command="green", colour="blue")

    def test_lorentzian_needs_width(self):
        with pytest.raises(ValidationError):
            RunConfig(command="green", linewidth=0.0)

    def test_markov_without_width(self):
        assert RunConfig(command="green", spectrum="markovian", linewidth=0.0).spectrum == "markovian"

    def test_drive_from_ratio(self):
        cfg = RunConfig(command="sweep", linewidth=0.25, omega_over_lambda=4.0, drive=9.0)
        assert cfg.drive == pytest.approx(1.0)

    def test_complex_amplitude(self):
        assert RunConfig(command="evolve", initial_amplitude=0.5 + 0.5j).initial_amplitude == 0.5 + 0.5j


@pytest.mark.unit
class TestPresets:

    def test_every_preset_builds_a_run(self):
        for name, preset in PRESETS.items():
            values = preset.model_dump(exclude={"name", "provenance"})
            cfg = RunConfig(command="evolve", preset=name, **values)
            assert cfg.stem == name

    def test_blockade_parameters(self):
        preset = get_preset("photon-blockade")
        assert (0.5 * preset.gamma / preset.linewidth) ** 0.5 == pytest.approx(100.0)
        assert preset.drive / preset.linewidth == pytest.approx(22.0)
        assert preset.sweep_points == 201

    def test_unknown_preset(self):
        with pytest.raises(ConfigurationError) as excinfo:
            get_preset("missing")
        assert excinfo.value.field == "preset"

    def test_list_presets_has_provenance(self):
        listing = list_presets()
        assert set(listing) == set(PRESETS)
        assert all(listing.values())
