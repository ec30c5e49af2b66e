import pytest

from giscsim.config import ExperimentConfig, derive_seed, load_config
from giscsim.errors import ConfigError


class TestLoadConfig:
    def test_defaults_without_file(self):
        cfg = load_config(None)
        assert cfg.sensing.n == 16
        assert cfg.optics.screen_size == 512
        assert cfg.recon.algorithm == "cs_fista"

    def test_file_then_overrides(self, tmp_path):
        path = tmp_path / "e.toml"
        path.write_text(
            """
[experiment]
out_dir = "runs/a"
master_seed = 5

[optics]
corr_len_um = 8.0

[sensing]
n = 8
m = 16
bands = 4
"""
        )
        cfg = load_config(path, ["optics.corr_len_um=24.0", "experiment.master_seed=9"])
        assert cfg.optics.corr_len_um == 24.0
        assert cfg.master_seed == 9
        assert cfg.sensing.n == 8
        assert cfg.out_dir == "runs/a"

    def test_wavelength_grid(self):
        cfg = load_config(None, ["sensing.bands=15"])
        wl = cfg.sensing.wavelengths()
        assert len(wl) == 15
        assert wl[0] == 560.0 and wl[-1] == 700.0
        assert wl[1] == pytest.approx(570.0)

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "bad.toml"
        path.write_text("[optics]\nbogus = 1\n")
        with pytest.raises(ConfigError, match="bogus"):
            load_config(path)

    def test_missing_file(self):
        with pytest.raises(ConfigError, match="not found"):
            load_config("does/not/exist.toml")

    def test_bad_override_shape(self):
        with pytest.raises(ConfigError):
            load_config(None, ["justakey"])
        with pytest.raises(ConfigError):
            load_config(None, ["nosuch.section=3"])

    def test_string_override(self):
        cfg = load_config(None, ['recon.transform="dct2_per_band"'])
        assert cfg.recon.transform == "dct2_per_band"


class TestHashAndSeeds:
    def test_hash_ignores_out_dir_and_workers(self):
        a = load_config(None, ['experiment.out_dir="x"', "experiment.workers=1"])
        b = load_config(None, ['experiment.out_dir="y"', "experiment.workers=8"])
        assert a.config_hash() == b.config_hash()

    def test_hash_tracks_experiment_fields(self):
        a = load_config(None)
        b = load_config(None, ["sensing.m=64"])
        c = load_config(None, ["experiment.master_seed=1"])
        assert a.config_hash() != b.config_hash()
        assert a.config_hash() != c.config_hash()

    def test_derive_seed_stable_and_distinct(self):
        a = derive_seed(7, "measure", "rayleigh", "slice_0")
        assert a == derive_seed(7, "measure", "rayleigh", "slice_0")
        assert a != derive_seed(7, "measure", "rayleigh", "slice_1")
        assert a != derive_seed(8, "measure", "rayleigh", "slice_0")
        assert 0 <= a < 2**64

    def test_default_config_roundtrips_to_dict(self):
        cfg = ExperimentConfig()
        d = cfg.to_dict()
        assert d["sensing"]["bands"] == 8
        assert d["recon"]["algorithm"] == "cs_fista"


class TestDataHash:
    def test_data_hash_ignores_recon_settings(self):
        a = load_config(None)
        b = load_config(None, ["recon.max_iters=999", 'recon.transform="dct2_per_band"'])
        assert a.data_hash() == b.data_hash()
        assert a.config_hash() != b.config_hash()

    def test_data_hash_tracks_sensing(self):
        a = load_config(None)
        b = load_config(None, ["sensing.target_snr_db=12.0"])
        assert a.data_hash() != b.data_hash()
