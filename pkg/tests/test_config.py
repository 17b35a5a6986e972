import pytest

from stentmech.config import RunConfig, apply_overrides, load_config, parse_config_text
from stentmech.errors import ConfigError


def test_defaults_round_trip():
    cfg = RunConfig()
    again = parse_config_text(cfg.to_text())
    assert again.to_text() == cfg.to_text()


def test_unknown_key_rejected():
    with pytest.raises(ConfigError, match="unknown config key"):
        parse_config_text("gmm.nonexistent = 3\n")


def test_bad_value_rejected():
    with pytest.raises(ConfigError, match="bad value"):
        parse_config_text("gmm.max_iter = not_a_number\n")


def test_material_override_keys():
    cfg = parse_config_text("material.media.k1 = 0.7\nmaterial.calcification.E = 2.0\n")
    assert cfg.material_overrides == {"media": {"k1": 0.7}, "calcification": {"E": 2.0}}
    with pytest.raises(ConfigError):
        parse_config_text("material.media.bogus = 1\n")
    with pytest.raises(ConfigError):
        parse_config_text("material.steel.E = 1\n")


def test_threshold_grid():
    cfg = RunConfig()
    taus = cfg.thresholds()
    assert taus[0] == 5.0 and taus[-1] == 100.0 and len(taus) == 20
    cfg.analysis_threshold_step = -1.0
    with pytest.raises(ConfigError):
        cfg.thresholds()


def test_overrides_and_file(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("mesh.n_sectors = 24  # comment\n\ngmm.tol = 1e-8\n")
    cfg = load_config(path)
    assert cfg.mesh_n_sectors == 24 and cfg.gmm_tol == 1e-8
    cfg2 = apply_overrides(cfg, ["mesh.n_sectors=48"])
    assert cfg2.mesh_n_sectors == 48
    assert cfg.mesh_n_sectors == 24  # original untouched
    with pytest.raises(ConfigError):
        apply_overrides(cfg, ["mesh.n_sectors"])


def test_init_means_list():
    cfg = parse_config_text("gmm.init_means = 10, 50, 100, 400\n")
    assert cfg.gmm_init_means == (10.0, 50.0, 100.0, 400.0)


def test_layers_choice_validated():
    assert parse_config_text("analysis.layers = intima\n").analysis_layers == "intima"
    with pytest.raises(ConfigError):
        parse_config_text("analysis.layers = adventitia_only\n")
