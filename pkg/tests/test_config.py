import numpy as np
import pytest

from irseg.config import DEFAULTS, RunConfig, load_config
from irseg.errors import UsageError
from irseg.features import FeatureSpec


def write_toml(tmp_path, text, name="run.toml"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_defaults_without_a_file():
    cfg = load_config(None)
    assert cfg.family() == "gda"
    assert cfg.seed() == 0
    assert cfg.feature_spec() == FeatureSpec("x3", "single", 1, 1.0)
    assert cfg.site().elevation_km == 1.52
    scene = cfg.scene()
    assert scene.seed == 0 and scene.width == 80


def test_file_overlays_defaults(tmp_path):
    path = write_toml(tmp_path, """
[model]
family = "svc"
C = 12.5

[features]
variant = "x4"
neighborhood = "second"
""")
    cfg = load_config(path)
    assert cfg.family() == "svc"
    assert cfg.model_hyper() == {"C": 12.5}
    assert cfg.feature_spec() == FeatureSpec("x4", "second", 1, 1.0)
    # untouched sections keep their defaults
    assert cfg["preprocess"]["quantile"] == 0.05
    assert DEFAULTS["model"]["family"] == "gda"   # no mutation


def test_unknown_entries_fail_loudly(tmp_path):
    with pytest.raises(UsageError, match="unknown config entry 'modl'"):
        load_config(write_toml(tmp_path, "[modl]\nfamily = 'gda'\n"))
    with pytest.raises(UsageError, match="'model.familly'"):
        load_config(write_toml(tmp_path, "[model]\nfamilly = 'gda'\n"))
    with pytest.raises(UsageError, match="'synth.blobs'"):
        load_config(write_toml(tmp_path, "[synth]\nblobs = 3\n"))
    with pytest.raises(UsageError, match="must be a table"):
        load_config(write_toml(tmp_path, "model = 3\n"))


def test_bad_files(tmp_path):
    with pytest.raises(UsageError, match="invalid TOML"):
        load_config(write_toml(tmp_path, "[model\n"))
    with pytest.raises(UsageError, match="cannot read config"):
        load_config(tmp_path / "missing.toml")


def test_synth_section_and_presets(tmp_path):
    cfg = load_config(write_toml(tmp_path, """
[synth]
preset = "easy"
n_frames = 8
n_train = 5
"""))
    scene = cfg.scene()
    assert scene.n_frames == 8 and scene.n_train == 5
    assert "covered" not in scene.kinds()
    assert cfg.scene(seed=7).seed == 7

    plain = load_config(write_toml(tmp_path, """
[synth]
noise_sigma_ck = 10.0
""", name="p.toml"))
    assert plain.scene().noise_sigma_ck == 10.0

    bad = load_config(write_toml(tmp_path, "[synth]\npreset = 'hard'\n",
                                 name="b.toml"))
    with pytest.raises(UsageError, match="unknown synth preset"):
        bad.scene()


def test_model_hyper_per_family():
    cfg = load_config(None)
    assert cfg.model_hyper("gda") == {"gamma_cov": 1.0}
    assert cfg.model_hyper("nbc") == {}
    assert cfg.model_hyper("kmeans") == {}
    assert cfg.model_hyper("gmm") == {"gamma_cov": 1.0}
    assert cfg.model_hyper("rr") == {"gamma": 1.0}
    assert cfg.model_hyper("svc") == {"C": 1.0}
    assert cfg.model_hyper("gp") == {"gamma": 1.0}
    mrf = cfg.model_hyper("mrf")
    assert mrf["beta"] == 1.0 and mrf["clique_order"] == 1
    assert mrf["inference"] == "sweep"
    # the sa_t0 = 0 sentinel maps to "presample from the data"
    assert mrf["sa_t0"] is None
    with pytest.raises(UsageError, match="unknown model family"):
        cfg.model_hyper("forest")


def test_lambda_grid_matches_logspace(tmp_path):
    cfg = load_config(None)
    np.testing.assert_array_equal(cfg.lambda_grid(),
                                  np.logspace(-2.0, 2.0, 101))
    assert 1.0 in cfg.lambda_grid()
    bad = load_config(write_toml(tmp_path, "[lambda]\nlo = -1.0\n"))
    with pytest.raises(UsageError, match="lambda grid"):
        bad.lambda_grid()
    bad2 = load_config(write_toml(tmp_path, "[lambda]\npoints = 1\n",
                                  name="b.toml"))
    with pytest.raises(UsageError, match="lambda grid"):
        bad2.lambda_grid()


def test_cv_grids():
    cfg = load_config(None)
    specs = cfg.cv_spec_grid()
    assert [s.variant for s in specs] == ["x1", "x3", "x4"]
    assert all(s.neighborhood == "single" and s.expansion_order == 1
               for s in specs)
    assert len(cfg.cv_hyper_grid("gda")) == 3
    assert cfg.cv_hyper_grid("nbc") == [{}]
    assert cfg.cv_hyper_grid("kmeans") == [{}]
    assert len(cfg.cv_hyper_grid("gmm")) == 3
    assert len(cfg.cv_hyper_grid("rr")) == 5
    assert len(cfg.cv_hyper_grid("svc")) == 5
    assert len(cfg.cv_hyper_grid("gp")) == 5
    mrf = cfg.cv_hyper_grid("mrf")
    assert len(mrf) == 9                     # 3 beta x 1 clique x 3 gamma
    assert all(set(h) == {"beta", "clique_order", "gamma_cov"} for h in mrf)
    icm = cfg.cv_hyper_grid("icm-mrf")
    assert len(icm) == 3                     # gamma_cov pinned to [model]
    assert all(h["gamma_cov"] == 1.0 for h in icm)
    with pytest.raises(UsageError, match="unknown model family"):
        cfg.cv_hyper_grid("forest")


def test_typed_accessors_construct_pipeline_objects():
    cfg = load_config(None)
    pre = cfg.preprocessor()
    assert pre.quantile == 0.05
    assert pre.site.surface_temperature_ck == 28815.0
    assert isinstance(cfg, RunConfig) and cfg["vote"]["split"] == "test"
