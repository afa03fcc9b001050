"""Run configuration: TOML file over defaults, flags over both.

One file drives every subcommand; each section corresponds to one pipeline
stage.  Unknown sections or keys are rejected (typos should fail loudly, as
a usage error).
"""

from __future__ import annotations

import copy
import itertools
from pathlib import Path

import numpy as np

try:
    import tomllib  # Python >= 3.11
except ModuleNotFoundError:  # pragma: no cover - depends on interpreter
    import tomli as tomllib

from .errors import UsageError
from .features import FeatureSpec
from .grid import SiteParams
from .pipeline import Preprocessor
from .synth import SceneConfig

DEFAULTS: dict = {
    "site": {
        "lapse_rate_k_per_km": 9.8,
        "tropopause_height_km": 11.5,
        "elevation_km": 1.52,
        "surface_temperature_ck": 28815.0,
    },
    "preprocess": {
        "quantile": 0.05,
        "buffer_capacity": 250,
        "persistence": 3,
        "clear_fraction": 0.0,
        "flow_window": 9,
        "flow_sigma": 2.0,
    },
    "features": {
        "variant": "x3",
        "neighborhood": "single",
        "expansion_order": 1,
        "expansion_bias": 1.0,
    },
    "model": {
        "family": "gda",
        "seed": 0,
        "gamma_cov": 1.0,
        "beta": 1.0,
        "clique_order": 1,
        "gamma": 1.0,
        "C": 1.0,
        "inference": "sweep",
        "sa_t0": 0.0,          # 0 -> presample from the data
        "sa_alpha": 0.75,
        "sa_max_steps": 1000,
        "max_sweeps": 100,
    },
    "lambda": {
        "lo": 0.01,
        "hi": 100.0,
        "points": 101,
    },
    "cv": {
        "variants": ["x1", "x3", "x4"],
        "neighborhoods": ["single"],
        "expansion_orders": [1],
        "gamma_cov": [0.1, 1.0, 10.0],
        "beta": [0.5, 1.0, 2.0],
        "clique_orders": [1],
        "gamma": [0.0001, 0.01, 1.0, 100.0, 10000.0],
        "C": [0.0001, 0.01, 1.0, 100.0, 10000.0],
    },
    "synth": {},   # SceneConfig field overrides
    "vote": {
        "hard": False,
        "split": "test",
    },
}

_FAMILY_HYPER_KEYS = {
    "gda": ("gamma_cov",),
    "nbc": (),
    "gmm": ("gamma_cov",),
    "kmeans": (),
    "mrf": ("beta", "clique_order", "gamma_cov", "inference",
            "sa_t0", "sa_alpha", "sa_max_steps"),
    "icm-mrf": ("beta", "clique_order", "gamma_cov", "inference",
                "sa_t0", "sa_alpha", "sa_max_steps"),
    "rr": ("gamma",),
    "svc": ("C",),
    "gp": ("gamma",),
}


class RunConfig:
    """Merged configuration with typed accessors."""

    def __init__(self, data: dict):
        self.data = data

    def __getitem__(self, section: str) -> dict:
        return self.data[section]

    def site(self) -> SiteParams:
        return SiteParams(**self.data["site"])

    def feature_spec(self) -> FeatureSpec:
        return FeatureSpec(**self.data["features"])

    def preprocessor(self) -> Preprocessor:
        return Preprocessor(site=self.site(), **self.data["preprocess"])

    def family(self) -> str:
        return self.data["model"]["family"]

    def seed(self) -> int:
        return int(self.data["model"]["seed"])

    def model_hyper(self, family: str | None = None) -> dict:
        family = family or self.family()
        if family not in _FAMILY_HYPER_KEYS:
            raise UsageError(f"unknown model family {family!r}")
        model = self.data["model"]
        hyper = {k: model[k] for k in _FAMILY_HYPER_KEYS[family]}
        if hyper.get("sa_t0") == 0.0:
            hyper["sa_t0"] = None
        return hyper

    def lambda_grid(self) -> np.ndarray:
        lam = self.data["lambda"]
        if lam["lo"] <= 0 or lam["hi"] <= lam["lo"] or lam["points"] < 2:
            raise UsageError("invalid lambda grid bounds")
        return np.logspace(np.log10(lam["lo"]), np.log10(lam["hi"]),
                           int(lam["points"]))

    def cv_spec_grid(self) -> list[FeatureSpec]:
        cv = self.data["cv"]
        bias = self.data["features"]["expansion_bias"]
        return [FeatureSpec(v, n, o, bias)
                for o, n, v in itertools.product(
                    cv["expansion_orders"], cv["neighborhoods"], cv["variants"])]

    def cv_hyper_grid(self, family: str | None = None) -> list[dict]:
        family = family or self.family()
        cv = self.data["cv"]
        if family in ("gda", "gmm"):
            return [{"gamma_cov": g} for g in cv["gamma_cov"]]
        if family in ("nbc", "kmeans"):
            return [{}]
        if family in ("mrf", "icm-mrf"):
            fixed_gamma = (self.data["model"]["gamma_cov"],) \
                if family == "icm-mrf" else tuple(cv["gamma_cov"])
            return [{"beta": b, "clique_order": c, "gamma_cov": g}
                    for b, c, g in itertools.product(
                        cv["beta"], cv["clique_orders"], fixed_gamma)]
        if family == "rr":
            return [{"gamma": g} for g in cv["gamma"]]
        if family == "svc":
            return [{"C": c} for c in cv["C"]]
        if family == "gp":
            return [{"gamma": g} for g in cv["gamma"]]
        raise UsageError(f"unknown model family {family!r}")

    def scene(self, seed: int | None = None) -> SceneConfig:
        overrides = dict(self.data["synth"])
        preset = overrides.pop("preset", "default")
        if seed is not None:
            overrides["seed"] = seed
        if "frame_kinds" in overrides:
            overrides["frame_kinds"] = tuple(overrides["frame_kinds"])
        for key in ("debris_sigma_px", "clouds_per_frame", "peak_range_ck",
                    "sigma_range_px", "covered_sigma_px"):
            if key in overrides:
                overrides[key] = tuple(overrides[key])
        if preset == "easy":
            return SceneConfig.easy(**overrides)
        if preset != "default":
            raise UsageError(f"unknown synth preset {preset!r}")
        return SceneConfig(**overrides)


def _merge(base: dict, override: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        where = f"{path}.{key}" if path else key
        if key not in base:
            raise UsageError(f"unknown config entry {where!r}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise UsageError(f"config entry {where!r} must be a table")
            out[key] = _merge(base[key], value, where)
        else:
            out[key] = value
    return out


def load_config(path=None) -> RunConfig:
    """Parse a TOML config and overlay it on the defaults."""
    if path is None:
        return RunConfig(copy.deepcopy(DEFAULTS))
    path = Path(path)
    try:
        raw = tomllib.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise UsageError(f"{path}: invalid TOML: {exc}") from exc
    # [synth] keys mirror SceneConfig; validate against its fields
    synth = raw.get("synth", {})
    if synth:
        valid = set(SceneConfig.__dataclass_fields__) | {"preset"}
        for key in synth:
            if key not in valid:
                raise UsageError(f"unknown config entry 'synth.{key}'")
    base = copy.deepcopy(DEFAULTS)
    base["synth"] = dict(synth)
    raw = {k: v for k, v in raw.items()}
    raw.pop("synth", None)
    return RunConfig(_merge(base, raw))
