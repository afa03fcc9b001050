"""Versioned JSON serialization of trained segmenters and ensembles.

Model files are self-contained: feature spec, site constants, frozen
preprocessor state (including the window artifact), decision lambda, and the
family-specific parameters.  Floats round-trip exactly through ``repr``, so
saving and reloading is bit-stable.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .discriminative import LinearModel
from .errors import DataError, UsageError
from .features import FeatureSpec
from .generative import GaussianClassModel, KMeansModel
from .grid import SiteParams
from .models import FittedFamily
from .mrf import MrfModel, SaSchedule
from .pgm import atomic_write_text
from .pipeline import Preprocessor, TrainedSegmenter

SCHEMA_VERSION = 1


def _params_dict(fitted: FittedFamily) -> dict:
    payload = fitted.payload
    if isinstance(payload, GaussianClassModel):
        return {"means": payload.means.tolist(),
                "covariances": payload.covariances.tolist(),
                "priors": payload.priors.tolist(),
                "kind": payload.kind,
                "gamma_cov": payload.gamma_cov}
    if isinstance(payload, KMeansModel):
        return {"centers": payload.centers.tolist(),
                "feature_mean": payload.feature_mean.tolist(),
                "feature_scale": payload.feature_scale.tolist()}
    if isinstance(payload, MrfModel):
        return {"means": payload.means.tolist(),
                "covariances": payload.covariances.tolist(),
                "beta": payload.beta,
                "clique_order": payload.clique_order,
                "gamma_cov": payload.gamma_cov}
    if isinstance(payload, LinearModel):
        return {"kind": payload.kind,
                "weights": payload.weights.tolist(),
                "hyper": payload.hyper,
                "sigma_n": None if payload.sigma_n is None
                else payload.sigma_n.tolist()}
    raise UsageError(f"cannot serialize payload of type {type(payload).__name__}")


def _params_load(family: str, params: dict):
    if family in ("gda", "nbc", "gmm"):
        return GaussianClassModel(
            np.array(params["means"]), np.array(params["covariances"]),
            np.array(params["priors"]), params["kind"], params["gamma_cov"])
    if family == "kmeans":
        return KMeansModel(np.array(params["centers"]),
                           np.array(params["feature_mean"]),
                           np.array(params["feature_scale"]))
    if family in ("mrf", "icm-mrf"):
        return MrfModel(np.array(params["means"]),
                        np.array(params["covariances"]),
                        params["beta"], params["clique_order"],
                        params["gamma_cov"])
    if family in ("rr", "svc", "gp"):
        sigma = params["sigma_n"]
        return LinearModel(params["kind"], np.array(params["weights"]),
                           dict(params["hyper"]),
                           None if sigma is None else np.array(sigma))
    raise DataError(f"unknown family {family!r} in model file")


def save_model(path, segmenter: TrainedSegmenter) -> None:
    fitted = segmenter.fitted
    doc = {
        "schema_version": SCHEMA_VERSION,
        "family": fitted.family,
        "feature_spec": fitted.spec.to_dict(),
        "lambda": segmenter.lam,
        "train_j": segmenter.train_j,
        "site": segmenter.preprocessor.site.to_dict(),
        "preprocess": segmenter.preprocessor.to_dict(),
        "flip": fitted.flip,
        "inference": fitted.inference,
        "sa": None if fitted.schedule is None else {
            "t0": fitted.schedule.t0, "alpha": fitted.schedule.alpha,
            "max_steps": fitted.schedule.max_steps,
            "seed": fitted.schedule.seed},
        "params": _params_dict(fitted),
    }
    atomic_write_text(path, json.dumps(doc, indent=2, sort_keys=True) + "\n")


def load_model(path) -> TrainedSegmenter:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise DataError(f"cannot read model file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: malformed model JSON: {exc}") from exc
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise DataError(f"{path}: unsupported model schema version {version!r}")
    pre = doc["preprocess"]
    preproc = Preprocessor(
        site=SiteParams.from_dict(doc["site"]),
        quantile=pre["quantile"],
        buffer_capacity=pre["buffer_capacity"],
        persistence=pre["persistence"],
        clear_fraction=pre["clear_fraction"],
        flow_window=pre["flow_window"],
        flow_sigma=pre["flow_sigma"],
        artifact=None if pre["artifact"] is None
        else np.array(pre["artifact"], dtype=np.float64))
    schedule = doc.get("sa")
    fitted = FittedFamily(
        family=doc["family"],
        spec=FeatureSpec.from_dict(doc["feature_spec"]),
        payload=_params_load(doc["family"], doc["params"]),
        flip=doc["flip"],
        inference=doc.get("inference", "sweep"),
        schedule=None if schedule is None else SaSchedule(**schedule))
    return TrainedSegmenter(preproc, fitted, doc["lambda"], doc.get("train_j"))


def save_ensemble(path, member_paths, lam: float, *, hard: bool = False,
                  validation_j: float | None = None) -> None:
    """Record a voting ensemble as member model files plus the tuned lambda.

    Member paths are stored relative to the ensemble file when possible.
    """
    path = Path(path)
    members = []
    for p in member_paths:
        p = Path(p)
        try:
            members.append(str(p.resolve().relative_to(path.resolve().parent)))
        except ValueError:
            members.append(str(p.resolve()))
    doc = {"schema_version": SCHEMA_VERSION, "kind": "vote",
           "members": members, "lambda": lam, "hard": hard,
           "validation_j": validation_j}
    atomic_write_text(path, json.dumps(doc, indent=2, sort_keys=True) + "\n")


def load_ensemble(path) -> tuple[list[TrainedSegmenter], float, bool]:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise DataError(f"cannot read ensemble file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: malformed ensemble JSON: {exc}") from exc
    if doc.get("schema_version") != SCHEMA_VERSION or doc.get("kind") != "vote":
        raise DataError(f"{path}: not a supported ensemble file")
    members = [load_model(path.parent / m if not Path(m).is_absolute() else m)
               for m in doc["members"]]
    return members, doc["lambda"], doc.get("hard", False)
