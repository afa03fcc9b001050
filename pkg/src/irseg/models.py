"""One facade over all segmentation model families.

``fit_family`` trains any of the nine models from per-image feature grids and
(optionally) label grids; the returned :class:`FittedFamily` produces
per-pixel cloud-probability maps.  This is the single place that knows which
family needs flattened pixels, which needs the lattice, which applies the
polynomial expansion, and how unsupervised cluster indices are oriented onto
the clear/cloud classes.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DataError, UsageError
from .expand import poly_expand
from .features import FeatureSpec
from . import discriminative, generative, mrf

log = logging.getLogger(__name__)

FAMILIES = ("gda", "nbc", "gmm", "kmeans", "mrf", "icm-mrf", "rr", "svc", "gp")
#: Families that require labels to fit.
SUPERVISED = ("gda", "nbc", "mrf", "rr", "svc", "gp")
#: Families whose prediction runs lattice inference (excluded from default
#: ensemble pools when annealing is enabled).
LATTICE = ("mrf", "icm-mrf")

_HYPER_KEYS = {
    "gda": {"gamma_cov"}, "nbc": set(), "gmm": {"gamma_cov"}, "kmeans": set(),
    "mrf": {"beta", "clique_order", "gamma_cov"},
    "icm-mrf": {"beta", "clique_order", "gamma_cov"},
    "rr": {"gamma"}, "svc": {"C"}, "gp": {"gamma"},
}


def _stack_pixels(feature_images: Sequence[np.ndarray]) -> np.ndarray:
    d = feature_images[0].shape[2]
    return np.concatenate([img.reshape(-1, d) for img in feature_images])


def _stack_labels(label_images) -> np.ndarray:
    return np.concatenate([np.asarray(l).reshape(-1) for l in label_images])


@dataclass
class FittedFamily:
    """A trained model plus everything needed to score new frames."""

    family: str
    spec: FeatureSpec
    payload: object
    flip: bool = False
    inference: str = "sweep"
    schedule: mrf.SaSchedule | None = None

    def _expand(self, X: np.ndarray) -> np.ndarray:
        return poly_expand(X, self.spec.expansion_order, self.spec.expansion_bias)

    def posterior_images(self, feature_images: Sequence[np.ndarray]) -> list[np.ndarray]:
        """Cloud-probability map for each feature grid."""
        out = []
        for img in feature_images:
            img = np.asarray(img, dtype=np.float64)
            rows, cols, d = img.shape
            flat = img.reshape(-1, d)
            if self.family in ("gda", "nbc", "gmm"):
                probs = self.payload.posterior(flat)[:, 1]
            elif self.family == "kmeans":
                probs = self.payload.posterior(flat)[:, 1]
            elif self.family in LATTICE:
                lik = self.payload.likelihoods(img)
                if self.inference == "sa":
                    schedule = self.schedule or mrf.SaSchedule()
                    state = mrf.sa_optimize(self.payload, lik, schedule).state
                else:
                    state = mrf.map_converge(self.payload, img)
                probs = state.posterior()[..., 1].reshape(-1)
            elif self.family in ("rr", "svc"):
                probs = discriminative.predict_sigmoid(self.payload, self._expand(flat))
            elif self.family == "gp":
                probs = discriminative.gp_predict(self.payload, self._expand(flat))
            else:
                raise UsageError(f"unknown family {self.family!r}")
            if self.flip:
                probs = 1.0 - probs
            out.append(probs.reshape(rows, cols))
        return out


def _orient(fitted: FittedFamily, feature_images, label_images) -> None:
    """Choose the cluster-to-class mapping of an unsupervised fit.

    With labels: keep the mapping that agrees with them more often.  Without:
    the cluster with the larger mean first feature (a temperature-like
    residual in every variant) is called cloud.
    """
    if label_images is not None:
        probs = np.concatenate(
            [p.reshape(-1) for p in fitted.posterior_images(feature_images)])
        truth = _stack_labels(label_images)
        agree = np.mean((probs > 0.5) == (truth == 1))
        fitted.flip = bool(agree < 0.5)
        return
    payload = fitted.payload
    if fitted.family == "kmeans":
        raw = payload.centers * payload.feature_scale + payload.feature_mean
        fitted.flip = bool(raw[1, 0] < raw[0, 0])
    else:  # gmm / icm-mrf expose per-class means directly
        fitted.flip = bool(payload.means[1, 0] < payload.means[0, 0])


def fit_family(family: str, spec: FeatureSpec,
               feature_images: Sequence[np.ndarray],
               label_images=None, hyper: dict | None = None,
               seed: int = 0) -> FittedFamily:
    """Train ``family`` on raw (unexpanded) per-image feature grids.

    ``hyper`` carries the family's knobs: ``gamma_cov`` (gda/gmm),
    ``beta``/``clique_order``/``gamma_cov`` (mrf, icm-mrf), ``gamma``
    (rr, gp), ``C`` (svc), plus ``inference``/``sa_*`` for the lattice
    families.  Supervised families require ``label_images``.
    """
    if family not in FAMILIES:
        raise UsageError(f"unknown model family {family!r}; "
                         f"choose from {', '.join(FAMILIES)}")
    hyper = dict(hyper or {})
    feature_images = [np.asarray(f, dtype=np.float64) for f in feature_images]
    if not feature_images:
        raise DataError("no feature images to fit on")
    if family in SUPERVISED and label_images is None:
        raise DataError(f"family {family!r} requires labels")

    X = _stack_pixels(feature_images)
    y = _stack_labels(label_images) if label_images is not None else None

    inference = hyper.pop("inference", "sweep")
    if inference not in ("sweep", "sa"):
        raise UsageError(f"unknown inference mode {inference!r}")
    sa_kwargs = {"t0": hyper.pop("sa_t0", None),
                 "alpha": hyper.pop("sa_alpha", 0.75),
                 "max_steps": hyper.pop("sa_max_steps", 1000)}
    schedule = mrf.SaSchedule(seed=seed, **sa_kwargs) if inference == "sa" else None
    unknown = set(hyper) - _HYPER_KEYS[family]
    if unknown:
        raise UsageError(f"unknown hyper-parameter(s) for {family!r}: "
                         f"{', '.join(sorted(unknown))}")

    if family == "gda":
        payload = generative.fit_gda(X, y, hyper.get("gamma_cov", 0.0))
    elif family == "nbc":
        payload = generative.fit_nbc(X, y)
    elif family == "gmm":
        payload = generative.fit_gmm(
            X, 2, hyper.get("gamma_cov", 0.0), seed=seed).model
    elif family == "kmeans":
        payload = generative.fit_kmeans(X, 2, seed=seed)
    elif family == "mrf":
        payload = mrf.fit_supervised(
            X, y, hyper.get("beta", 1.0), hyper.get("clique_order", 1),
            hyper.get("gamma_cov", 0.0))
    elif family == "icm-mrf":
        fit = mrf.icm_fit(
            feature_images, hyper.get("beta", 1.0),
            hyper.get("clique_order", 1), hyper.get("gamma_cov", 1.0),
            seed=seed, inference=inference, schedule=schedule)
        payload = fit.model
    elif family in ("rr", "svc", "gp"):
        phi = poly_expand(X, spec.expansion_order, spec.expansion_bias)
        if family == "rr":
            payload = discriminative.rr_fit(phi, y.astype(np.float64),
                                            hyper.get("gamma", 1.0))
        elif family == "svc":
            payload = discriminative.svc_fit(phi, 2.0 * y - 1.0,
                                             hyper.get("C", 1.0))
        else:
            payload = discriminative.gp_fit(phi, y.astype(np.float64),
                                            hyper.get("gamma", 1.0))
    fitted = FittedFamily(family, spec, payload, inference=inference,
                          schedule=schedule)
    if family in ("gmm", "kmeans", "icm-mrf"):
        _orient(fitted, feature_images, label_images)
    return fitted
