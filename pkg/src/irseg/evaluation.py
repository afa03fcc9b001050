"""Scoring, decision-threshold tuning, cross-validation, and timing.

The quality score throughout is the j-statistic ``J = sensitivity +
specificity - 1`` with cloud (label 1) as the positive class; it is
insensitive to class imbalance, which matters because clear pixels usually
dominate sky images.

The decision rule multiplies the cloud posterior by a *virtual prior*
``lambda`` before comparing the two classes: predict cloud iff
``lambda p > 1 - lambda p``, equivalent to the strict threshold
``p > 1 / (2 lambda)``.  :func:`tune_lambda` maximizes J over a log-spaced
lambda grid augmented with the thresholds induced by the data itself, so its
optimum matches an exhaustive scan over all distinct classifications.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, UsageError
from .features import FeatureSpec, FrameBundle, assemble
from .models import fit_family

log = logging.getLogger(__name__)

DEFAULT_LAMBDA_GRID = np.logspace(-2.0, 2.0, 101)


# ---------------------------------------------------------------------------
# confusion and scores

@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @property
    def sensitivity(self) -> float:
        if self.tp + self.fn == 0:
            raise DataError("sensitivity undefined: no positive ground truth")
        return self.tp / (self.tp + self.fn)

    @property
    def specificity(self) -> float:
        if self.tn + self.fp == 0:
            raise DataError("specificity undefined: no negative ground truth")
        return self.tn / (self.tn + self.fp)

    @property
    def accuracy(self) -> float:
        return (self.tp + self.tn) / self.total

    @property
    def j_statistic(self) -> float:
        """Youden's J; raises when either ground-truth class is absent."""
        return self.sensitivity + self.specificity - 1.0

    def to_dict(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn}


def confusion(predicted, truth) -> ConfusionMatrix:
    predicted = np.asarray(predicted).reshape(-1)
    truth = np.asarray(truth).reshape(-1)
    if predicted.shape != truth.shape:
        raise DataError(f"prediction shape {predicted.shape} != "
                        f"truth shape {truth.shape}")
    for name, arr in (("prediction", predicted), ("truth", truth)):
        if not np.isin(arr, (0, 1)).all():
            raise DataError(f"{name} labels must be 0 or 1")
    pos = truth == 1
    pred_pos = predicted == 1
    tp = int(np.count_nonzero(pos & pred_pos))
    fp = int(np.count_nonzero(~pos & pred_pos))
    fn = int(np.count_nonzero(pos & ~pred_pos))
    tn = int(np.count_nonzero(~pos & ~pred_pos))
    return ConfusionMatrix(tp, fp, tn, fn)


def j_statistic(predicted, truth) -> float:
    return confusion(predicted, truth).j_statistic


def accuracy(predicted, truth) -> float:
    return confusion(predicted, truth).accuracy


# ---------------------------------------------------------------------------
# virtual-prior tuning

def lambda_threshold(lam: float) -> float:
    """The posterior threshold equivalent to virtual prior ``lam``."""
    if lam <= 0:
        raise UsageError("lambda must be positive")
    return 1.0 / (2.0 * lam)


def decide(posterior, lam: float) -> np.ndarray:
    """Apply the virtual-prior rule: cloud iff ``p > 1/(2 lambda)``."""
    tau = lambda_threshold(lam)
    return (np.asarray(posterior) > tau).astype(np.uint8)


@dataclass(frozen=True)
class TunedLambda:
    lam: float
    threshold: float
    j: float
    matrix: ConfusionMatrix
    #: ROC samples over every evaluated candidate, one ``(fpr, tpr, lambda)``
    #: row per candidate, sorted by lambda.
    roc: np.ndarray = field(default=None, compare=False, repr=False)


def _counts_at(p_sorted: np.ndarray, suffix_pos: np.ndarray, n_pos: int,
               n_neg: int, tau: float) -> ConfusionMatrix:
    idx = int(np.searchsorted(p_sorted, tau, side="right"))
    pred_pos = p_sorted.shape[0] - idx
    tp = int(suffix_pos[idx])
    fp = pred_pos - tp
    return ConfusionMatrix(tp, fp, n_neg - fp, n_pos - tp)


def tune_lambda(posterior, truth, grid=None) -> TunedLambda:
    """Maximize J over virtual priors.

    Candidates are a log-spaced grid (default 101 points over
    ``[1e-2, 1e2]``) plus, for every distinct posterior value ``u > 0``, the
    lambda whose threshold is exactly ``u`` (and one realizing "everything
    with positive posterior is cloud").  The data-induced candidates visit
    every classification an exhaustive threshold scan can produce, so the
    achieved J equals the scan's maximum.  Ties prefer lambda nearest 1,
    then the smaller lambda.
    """
    posterior = np.asarray(posterior, dtype=np.float64).reshape(-1)
    truth = np.asarray(truth).reshape(-1)
    if posterior.shape != truth.shape:
        raise DataError("posterior/label shapes differ")
    if posterior.size == 0:
        raise DataError("cannot tune lambda on empty data")
    if posterior.min() < 0 or posterior.max() > 1:
        raise DataError("posterior values must lie in [0, 1]")
    if not np.isin(truth, (0, 1)).all():
        raise DataError("labels must be 0 or 1")
    n_pos = int(np.count_nonzero(truth == 1))
    n_neg = truth.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DataError("j-statistic undefined: ground truth lacks a class")

    order = np.argsort(posterior, kind="stable")
    p_sorted = posterior[order]
    y_sorted = truth[order]
    suffix_pos = np.concatenate(
        (np.cumsum((y_sorted == 1)[::-1])[::-1], [0]))

    candidates: list[float] = list(DEFAULT_LAMBDA_GRID if grid is None
                                   else np.asarray(grid, dtype=np.float64))
    positive = np.unique(p_sorted[p_sorted > 0])
    for u in positive:
        lam = 1.0 / (2.0 * u)
        # The lambda -> threshold round trip double-rounds and can land one
        # ulp below ``u``, silently including the u-valued pixels; nudge so
        # the implied threshold is >= u and the candidate classifies exactly
        # ``p > u``.
        while lambda_threshold(lam) < u:
            lam = np.nextafter(lam, 0.0)
        candidates.append(float(lam))
    if positive.size:
        candidates.append(1.0 / positive[0])  # threshold below every p > 0

    best: tuple[float, ConfusionMatrix] | None = None
    roc_rows = []
    for lam in candidates:
        if lam <= 0:
            raise UsageError("lambda grid values must be positive")
        cm = _counts_at(p_sorted, suffix_pos, n_pos, n_neg,
                        lambda_threshold(lam))
        j = cm.j_statistic
        roc_rows.append((cm.fp / n_neg, cm.tp / n_pos, float(lam)))
        if best is None or j > best[1].j_statistic or (
                j == best[1].j_statistic and (abs(lam - 1.0), lam)
                < (abs(best[0] - 1.0), best[0])):
            best = (float(lam), cm)
    assert best is not None
    roc = np.array(roc_rows)
    roc = roc[np.argsort(roc[:, 2], kind="stable")]
    lam, cm = best
    return TunedLambda(lam, lambda_threshold(lam), cm.j_statistic, cm, roc)


# ---------------------------------------------------------------------------
# leave-one-out cross-validation

@dataclass(frozen=True)
class CvCombo:
    spec: FeatureSpec
    hyper: dict
    fold_j: tuple[float, ...]
    mean_j: float


@dataclass(frozen=True)
class CvReport:
    family: str
    combos: tuple[CvCombo, ...]
    selected: CvCombo
    n_folds: int
    skipped_folds: tuple[int, ...]
    fit_seconds: float
    predict_seconds: float

    def to_dict(self) -> dict:
        def combo(c: CvCombo) -> dict:
            return {"spec": c.spec.to_dict(), "hyper": c.hyper,
                    "fold_j": list(c.fold_j), "mean_j": c.mean_j}
        return {"family": self.family,
                "combos": [combo(c) for c in self.combos],
                "selected": combo(self.selected),
                "n_folds": self.n_folds,
                "skipped_folds": list(self.skipped_folds)}

    def timing_dict(self) -> dict:
        return {"fit_seconds": self.fit_seconds,
                "predict_seconds": self.predict_seconds}


def _spec_sort_key(spec: FeatureSpec):
    from .features import NEIGHBORHOODS
    return (spec.expansion_order, NEIGHBORHOODS.index(spec.neighborhood))


def _hyper_sort_key(hyper: dict):
    return tuple((k, hyper[k]) for k in sorted(hyper))


def loo_cv(bundles: list[FrameBundle], masks, family: str,
           hyper_grid: list[dict], spec_grid: list[FeatureSpec], *,
           seed: int = 0, lambda_grid=None) -> CvReport:
    """Leave-one-image-out CV over (hyperparameters x feature specs).

    Each fold fits on the remaining images, tunes the virtual prior on the
    held-out image, and scores its J there.  Folds whose held-out image shows
    a single class are skipped (logged).  The winner maximizes mean J; ties
    prefer the smaller expansion order, then the smaller neighborhood, then
    the smaller hyperparameters.
    """
    if len(bundles) != len(masks):
        raise DataError("bundle/mask counts differ")
    if len(bundles) < 2:
        raise DataError("leave-one-out needs at least 2 images")
    if not hyper_grid or not spec_grid:
        raise UsageError("hyperparameter and spec grids must be non-empty")

    label_arrays = [np.asarray(m.data if hasattr(m, "data") else m)
                    for m in masks]
    usable, skipped = [], []
    for i, labels in enumerate(label_arrays):
        if labels.min() == labels.max():
            log.warning("fold %d skipped: held-out image has a single class", i)
            skipped.append(i)
        else:
            usable.append(i)
    if not usable:
        raise DataError("every fold has single-class ground truth")

    specs = sorted(spec_grid, key=_spec_sort_key)
    hypers = sorted(hyper_grid, key=_hyper_sort_key)

    fit_s = predict_s = 0.0
    combos: list[CvCombo] = []
    for spec in specs:
        features = [assemble(b, spec).values.reshape(b.shape + (-1,))
                    for b in bundles]
        for hyper in hypers:
            fold_j = []
            for fold in usable:
                train_idx = [i for i in range(len(bundles)) if i != fold]
                t0 = time.perf_counter()
                fitted = fit_family(
                    family, spec,
                    [features[i] for i in train_idx],
                    [label_arrays[i] for i in train_idx],
                    hyper, seed=seed)
                fit_s += time.perf_counter() - t0
                t0 = time.perf_counter()
                probs = fitted.posterior_images([features[fold]])[0]
                predict_s += time.perf_counter() - t0
                tuned = tune_lambda(probs, label_arrays[fold], lambda_grid)
                fold_j.append(tuned.j)
            combos.append(CvCombo(spec, dict(hyper), tuple(fold_j),
                                  float(np.mean(fold_j))))

    best = combos[0]
    for combo in combos[1:]:
        if combo.mean_j > best.mean_j:
            best = combo
    return CvReport(family, tuple(combos), best, len(usable),
                    tuple(skipped), fit_s, predict_s)


# ---------------------------------------------------------------------------
# timing

@dataclass(frozen=True)
class BenchResult:
    family: str
    per_frame_ms: tuple[float, ...]
    mean_ms: float
    median_ms: float
    feature_ms: tuple[float, ...] | None

    def to_dict(self) -> dict:
        d = {"family": self.family,
             "per_frame_ms": list(self.per_frame_ms),
             "mean_ms": self.mean_ms, "median_ms": self.median_ms}
        if self.feature_ms is not None:
            d["feature_ms"] = list(self.feature_ms)
            d["mean_total_ms"] = self.mean_ms + float(np.mean(self.feature_ms))
        return d


def bench(fitted, bundles: list[FrameBundle], *, reps: int = 10,
          include_features: bool = False) -> BenchResult:
    """Median per-frame prediction wall-clock, I/O excluded.

    Features are assembled once outside the timed region; with
    ``include_features`` their assembly time is measured and reported
    separately, mirroring accounting that splits preprocessing from
    inference.
    """
    if not bundles:
        raise DataError("bench needs at least one frame")
    if reps < 1:
        raise UsageError("reps must be >= 1")
    spec = fitted.spec
    features, feature_ms = [], []
    for b in bundles:
        t0 = time.perf_counter()
        feats = assemble(b, spec).values.reshape(b.shape + (-1,))
        feature_ms.append(1e3 * (time.perf_counter() - t0))
        features.append(feats)
    per_frame = []
    for feats in features:
        times = []
        for _ in range(reps):
            t0 = time.perf_counter()
            fitted.posterior_images([feats])
            times.append(1e3 * (time.perf_counter() - t0))
        per_frame.append(float(np.median(times)))
    return BenchResult(fitted.family, tuple(per_frame),
                       float(np.mean(per_frame)), float(np.median(per_frame)),
                       tuple(feature_ms) if include_features else None)
