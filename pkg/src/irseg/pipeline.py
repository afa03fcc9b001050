"""End-to-end orchestration: manifests -> features -> models -> maps.

:class:`Preprocessor` owns the stateful part of feature extraction: the
clear-sky buffer is replayed over the (chronological) training sequence to
freeze a window-artifact estimate, which then applies to any later frame.
Clear frames are recognized from their label masks (cloud fraction at or
below ``clear_fraction``); when the sequence never yields enough consecutive
clear frames the artifact correction degrades to the identity, which is
logged.

:class:`TrainedSegmenter` bundles preprocessor state, a fitted model family,
and the tuned virtual prior; it is what model files serialize.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError
from .evaluation import ConfusionMatrix, confusion, tune_lambda
from .features import (ClearSkyBuffer, FeatureSpec, FrameBundle,
                       QuantileBackground, assemble, background_residual,
                       malr_height, normalize_8bit, remove_artifact,
                       window_artifact)
from .flow import optical_flow, zero_flow
from .grid import LabelMask, SiteParams, TemperatureImage
from .manifest import DatasetManifest
from .models import FittedFamily, fit_family

log = logging.getLogger(__name__)


@dataclass
class Preprocessor:
    site: SiteParams = field(default_factory=SiteParams)
    quantile: float = 0.05
    buffer_capacity: int = 250
    persistence: int = 3
    clear_fraction: float = 0.0
    flow_window: int = 9
    flow_sigma: float = 2.0
    artifact: np.ndarray | None = None

    def fit(self, frames, masks) -> "Preprocessor":
        """Replay the clear-sky buffer over a training sequence."""
        buffer = ClearSkyBuffer(self.buffer_capacity, self.persistence)
        for frame, mask in zip(frames, masks):
            buffer.update(frame, mask.cloud_fraction() <= self.clear_fraction)
        if len(buffer):
            self.artifact = window_artifact(buffer).data
            log.info("window artifact estimated from %d buffered clear frames",
                     len(buffer))
        else:
            self.artifact = None
            log.warning("no persistent clear-sky run in training data; "
                        "window correction is the identity")
        return self

    def bundle_sequence(self, frames) -> list[FrameBundle]:
        """Derive all per-pixel fields for an ordered frame sequence.

        Motion uses consecutive pairs of normalized frames; the first frame
        of the sequence gets zero velocity.
        """
        background = QuantileBackground(self.quantile)
        bundles: list[FrameBundle] = []
        prev_intensity = None
        for frame in frames:
            height = malr_height(frame, self.site)
            if self.artifact is not None:
                if self.artifact.shape != frame.shape:
                    raise DataError("frame shape does not match the fitted "
                                    "window artifact")
                corrected = remove_artifact(frame,
                                            TemperatureImage(self.artifact))
            else:
                corrected = frame
            height_c = malr_height(corrected, self.site)
            residual, height_r = background_residual(corrected, self.site,
                                                     background)
            intensity = normalize_8bit(residual, self.site)
            if prev_intensity is None:
                velocity = zero_flow(frame.shape)
            else:
                velocity = optical_flow(prev_intensity, intensity,
                                        window=self.flow_window,
                                        weight_sigma=self.flow_sigma)
            prev_intensity = intensity
            bundles.append(FrameBundle(
                temperature=frame.data, height=height.data,
                temperature_corrected=corrected.data,
                height_corrected=height_c.data,
                residual=residual, height_residual=height_r,
                intensity=intensity, velocity=velocity))
        return bundles

    def to_dict(self) -> dict:
        return {"quantile": self.quantile,
                "buffer_capacity": self.buffer_capacity,
                "persistence": self.persistence,
                "clear_fraction": self.clear_fraction,
                "flow_window": self.flow_window,
                "flow_sigma": self.flow_sigma,
                "artifact": None if self.artifact is None
                else self.artifact.tolist()}


def feature_grids(bundles, spec: FeatureSpec) -> list[np.ndarray]:
    """Assembled (rows, cols, d) raw feature grids for each bundle."""
    return [assemble(b, spec).values.reshape(b.shape + (-1,)) for b in bundles]


@dataclass(frozen=True)
class SegmentationResult:
    posteriors: tuple[np.ndarray, ...]
    masks: tuple[LabelMask, ...]


@dataclass
class TrainedSegmenter:
    preprocessor: Preprocessor
    fitted: FittedFamily
    lam: float
    train_j: float | None = None

    @property
    def family(self) -> str:
        return self.fitted.family

    @property
    def spec(self) -> FeatureSpec:
        return self.fitted.spec

    def posterior_maps(self, frames) -> tuple[np.ndarray, ...]:
        bundles = self.preprocessor.bundle_sequence(frames)
        grids = feature_grids(bundles, self.spec)
        return tuple(self.fitted.posterior_images(grids))

    def segment(self, frames) -> SegmentationResult:
        posteriors = self.posterior_maps(frames)
        tau = 1.0 / (2.0 * self.lam)
        masks = tuple(LabelMask((p > tau).astype(np.uint8)) for p in posteriors)
        return SegmentationResult(posteriors, masks)


def load_split(manifest: DatasetManifest, split: str):
    entries = manifest.split(split)
    if not entries:
        raise DataError(f"manifest has no {split!r} entries")
    frames = [e.load_frame() for e in entries]
    masks = [e.load_labels() for e in entries]
    shapes = {f.shape for f in frames} | {m.shape for m in masks}
    if len(shapes) != 1:
        raise DataError(f"frames/masks disagree on shape: {sorted(shapes)}")
    return frames, masks


def train(family: str, manifest: DatasetManifest, *,
          spec: FeatureSpec | None = None, hyper: dict | None = None,
          preprocessor: Preprocessor | None = None, seed: int = 0,
          lambda_grid=None) -> TrainedSegmenter:
    """Fit one family on the manifest's train split.

    The virtual prior is tuned on the pooled training posteriors; the
    resulting training J is recorded on the segmenter.
    """
    spec = spec or FeatureSpec()
    preproc = preprocessor or Preprocessor()
    frames, masks = load_split(manifest, "train")
    preproc.fit(frames, masks)
    bundles = preproc.bundle_sequence(frames)
    grids = feature_grids(bundles, spec)
    label_grids = [m.data for m in masks]
    fitted = fit_family(family, spec, grids, label_grids, hyper, seed=seed)
    pooled = np.concatenate(
        [p.reshape(-1) for p in fitted.posterior_images(grids)])
    truth = np.concatenate([l.reshape(-1) for l in label_grids])
    tuned = tune_lambda(pooled, truth, lambda_grid)
    return TrainedSegmenter(preproc, fitted, tuned.lam, tuned.j)


def evaluate(segmenter: TrainedSegmenter, frames, masks) -> dict:
    """Score a segmenter on labeled frames (pooled + per-frame J)."""
    result = segmenter.segment(frames)
    pooled_pred = np.concatenate([m.data.reshape(-1) for m in result.masks])
    pooled_true = np.concatenate([m.data.reshape(-1) for m in masks])
    cm = confusion(pooled_pred, pooled_true)
    per_frame = []
    for pred, true in zip(result.masks, masks):
        frame_cm = confusion(pred.data, true.data)
        try:
            frame_j = frame_cm.j_statistic
        except DataError:
            frame_j = None
        per_frame.append({"confusion": frame_cm.to_dict(), "j": frame_j})
    return {"j": cm.j_statistic, "accuracy": cm.accuracy,
            "confusion": cm.to_dict(), "per_frame": per_frame,
            "lambda": segmenter.lam}
