"""Synthetic radiometric sky scenes with ground truth.

Frames are built from additive ingredients chosen to stress the feature
pipeline the way real hardware does: a per-frame background level that
wanders across the sequence (seasonal/diurnal variation), a fixed spatial
gradient, a static "debris on the window" pattern, drifting Gaussian cloud
blobs, and white sensor noise.  Labels come from the noiseless cloud field:
a pixel is cloud iff some blob contributes more than ``mask_threshold``
times its peak there.

Everything is deterministic given ``seed``; per-frame noise streams derive
from ``(seed, frame index)`` so frames could be generated independently.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from datetime import datetime, timedelta
from pathlib import Path

import numpy as np

from .errors import DataError, UsageError
from .grid import LabelMask, TemperatureImage
from . import manifest as manifest_mod
from . import pgm

FRAME_KINDS = ("clear", "cloudy", "covered")


@dataclass(frozen=True)
class SceneConfig:
    seed: int = 0
    width: int = 80
    height: int = 60
    n_frames: int = 12
    n_train: int = 7
    frame_kinds: tuple[str, ...] | None = None
    base_background_ck: float = 21000.0
    background_spread_ck: float = 2000.0
    gradient_ck: float = 400.0
    debris_spots: int = 6
    debris_amplitude_ck: float = 600.0
    debris_sigma_px: tuple[float, float] = (2.0, 6.0)
    clouds_per_frame: tuple[int, int] = (1, 3)
    peak_range_ck: tuple[float, float] = (4800.0, 5600.0)
    sigma_range_px: tuple[float, float] = (5.0, 10.0)
    covered_sigma_px: tuple[float, float] = (14.0, 18.0)
    drift_px: float = 2.0
    noise_sigma_ck: float = 30.0
    mask_threshold: float = 0.1
    period_s: float = 15.0
    start_time: str = "2021-06-21T12:00:00"

    def __post_init__(self):
        if self.width < 4 or self.height < 4:
            raise UsageError("scene must be at least 4x4 pixels")
        if not 1 <= self.n_train < self.n_frames:
            raise UsageError("need 1 <= n_train < n_frames")
        if self.frame_kinds is not None:
            object.__setattr__(self, "frame_kinds", tuple(self.frame_kinds))
            if len(self.frame_kinds) != self.n_frames:
                raise UsageError("frame_kinds length must equal n_frames")
            if any(k not in FRAME_KINDS for k in self.frame_kinds):
                raise UsageError(f"frame kinds must be in {FRAME_KINDS}")
        if not 0 < self.mask_threshold < 1:
            raise UsageError("mask_threshold must be in (0, 1)")
        if self.noise_sigma_ck < 0:
            raise UsageError("noise sigma must be >= 0")

    def kinds(self) -> tuple[str, ...]:
        if self.frame_kinds is not None:
            return self.frame_kinds
        return default_kinds(self.n_frames, self.n_train)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["frame_kinds"] = list(self.kinds())
        for key in ("debris_sigma_px", "clouds_per_frame", "peak_range_ck",
                    "sigma_range_px", "covered_sigma_px"):
            d[key] = list(d[key])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SceneConfig":
        d = dict(d)
        for key in ("debris_sigma_px", "clouds_per_frame", "peak_range_ck",
                    "sigma_range_px", "covered_sigma_px", "frame_kinds"):
            if key in d and d[key] is not None:
                d[key] = tuple(d[key])
        return cls(**d)

    @classmethod
    def easy(cls, seed: int = 0, **overrides) -> "SceneConfig":
        """High-separability preset: a single peak height (so every cloud
        shares one mask threshold), low sensor noise, a steadier background,
        fewer clouds and no blanket-covered frames (whose biased background
        estimate is the stock preset's main error source).  Useful for smoke
        tests that assert a J well above what the stock preset can reach."""
        base = dict(seed=seed, peak_range_ck=(5500.0, 5500.0),
                    noise_sigma_ck=20.0, background_spread_ck=800.0,
                    clouds_per_frame=(1, 2))
        base.update(overrides)
        if "frame_kinds" not in base:
            n_frames = base.get("n_frames", 12)
            n_train = base.get("n_train", 7)
            base["frame_kinds"] = tuple(
                "cloudy" if k == "covered" else k
                for k in default_kinds(n_frames, n_train))
        return cls(**base)


def default_kinds(n_frames: int, n_train: int) -> tuple[str, ...]:
    """Clear frames open the sequence (so the clear-sky buffer can engage),
    each split ends with a mostly-covered frame, the rest are cloudy."""
    def split(n: int, leading_clear: int, trailing_clear: bool) -> list[str]:
        kinds = ["clear"] * min(leading_clear, max(n - 1, 0))
        while len(kinds) < n:
            kinds.append("cloudy")
        if n >= leading_clear + 2:
            kinds[-1] = "covered"
        if trailing_clear and n >= 4:
            kinds[-2] = "clear"
        return kinds
    return tuple(split(n_train, 3, False) + split(n_frames - n_train, 0, True))


@dataclass(frozen=True)
class _Cloud:
    born: int
    dies: int
    center: tuple[float, float]   # (x, y) at birth
    velocity: tuple[float, float]  # px/frame
    peak: float
    sigma: tuple[float, float]

    def contribution(self, k: int, xx: np.ndarray, yy: np.ndarray) -> np.ndarray:
        age = k - self.born
        cx = self.center[0] + self.velocity[0] * age
        cy = self.center[1] + self.velocity[1] * age
        return self.peak * np.exp(
            -((xx - cx) ** 2 / (2 * self.sigma[0] ** 2)
              + (yy - cy) ** 2 / (2 * self.sigma[1] ** 2)))


@dataclass(frozen=True)
class SynthResult:
    config: SceneConfig
    frames: tuple[TemperatureImage, ...]
    masks: tuple[LabelMask, ...]
    coverage: tuple[float, ...]


def _runs(kinds, predicate):
    """Maximal index runs where ``predicate(kind)`` holds."""
    runs, start = [], None
    for i, kind in enumerate(kinds):
        if predicate(kind) and start is None:
            start = i
        elif not predicate(kind) and start is not None:
            runs.append((start, i))
            start = None
    if start is not None:
        runs.append((start, len(kinds)))
    return runs


def generate(config: SceneConfig) -> SynthResult:
    """Render every frame and its ground-truth mask."""
    rng = np.random.default_rng(config.seed)
    w, h = config.width, config.height
    xx, yy = np.meshgrid(np.arange(w, dtype=np.float64),
                         np.arange(h, dtype=np.float64))
    kinds = config.kinds()

    # scene-level structure
    offsets = rng.uniform(-config.background_spread_ck,
                          config.background_spread_ck, config.n_frames)
    theta = rng.uniform(0.0, 2.0 * np.pi)
    u = xx / max(w - 1, 1) - 0.5
    v = yy / max(h - 1, 1) - 0.5
    gradient = config.gradient_ck * (np.cos(theta) * u + np.sin(theta) * v)
    debris = np.zeros((h, w))
    for _ in range(config.debris_spots):
        cx, cy = rng.uniform(0, w), rng.uniform(0, h)
        sig = rng.uniform(*config.debris_sigma_px)
        amp = rng.uniform(0.5, 1.0) * config.debris_amplitude_ck
        debris += amp * np.exp(-((xx - cx) ** 2 + (yy - cy) ** 2) / (2 * sig ** 2))

    clouds: list[_Cloud] = []
    for start, end in _runs(kinds, lambda k: k != "clear"):
        count = int(rng.integers(config.clouds_per_frame[0],
                                 config.clouds_per_frame[1] + 1))
        for _ in range(count):
            clouds.append(_Cloud(
                born=start, dies=end,
                center=(rng.uniform(0.15 * w, 0.85 * w),
                        rng.uniform(0.15 * h, 0.85 * h)),
                velocity=(rng.uniform(-config.drift_px, config.drift_px),
                          rng.uniform(-config.drift_px, config.drift_px)),
                peak=rng.uniform(*config.peak_range_ck),
                sigma=(rng.uniform(*config.sigma_range_px),
                       rng.uniform(*config.sigma_range_px))))
    for start, end in _runs(kinds, lambda k: k == "covered"):
        blanket = rng.uniform(*config.covered_sigma_px)
        clouds.append(_Cloud(
            born=start, dies=end,
            center=(w / 2 + rng.uniform(-6, 6), h / 2 + rng.uniform(-6, 6)),
            velocity=(rng.uniform(-config.drift_px, config.drift_px),
                      rng.uniform(-config.drift_px, config.drift_px)),
            peak=rng.uniform(np.mean(config.peak_range_ck),
                             config.peak_range_ck[1]),
            sigma=(blanket, blanket)))

    frames, masks, coverage = [], [], []
    for k, kind in enumerate(kinds):
        noiseless = config.base_background_ck + offsets[k] + gradient + debris
        mask = np.zeros((h, w), dtype=bool)
        for cloud in clouds:
            if cloud.born <= k < cloud.dies:
                contrib = cloud.contribution(k, xx, yy)
                noiseless = noiseless + contrib
                mask |= contrib > config.mask_threshold * cloud.peak
        frame_rng = np.random.default_rng([config.seed, k])
        noisy = noiseless + frame_rng.normal(0.0, config.noise_sigma_ck,
                                             noiseless.shape)
        upper = min(65535.0, noiseless.max() + 5.0 * config.noise_sigma_ck)
        values = np.clip(np.rint(noisy), 0.0, np.floor(upper))
        frames.append(TemperatureImage(values))
        masks.append(LabelMask(mask.astype(np.uint8)))
        coverage.append(float(mask.mean()))
    return SynthResult(config, tuple(frames), tuple(masks), tuple(coverage))


def write_dataset(config: SceneConfig, out_dir) -> Path:
    """Write frames, masks, manifest.csv and scene.json; returns the manifest
    path."""
    out = Path(out_dir)
    (out / "frames").mkdir(parents=True, exist_ok=True)
    (out / "masks").mkdir(parents=True, exist_ok=True)
    result = generate(config)
    start = datetime.fromisoformat(config.start_time)
    rows = []
    for k, (frame, mask) in enumerate(zip(result.frames, result.masks)):
        frame_rel = f"frames/frame_{k:03d}.pgm"
        mask_rel = f"masks/mask_{k:03d}.pgm"
        pgm.write_frame(out / frame_rel, frame)
        pgm.write_mask(out / mask_rel, mask)
        split = "train" if k < config.n_train else "test"
        rows.append((frame_rel, mask_rel,
                     start + timedelta(seconds=k * config.period_s), split))
    manifest_path = out / "manifest.csv"
    manifest_mod.write_manifest(manifest_path, rows)
    scene = {"schema_version": 1, "scene": config.to_dict(),
             "frame_kinds": list(config.kinds()),
             "coverage": list(result.coverage)}
    pgm.atomic_write_text(out / "scene.json",
                          json.dumps(scene, indent=2, sort_keys=True) + "\n")
    return manifest_path
