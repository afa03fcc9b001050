"""Feature extraction for infrared sky frames.

The pipeline turns one raw temperature frame ``T`` into a bundle of aligned
fields:

``H``
    pixel height via the moist adiabatic lapse-rate map (``malr_height``),
``T'``/``H'``
    the same pair after removing the persistent window artifact estimated
    from a buffer of recent clear-sky frames,
``dT``/``H''``
    residuals against the per-frame atmospheric background estimate,
``I``
    ``dT`` normalized to 8 bits against the fixed feasible range,
``V``
    dense motion vectors between consecutive normalized frames.

Per-pixel feature vectors are assembled from these fields by
:func:`assemble` according to a :class:`FeatureSpec` (field variant,
neighborhood size, polynomial expansion order).
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from .errors import DataError, UsageError
from .expand import monomial_names, poly_expand
from .grid import HeightImage, SiteParams, TemperatureImage

#: Default capacity of the clear-sky frame buffer.
BUFFER_CAPACITY = 250
#: Consecutive clear classifications required before a frame is buffered.
PERSISTENCE = 3


# ---------------------------------------------------------------------------
# height map

def malr_height(frame: TemperatureImage, site: SiteParams) -> HeightImage:
    """Map temperatures to heights with the lapse-rate model.

    ``H = elevation + (T_surface - T) / lapse_rate`` clamped to
    ``[elevation, tropopause]``; monotone non-increasing in ``T``.
    """
    h = site.elevation_km + (
        site.surface_temperature_ck - frame.data) / site.lapse_rate_ck_per_km
    np.clip(h, site.elevation_km, site.tropopause_height_km, out=h)
    return HeightImage(h)


# ---------------------------------------------------------------------------
# clear-sky window model

class ClearSkyBuffer:
    """FIFO of recent clear-sky frames feeding the window-artifact model.

    A frame enters the buffer only when the most recent ``persistence``
    sky-condition flags (including the current one) are all clear; this keeps
    frames observed during cloud-to-clear transitions out of the statistics.
    The buffer holds at most ``capacity`` frames, evicting the oldest.
    """

    def __init__(self, capacity: int = BUFFER_CAPACITY,
                 persistence: int = PERSISTENCE):
        if capacity < 1:
            raise UsageError("buffer capacity must be >= 1")
        if persistence < 1:
            raise UsageError("persistence must be >= 1")
        self.capacity = capacity
        self.persistence = persistence
        self._frames: deque[np.ndarray] = deque(maxlen=capacity)
        self._flags: deque[bool] = deque(maxlen=persistence)

    def __len__(self) -> int:
        return len(self._frames)

    def update(self, frame: TemperatureImage, is_clear: bool) -> bool:
        """Record a sky-condition flag; buffer the frame if persistence holds.

        Returns True when the frame was appended.
        """
        self._flags.append(bool(is_clear))
        if len(self._flags) == self.persistence and all(self._flags):
            self._frames.append(frame.data)
            return True
        return False

    def frames(self) -> list[np.ndarray]:
        return list(self._frames)


def window_artifact(buffer: ClearSkyBuffer) -> TemperatureImage:
    """Per-pixel median over the buffered clear frames.

    The median is robust to residual clouds that slipped past the persistence
    rule.  Raises :class:`DataError` when the buffer is empty.
    """
    frames = buffer.frames()
    if not frames:
        raise DataError("clear-sky buffer is empty; no window artifact available")
    return TemperatureImage(np.median(np.stack(frames), axis=0))


def remove_artifact(frame: TemperatureImage,
                    artifact: TemperatureImage) -> TemperatureImage:
    """Subtract the window artifact, re-adding its spatial mean.

    Re-adding the mean keeps the corrected frame on the absolute centikelvin
    scale instead of turning it into a zero-centered residual.  Values are
    floored at zero to stay a valid temperature image.
    """
    if frame.shape != artifact.shape:
        raise DataError(f"frame shape {frame.shape} != artifact shape {artifact.shape}")
    corrected = frame.data - artifact.data + artifact.data.mean()
    return TemperatureImage(np.clip(corrected, 0.0, None))


# ---------------------------------------------------------------------------
# atmospheric background

class BackgroundModel(Protocol):
    """Estimates the tropopause (clear-sky background) temperature of a frame."""

    def tropopause_temperature(self, frame: TemperatureImage) -> float:
        ...


@dataclass(frozen=True)
class QuantileBackground:
    """Tropopause temperature as a low quantile of the frame.

    With mostly-clear or partly-cloudy skies the coldest pixels are clear air
    near the background temperature, so a small quantile tracks it without an
    auxiliary weather feed.
    """

    q: float = 0.05

    def __post_init__(self):
        if not 0 <= self.q <= 1:
            raise UsageError(f"background quantile must be in [0, 1], got {self.q}")

    def tropopause_temperature(self, frame: TemperatureImage) -> float:
        return float(np.quantile(frame.data, self.q))


def background_residual(frame: TemperatureImage, site: SiteParams,
                        model: BackgroundModel) -> tuple[np.ndarray, np.ndarray]:
    """Residual temperature and height against the background estimate.

    Returns ``(dT, H'')`` where ``dT = T' - T_tropopause`` (signed; positive
    exactly where the frame exceeds the background) and ``H''`` is the height
    deficit below the background's height level scaled by the background
    temperature in kelvin (clamped at zero).
    """
    t_bg = model.tropopause_temperature(frame)
    d_t = frame.data - t_bg
    h = malr_height(frame, site).data
    h_bg = site.elevation_km + (
        site.surface_temperature_ck - t_bg) / site.lapse_rate_ck_per_km
    h_bg = min(max(h_bg, site.elevation_km), site.tropopause_height_km)
    h_resid = np.clip(h_bg - h, 0.0, None) * (t_bg / 100.0)
    return d_t, h_resid


def normalize_8bit(d_t: np.ndarray, site: SiteParams) -> np.ndarray:
    """Normalize a residual field to 8-bit intensities.

    The denominator is the fixed feasible temperature span of the site (the
    surface-to-tropopause range under the lapse-rate model), not the frame's
    own range, so intensities are comparable across frames::

        i = round(255 * clamp((dT - min dT) / feasible, 0, 1))

    A constant field maps to all zeros.
    """
    shifted = np.asarray(d_t, dtype=np.float64) - np.min(d_t)
    frac = np.clip(shifted / site.feasible_delta_ck, 0.0, 1.0)
    return np.floor(255.0 * frac + 0.5)


# ---------------------------------------------------------------------------
# per-frame bundle and per-pixel feature matrices

@dataclass(frozen=True)
class FrameBundle:
    """All aligned per-pixel fields derived from one frame."""

    temperature: np.ndarray        # T   raw centikelvin
    height: np.ndarray             # H   km
    temperature_corrected: np.ndarray   # T'  window-corrected
    height_corrected: np.ndarray        # H'
    residual: np.ndarray           # dT  signed centikelvin
    height_residual: np.ndarray    # H''
    intensity: np.ndarray          # I   8-bit
    velocity: np.ndarray           # V   (rows, cols, 2) px/frame

    @property
    def shape(self) -> tuple[int, int]:
        return self.temperature.shape

    def speed(self) -> np.ndarray:
        return np.hypot(self.velocity[..., 0], self.velocity[..., 1])


VARIANTS = ("x1", "x2", "x3", "x4")
NEIGHBORHOODS = ("single", "first", "second")

# neighbor offsets (drow, dcol): center, then the 4-neighborhood
# (up, left, right, down), then the diagonals (NW, NE, SW, SE).
_OFFSETS = ((0, 0),
            (-1, 0), (0, -1), (0, 1), (1, 0),
            (-1, -1), (-1, 1), (1, -1), (1, 1))
_NEIGHBOR_COUNT = {"single": 1, "first": 5, "second": 9}


@dataclass(frozen=True)
class FeatureSpec:
    """Which fields, how much context, and how much expansion.

    ``variant`` picks the base fields: ``x1 = (T, H)``, ``x2 = (T', H')``,
    ``x3 = (dT, H'')``, ``x4 = (|V|, I, dT)``.  ``neighborhood`` appends the
    same fields sampled at the 4- or 8-neighbors (edges replicate).
    ``expansion_order``/``expansion_bias`` parameterize the polynomial map
    applied by the discriminative models; order 1 with bias ``a0`` prepends a
    constant ``sqrt(a0)`` column.
    """

    variant: str = "x3"
    neighborhood: str = "single"
    expansion_order: int = 1
    expansion_bias: float = 1.0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise UsageError(f"unknown feature variant {self.variant!r}")
        if self.neighborhood not in NEIGHBORHOODS:
            raise UsageError(f"unknown neighborhood {self.neighborhood!r}")
        if self.expansion_order < 1:
            raise UsageError("expansion order must be >= 1")
        if self.expansion_bias < 0:
            raise UsageError("expansion bias must be >= 0")

    @property
    def base_fields(self) -> tuple[str, ...]:
        return {"x1": ("T", "H"),
                "x2": ("Tc", "Hc"),
                "x3": ("dT", "Hr"),
                "x4": ("speed", "I", "dT")}[self.variant]

    @property
    def base_dim(self) -> int:
        return len(self.base_fields) * _NEIGHBOR_COUNT[self.neighborhood]

    def to_dict(self) -> dict:
        return {"variant": self.variant, "neighborhood": self.neighborhood,
                "expansion_order": self.expansion_order,
                "expansion_bias": self.expansion_bias}

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureSpec":
        return cls(**d)


_FIELD_ARRAYS = {
    "T": lambda b: b.temperature,
    "H": lambda b: b.height,
    "Tc": lambda b: b.temperature_corrected,
    "Hc": lambda b: b.height_corrected,
    "dT": lambda b: b.residual,
    "Hr": lambda b: b.height_residual,
    "I": lambda b: b.intensity,
    "speed": lambda b: b.speed(),
}


@dataclass(frozen=True)
class FeatureMatrix:
    """Row-major per-pixel features with column provenance."""

    values: np.ndarray
    columns: tuple[str, ...]
    frame_shape: tuple[int, int]

    def __post_init__(self):
        if self.values.ndim != 2 or self.values.shape[1] != len(self.columns):
            raise UsageError("feature matrix/column mismatch")


def assemble(bundle: FrameBundle, spec: FeatureSpec) -> FeatureMatrix:
    """Build the (pixels x features) matrix for one frame.

    Rows follow row-major pixel order.  Neighborhood context is gathered with
    edge replication, one block of base fields per offset, offsets ordered
    center, 4-neighbors, diagonals.
    """
    rows, cols = bundle.shape
    fields = [(name, _FIELD_ARRAYS[name](bundle)) for name in spec.base_fields]
    padded = {name: np.pad(arr, 1, mode="edge") for name, arr in fields}
    blocks, names = [], []
    for drow, dcol in _OFFSETS[:_NEIGHBOR_COUNT[spec.neighborhood]]:
        for name, _ in fields:
            view = padded[name][1 + drow: 1 + drow + rows,
                                1 + dcol: 1 + dcol + cols]
            blocks.append(view.reshape(-1))
            names.append(f"{name}@{drow:+d}{dcol:+d}" if (drow, dcol) != (0, 0)
                         else name)
    values = np.column_stack(blocks)
    return FeatureMatrix(values, tuple(names), (rows, cols))


def expand_features(matrix: FeatureMatrix, spec: FeatureSpec) -> FeatureMatrix:
    """Apply the polynomial map of ``spec`` to an assembled matrix."""
    expanded = poly_expand(matrix.values, spec.expansion_order, spec.expansion_bias)
    names = monomial_names(list(matrix.columns), spec.expansion_order)
    return FeatureMatrix(expanded, tuple(names), matrix.frame_shape)
