"""Core value types for radiometric sky frames.

All images are row-major 2-D grids indexed ``[row, col]``.  Temperatures are
kept in centikelvin (the native unit of the radiometric camera stream) and
heights in kilometres.  The wrappers copy their input array and freeze it, so
a constructed image can be shared between pipeline stages without defensive
copies.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, UsageError

#: Largest sample value representable by the 16-bit frame format.
MAX_SAMPLE = 65535


def _frozen_2d(values, *, dtype=np.float64) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    if arr.ndim != 2 or arr.size == 0:
        raise DataError(f"expected a non-empty 2-D grid, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class TemperatureImage:
    """A single frame of sky temperatures in centikelvin.

    Values must be finite and nonnegative.  Raw camera frames hold integers in
    ``[0, 65535]``; derived frames (window-corrected, residual-shifted) may
    hold fractional values.
    """

    data: np.ndarray

    def __post_init__(self):
        arr = _frozen_2d(self.data)
        if not np.all(np.isfinite(arr)):
            raise DataError("temperature image contains non-finite values")
        if arr.min() < 0:
            raise DataError("temperature image contains negative values")
        object.__setattr__(self, "data", arr)

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape


@dataclass(frozen=True)
class HeightImage:
    """Per-pixel cloud height in kilometres."""

    data: np.ndarray

    def __post_init__(self):
        arr = _frozen_2d(self.data)
        if not np.all(np.isfinite(arr)):
            raise DataError("height image contains non-finite values")
        object.__setattr__(self, "data", arr)

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape


@dataclass(frozen=True)
class LabelMask:
    """Binary segmentation mask: 0 = clear sky, 1 = cloud."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.array(self.data, copy=True)
        if arr.ndim != 2 or arr.size == 0:
            raise DataError(f"expected a non-empty 2-D mask, got shape {arr.shape}")
        if not np.isin(arr, (0, 1)).all():
            raise DataError("label mask may only contain values 0 and 1")
        arr = arr.astype(np.uint8)
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def cloud_fraction(self) -> float:
        return float(self.data.mean())


@dataclass(frozen=True)
class SiteParams:
    """Atmospheric constants of the observation site.

    The defaults describe a mid-latitude site at 1.52 km elevation with a
    moist adiabatic lapse rate of 9.8 K/km and the tropopause at 11.5 km.
    ``surface_temperature_ck`` anchors the temperature-to-height map.
    """

    lapse_rate_k_per_km: float = 9.8
    tropopause_height_km: float = 11.5
    elevation_km: float = 1.52
    surface_temperature_ck: float = 28815.0

    def __post_init__(self):
        if self.lapse_rate_k_per_km <= 0:
            raise UsageError("lapse rate must be positive")
        if not 0 <= self.elevation_km < self.tropopause_height_km:
            raise UsageError("site elevation must lie below the tropopause")
        if self.surface_temperature_ck <= 0:
            raise UsageError("surface temperature must be positive")

    @property
    def lapse_rate_ck_per_km(self) -> float:
        """Lapse rate converted to centikelvin per kilometre."""
        return 100.0 * self.lapse_rate_k_per_km

    @property
    def feasible_delta_ck(self) -> float:
        """Temperature span (cK) between surface and tropopause heights.

        This is the full feasible range of sky-minus-background differences
        under the lapse-rate height model and is used as the fixed
        denominator when normalizing residual frames to 8 bits.
        """
        span_km = self.tropopause_height_km - self.elevation_km
        return self.lapse_rate_ck_per_km * span_km

    def to_dict(self) -> dict:
        return {
            "lapse_rate_k_per_km": self.lapse_rate_k_per_km,
            "tropopause_height_km": self.tropopause_height_km,
            "elevation_km": self.elevation_km,
            "surface_temperature_ck": self.surface_temperature_ck,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SiteParams":
        return cls(**d)
