"""Binary PGM (P5) input/output.

Two concrete on-disk layouts are supported:

* **frames** — 16-bit grayscale, ``maxval`` 65535, big-endian samples.  Pixel
  values are raw centikelvin temperatures and survive a round trip bit-exactly.
* **masks** — 8-bit grayscale, ``maxval`` 255, samples restricted to
  ``{0, 255}`` which map to labels ``{0, 1}``.

Posterior probability maps reuse the 16-bit layout with ``[0, 1]`` linearly
scaled onto ``[0, 65535]``.
"""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np

from .errors import DataError
from .grid import MAX_SAMPLE, LabelMask, TemperatureImage

# Refuse to allocate frames beyond this many pixels; malformed headers can
# otherwise request absurd buffers.
_MAX_PIXELS = 100_000_000


def _read_header(buf: bytes, path) -> tuple[int, int, int, int]:
    """Parse a P5 header, returning (width, height, maxval, data_offset)."""
    if buf[:2] != b"P5":
        raise DataError(f"{path}: not a binary PGM (missing P5 magic)")
    pos = 2
    fields: list[int] = []
    while len(fields) < 3:
        if pos >= len(buf):
            raise DataError(f"{path}: truncated PGM header")
        c = buf[pos : pos + 1]
        if c == b"#":  # comment runs to end of line
            while pos < len(buf) and buf[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif c.isspace():
            pos += 1
        elif c.isdigit():
            start = pos
            while pos < len(buf) and buf[pos : pos + 1].isdigit():
                pos += 1
            fields.append(int(buf[start:pos]))
        else:
            raise DataError(f"{path}: malformed PGM header near byte {pos}")
    # exactly one whitespace byte separates the header from the payload
    if pos >= len(buf) or not buf[pos : pos + 1].isspace():
        raise DataError(f"{path}: malformed PGM header (no separator)")
    pos += 1
    width, height, maxval = fields
    if width <= 0 or height <= 0:
        raise DataError(f"{path}: invalid PGM dimensions {width}x{height}")
    if width * height > _MAX_PIXELS:
        raise DataError(f"{path}: frame dimensions {width}x{height} exceed limit")
    return width, height, maxval, pos


def _read_payload(buf: bytes, offset: int, width: int, height: int,
                  dtype, path) -> np.ndarray:
    n = width * height
    expected = n * np.dtype(dtype).itemsize
    payload = buf[offset : offset + expected]
    if len(payload) != expected:
        raise DataError(f"{path}: truncated PGM payload "
                        f"({len(payload)} of {expected} bytes)")
    return np.frombuffer(payload, dtype=dtype).reshape(height, width)


def load_frame(path) -> TemperatureImage:
    """Load a 16-bit temperature frame.

    Raises :class:`DataError` for missing files, malformed headers, 8-bit
    inputs (unsupported bit depth), or truncated payloads.
    """
    path = Path(path)
    try:
        buf = path.read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read frame {path}: {exc}") from exc
    width, height, maxval, offset = _read_header(buf, path)
    if maxval != MAX_SAMPLE:
        raise DataError(
            f"{path}: unsupported bit depth (maxval {maxval}, expected {MAX_SAMPLE})")
    raw = _read_payload(buf, offset, width, height, ">u2", path)
    return TemperatureImage(raw.astype(np.float64))


def write_frame(path, image: TemperatureImage) -> None:
    """Write a frame as canonical 16-bit P5 (bit-exact round trip)."""
    arr = image.data
    if not np.array_equal(arr, np.rint(arr)):
        raise DataError("frame values must be integral to write 16-bit PGM")
    if arr.max() > MAX_SAMPLE:
        raise DataError(f"frame values exceed {MAX_SAMPLE}")
    _write_p5(path, arr.astype(">u2"), MAX_SAMPLE)


def load_mask(path) -> LabelMask:
    """Load an 8-bit binary mask; 0 -> clear (0), 255 -> cloud (1)."""
    path = Path(path)
    try:
        buf = path.read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read mask {path}: {exc}") from exc
    width, height, maxval, offset = _read_header(buf, path)
    if maxval != 255:
        raise DataError(f"{path}: unsupported bit depth for mask (maxval {maxval})")
    raw = _read_payload(buf, offset, width, height, np.uint8, path)
    bad = ~np.isin(raw, (0, 255))
    if bad.any():
        raise DataError(f"{path}: mask contains values other than 0 and 255")
    return LabelMask((raw == 255).astype(np.uint8))


def write_mask(path, mask: LabelMask) -> None:
    """Write a binary mask as 8-bit P5 with samples in {0, 255}."""
    _write_p5(path, (mask.data * np.uint8(255)), 255)


def write_posterior(path, probs: np.ndarray) -> None:
    """Write a posterior probability map as 16-bit P5.

    ``[0, 1]`` maps linearly onto ``[0, 65535]`` (rounded).
    """
    arr = np.asarray(probs, dtype=np.float64)
    if arr.ndim != 2 or not np.all(np.isfinite(arr)):
        raise DataError("posterior map must be a finite 2-D array")
    if arr.min() < 0 or arr.max() > 1:
        raise DataError("posterior values must lie in [0, 1]")
    scaled = np.floor(arr * MAX_SAMPLE + 0.5).astype(">u2")
    _write_p5(path, scaled, MAX_SAMPLE)


def load_posterior(path) -> np.ndarray:
    """Read back a 16-bit posterior map as floats in [0, 1]."""
    frame = load_frame(path)
    return frame.data / MAX_SAMPLE


def _write_p5(path, samples: np.ndarray, maxval: int) -> None:
    height, width = samples.shape
    header = f"P5\n{width} {height}\n{maxval}\n".encode("ascii")
    atomic_write_bytes(path, header + samples.tobytes())


def atomic_write_bytes(path, payload: bytes) -> None:
    """Write ``payload`` to ``path`` via a temp file + rename in the same dir."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(payload)
    os.replace(tmp, path)


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))
