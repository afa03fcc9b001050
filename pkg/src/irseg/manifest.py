"""Dataset manifests.

A manifest is a UTF-8 CSV with header ``frame,labels,timestamp,split`` whose
rows reference one frame (and its label mask) each.  Rows must be sorted by
timestamp and every ``train`` row must precede every ``test`` row, mirroring
the chronological train/test protocol of the experiment pipeline.  Paths are
resolved relative to the manifest's directory.
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path

from .errors import DataError
from .grid import LabelMask, TemperatureImage
from . import pgm

log = logging.getLogger(__name__)

HEADER = ("frame", "labels", "timestamp", "split")
SPLITS = ("train", "test")


@dataclass(frozen=True)
class ManifestEntry:
    frame_path: Path
    labels_path: Path
    timestamp: datetime
    split: str

    def load_frame(self) -> TemperatureImage:
        return pgm.load_frame(self.frame_path)

    def load_labels(self) -> LabelMask:
        return pgm.load_mask(self.labels_path)


@dataclass(frozen=True)
class DatasetManifest:
    entries: tuple[ManifestEntry, ...]

    def split(self, name: str) -> tuple[ManifestEntry, ...]:
        if name not in SPLITS:
            raise DataError(f"unknown split {name!r}")
        return tuple(e for e in self.entries if e.split == name)

    @property
    def train(self) -> tuple[ManifestEntry, ...]:
        return self.split("train")

    @property
    def test(self) -> tuple[ManifestEntry, ...]:
        return self.split("test")

    def pixel_counts(self) -> dict[str, int]:
        """Per-split pixel totals, read from the frame headers."""
        counts = {s: 0 for s in SPLITS}
        for e in self.entries:
            frame = pgm.load_frame(e.frame_path)
            rows, cols = frame.shape
            counts[e.split] += rows * cols
        return counts


def _parse_timestamp(text: str, row: int) -> datetime:
    try:
        return datetime.fromisoformat(text)
    except ValueError as exc:
        raise DataError(f"manifest row {row}: bad timestamp {text!r}") from exc


def load_manifest(path) -> DatasetManifest:
    """Load and validate a dataset manifest.

    Checks the header, splits, chronological ordering, the train-before-test
    rule, and that every referenced file exists.  Logs per-split counts.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read manifest {path}: {exc}") from exc
    base = path.parent
    reader = csv.reader(io.StringIO(text))
    rows = [r for r in reader if r]
    if not rows or tuple(rows[0]) != HEADER:
        raise DataError(f"{path}: manifest header must be {','.join(HEADER)}")
    entries: list[ManifestEntry] = []
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != 4:
            raise DataError(f"{path}: row {i} has {len(row)} fields, expected 4")
        frame_rel, labels_rel, ts_text, split = row
        if split not in SPLITS:
            raise DataError(f"{path}: row {i} has unknown split {split!r}")
        frame_path = (base / frame_rel).resolve()
        labels_path = (base / labels_rel).resolve()
        for p in (frame_path, labels_path):
            if not p.is_file():
                raise DataError(f"{path}: row {i} references missing file {p}")
        entries.append(ManifestEntry(frame_path, labels_path,
                                     _parse_timestamp(ts_text, i), split))
    if not entries:
        raise DataError(f"{path}: manifest contains no entries")
    for prev, cur in zip(entries, entries[1:]):
        if cur.timestamp < prev.timestamp:
            raise DataError(f"{path}: entries are not in chronological order "
                            f"({cur.timestamp} after {prev.timestamp})")
        if prev.split == "test" and cur.split == "train":
            raise DataError(f"{path}: train entry dated after a test entry")
    manifest = DatasetManifest(tuple(entries))
    log.info("manifest %s: %d train + %d test entries", path,
             len(manifest.train), len(manifest.test))
    return manifest


def write_manifest(path, rows: list[tuple[str, str, datetime, str]]) -> None:
    """Write a manifest CSV; rows are (frame, labels, timestamp, split)."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(HEADER)
    for frame_rel, labels_rel, ts, split in rows:
        writer.writerow((frame_rel, labels_rel, ts.isoformat(), split))
    pgm.atomic_write_text(Path(path), out.getvalue())
