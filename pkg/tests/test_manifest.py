from datetime import datetime, timedelta

import numpy as np
import pytest

from irseg.errors import DataError
from irseg.grid import LabelMask, TemperatureImage
from irseg.manifest import load_manifest, write_manifest
from irseg.pgm import write_frame, write_mask

T0 = datetime(2021, 6, 21, 12, 0, 0)


def _write_pair(root, stem, shape=(6, 4)):
    rng = np.random.default_rng(hash(stem) % 2**32)
    write_frame(root / f"{stem}.pgm",
                TemperatureImage(rng.integers(0, 65536, shape).astype(float)))
    write_mask(root / f"{stem}_mask.pgm",
               LabelMask((rng.random(shape) < 0.5).astype(np.uint8)))
    return f"{stem}.pgm", f"{stem}_mask.pgm"


def _manifest(tmp_path, rows):
    path = tmp_path / "manifest.csv"
    write_manifest(path, rows)
    return path


def test_round_trip_and_splits(tmp_path):
    rows = []
    for i in range(5):
        frame, mask = _write_pair(tmp_path, f"f{i}")
        split = "train" if i < 3 else "test"
        rows.append((frame, mask, T0 + timedelta(seconds=15 * i), split))
    man = load_manifest(_manifest(tmp_path, rows))
    assert len(man.entries) == 5
    assert len(man.train) == 3 and len(man.test) == 2
    assert man.train[0].timestamp == T0
    assert man.train[0].frame_path.is_file()
    frame = man.train[0].load_frame()
    labels = man.train[0].load_labels()
    assert frame.shape == labels.shape == (6, 4)


def test_pixel_counts_for_the_stock_scene(tmp_path, default_manifest):
    counts = default_manifest.pixel_counts()
    # 80x60 frames: 7 train + 5 test
    assert counts == {"train": 33_600, "test": 24_000}
    assert sum(counts.values()) == 57_600


def test_unknown_split_rejected(tmp_path):
    frame, mask = _write_pair(tmp_path, "a")
    path = _manifest(tmp_path, [(frame, mask, T0, "train")])
    man = load_manifest(path)
    with pytest.raises(DataError, match="unknown split"):
        man.split("validation")


def test_header_is_mandatory(tmp_path):
    frame, mask = _write_pair(tmp_path, "a")
    path = tmp_path / "manifest.csv"
    path.write_text(f"{frame},{mask},2021-06-21T12:00:00,train\n")
    with pytest.raises(DataError, match="header"):
        load_manifest(path)


def test_empty_manifest_rejected(tmp_path):
    path = tmp_path / "manifest.csv"
    path.write_text("frame,labels,timestamp,split\n")
    with pytest.raises(DataError, match="no entries"):
        load_manifest(path)


def test_missing_file_rejected(tmp_path):
    frame, mask = _write_pair(tmp_path, "a")
    path = _manifest(tmp_path, [("nope.pgm", mask, T0, "train")])
    with pytest.raises(DataError, match="missing file"):
        load_manifest(path)


def test_chronological_order_enforced(tmp_path):
    f0, m0 = _write_pair(tmp_path, "a")
    f1, m1 = _write_pair(tmp_path, "b")
    path = _manifest(tmp_path, [
        (f0, m0, T0 + timedelta(seconds=30), "train"),
        (f1, m1, T0, "train"),
    ])
    with pytest.raises(DataError, match="chronological"):
        load_manifest(path)


def test_train_after_test_rejected(tmp_path):
    f0, m0 = _write_pair(tmp_path, "a")
    f1, m1 = _write_pair(tmp_path, "b")
    path = _manifest(tmp_path, [
        (f0, m0, T0, "test"),
        (f1, m1, T0 + timedelta(seconds=30), "train"),
    ])
    with pytest.raises(DataError, match="train entry dated after a test entry"):
        load_manifest(path)


def test_bad_rows_rejected(tmp_path):
    frame, mask = _write_pair(tmp_path, "a")
    path = tmp_path / "manifest.csv"
    path.write_text("frame,labels,timestamp,split\n"
                    f"{frame},{mask},2021-06-21T12:00:00,holdout\n")
    with pytest.raises(DataError, match="unknown split 'holdout'"):
        load_manifest(path)
    path.write_text("frame,labels,timestamp,split\n"
                    f"{frame},{mask},yesterday,train\n")
    with pytest.raises(DataError, match="bad timestamp"):
        load_manifest(path)
    path.write_text("frame,labels,timestamp,split\n"
                    f"{frame},{mask},2021-06-21T12:00:00\n")
    with pytest.raises(DataError, match="expected 4"):
        load_manifest(path)
    with pytest.raises(DataError, match="cannot read manifest"):
        load_manifest(tmp_path / "missing.csv")
