"""Command-line interface.

``irseg <command> --config FILE [--seed N] [--out DIR]`` with commands:

* ``synth``    generate a labeled synthetic dataset
* ``train``    fit one model family on a manifest's train split
* ``cv``       leave-one-out model selection on the train split
* ``segment``  score frames with a saved model (posterior + mask maps)
* ``bench``    per-frame prediction timing for a saved model
* ``vote``     combine saved models into a tuned voting ensemble

Flags override config values.  Exit codes: 0 success, 2 usage error,
3 data error, 4 numerical failure.  Failures print exactly one
machine-parsable line to stderr of the form ``irseg-error {json}``.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig, load_config
from .ensemble import select_subset, vote
from .errors import DataError, IrsegError, UsageError
from .evaluation import bench as run_bench
from .evaluation import confusion, loo_cv, tune_lambda
from .grid import LabelMask
from .manifest import load_manifest
from .model_io import load_ensemble, load_model, save_ensemble, save_model
from .pgm import (atomic_write_text, load_frame, load_mask, write_mask,
                  write_posterior)
from .pipeline import TrainedSegmenter, evaluate, feature_grids, load_split, train
from .synth import write_dataset

log = logging.getLogger("irseg")


def _json_out(path: Path, payload: dict) -> None:
    atomic_write_text(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _out_dir(args) -> Path:
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _config(args) -> RunConfig:
    cfg = load_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg["model"]["seed"] = args.seed
    if getattr(args, "family", None):
        cfg["model"]["family"] = args.family
    return cfg


# ---------------------------------------------------------------------------
# commands

def cmd_synth(args) -> int:
    cfg = _config(args)
    out = _out_dir(args)
    scene = cfg.scene(seed=args.seed)
    manifest_path = write_dataset(scene, out)
    log.info("dataset written: %s", manifest_path)
    print(manifest_path)
    return 0


def cmd_train(args) -> int:
    cfg = _config(args)
    out = _out_dir(args)
    manifest = load_manifest(args.manifest)
    family = cfg.family()
    segmenter = train(
        family, manifest, spec=cfg.feature_spec(),
        hyper=cfg.model_hyper(), preprocessor=cfg.preprocessor(),
        seed=cfg.seed(), lambda_grid=cfg.lambda_grid())
    model_path = out / f"{family}_model.json"
    save_model(model_path, segmenter)
    log.info("model written: %s (train J = %.4f, lambda = %.4g)",
             model_path, segmenter.train_j, segmenter.lam)
    print(model_path)
    return 0


def cmd_cv(args) -> int:
    cfg = _config(args)
    out = _out_dir(args)
    manifest = load_manifest(args.manifest)
    family = cfg.family()
    frames, masks = load_split(manifest, "train")
    preproc = cfg.preprocessor().fit(frames, masks)
    bundles = preproc.bundle_sequence(frames)
    report = loo_cv(bundles, masks, family,
                    cfg.cv_hyper_grid(), cfg.cv_spec_grid(),
                    seed=cfg.seed(), lambda_grid=cfg.lambda_grid())
    doc = {"schema_version": 1, **report.to_dict()}
    _json_out(out / "cv_report.json", doc)
    _json_out(out / "cv_timing.json",
              {"schema_version": 1, **report.timing_dict()})
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("variant", "neighborhood", "expansion_order",
                     "hyper", "mean_j"))
    for combo in report.combos:
        writer.writerow((combo.spec.variant, combo.spec.neighborhood,
                         combo.spec.expansion_order,
                         json.dumps(combo.hyper, sort_keys=True),
                         f"{combo.mean_j:.6f}"))
    atomic_write_text(out / "cv_report.csv", buf.getvalue())
    sel = report.selected
    log.info("selected %s %s (mean J = %.4f over %d folds)",
             sel.spec.variant, sel.hyper, sel.mean_j, report.n_folds)
    print(json.dumps({"selected_spec": sel.spec.to_dict(),
                      "selected_hyper": sel.hyper,
                      "mean_j": sel.mean_j}, sort_keys=True))
    return 0


def _render_overlay(path: Path, posterior: np.ndarray, mask: LabelMask) -> None:
    from PIL import Image
    from scipy.ndimage import binary_erosion
    gray = np.floor(posterior * 255.0 + 0.5).astype(np.uint8)
    rgb = np.stack([gray] * 3, axis=-1)
    edge = mask.data.astype(bool) & ~binary_erosion(mask.data.astype(bool))
    rgb[edge] = (255, 0, 0)
    Image.fromarray(rgb, mode="RGB").save(path)


def cmd_segment(args) -> int:
    out = _out_dir(args)
    segmenter = load_model(args.model)
    frames = [load_frame(p) for p in args.frames]
    result = segmenter.segment(frames)
    for src, posterior, mask in zip(args.frames, result.posteriors,
                                    result.masks):
        stem = Path(src).stem
        write_posterior(out / f"{stem}_posterior.pgm", posterior)
        write_mask(out / f"{stem}_mask.pgm", mask)
        if args.render:
            _render_overlay(out / f"{stem}_overlay.png", posterior, mask)
    if args.labels:
        if len(args.labels) != len(args.frames):
            raise UsageError("--labels count must match the frame count")
        truth = [load_mask(p) for p in args.labels]
        scores = evaluate(segmenter, frames, truth)
        _json_out(out / "scores.json", {"schema_version": 1, **scores})
        log.info("pooled J = %.4f", scores["j"])
        print(json.dumps({"j": scores["j"], "accuracy": scores["accuracy"]}))
    else:
        print(json.dumps({"frames": len(frames)}))
    return 0


def cmd_bench(args) -> int:
    out = _out_dir(args)
    segmenter = load_model(args.model)
    manifest = load_manifest(args.manifest)
    frames, _ = load_split(manifest, args.split)
    bundles = segmenter.preprocessor.bundle_sequence(frames)
    result = run_bench(segmenter.fitted, bundles, reps=args.reps,
                       include_features=args.include_features)
    _json_out(out / "bench.json", {"schema_version": 1, **result.to_dict()})
    log.info("median per-frame prediction: %.3f ms", result.median_ms)
    print(json.dumps({"median_ms": result.median_ms, "mean_ms": result.mean_ms}))
    return 0


def cmd_vote(args) -> int:
    cfg = _config(args)
    out = _out_dir(args)
    members = [load_model(p) for p in args.models]
    if len(members) < 2:
        raise UsageError("vote needs at least two member models")
    manifest = load_manifest(args.manifest)
    split = args.split or cfg["vote"]["split"]
    frames, masks = load_split(manifest, split)
    truth = np.concatenate([m.data.reshape(-1) for m in masks])
    hard = bool(args.hard or cfg["vote"]["hard"])

    named = []
    for path, member in zip(args.models, members):
        maps = member.posterior_maps(frames)
        named.append((Path(path).name, np.stack(maps)))

    if args.select:
        choice = select_subset(named, truth, hard=hard,
                               lambda_grid=cfg.lambda_grid())
        picked = [args.models[i] for i in choice.indices]
        tuned = choice.tuned
        names = choice.names
    else:
        combined = vote([m for _, m in named], hard=hard)
        tuned = tune_lambda(combined, truth, cfg.lambda_grid())
        picked = list(args.models)
        names = tuple(n for n, _ in named)

    ensemble_path = out / "ensemble.json"
    save_ensemble(ensemble_path, picked, tuned.lam, hard=hard,
                  validation_j=tuned.j)
    log.info("ensemble %s: J = %.4f with lambda = %.4g",
             ", ".join(names), tuned.j, tuned.lam)
    print(json.dumps({"members": list(names), "j": tuned.j,
                      "lambda": tuned.lam}, sort_keys=True))
    return 0


# ---------------------------------------------------------------------------
# argument parsing

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="irseg",
        description="Cloud segmentation for longwave infrared sky imagers")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="TOML configuration file")
        p.add_argument("--seed", type=int, help="override the configured seed")
        p.add_argument("--out", help="output directory (default: cwd)")
        p.add_argument("-v", "--verbose", action="store_true")

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    common(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="fit a model family")
    common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--family", help="override the configured model family")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("cv", help="leave-one-out model selection")
    common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--family", help="override the configured model family")
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("segment", help="segment frames with a saved model")
    common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--labels", nargs="*", default=[],
                   help="ground-truth masks (enables scoring)")
    p.add_argument("--render", action="store_true",
                   help="also write PNG overlays")
    p.add_argument("frames", nargs="+")
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("bench", help="time per-frame prediction")
    common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--split", default="test", choices=("train", "test"))
    p.add_argument("--reps", type=int, default=10)
    p.add_argument("--include-features", action="store_true")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("vote", help="build a voting ensemble")
    common(p)
    p.add_argument("--models", nargs="+", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--split", choices=("train", "test"))
    p.add_argument("--select", action="store_true",
                   help="search member subsets for the best J")
    p.add_argument("--hard", action="store_true",
                   help="majority vote instead of posterior averaging")
    p.set_defaults(func=cmd_vote)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse uses 0 for --help/--version and 2 for bad usage
        return 0 if not exc.code else 2
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except IrsegError as exc:
        line = json.dumps({"type": type(exc).__name__, "message": str(exc),
                           "exit_code": exc.exit_code})
        print(f"irseg-error {line}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
