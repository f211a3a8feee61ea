"""Command-line interface.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numeric error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .ablation import ablation_csv, ablation_table, run_ablation
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .config import RunConfig, load_config
from .cost import cost_csv, cost_table, measure_inference
from .data import load_images, scan_dataset, synth_dataset
from .errors import CheckpointError, ConfigError, DatasetError, MobiAttnError, NumericError, ParameterError
from .imageio import read_image, write_image
from .metrics import emit_history, evaluate_predictions, parse_history
from .model import init_params, predict_proba
from .preprocess import (AugmentConfig, apply_draw, brightness_contrast, draw_augment, hflip, minmax_normalize, resize,
                         rotate, scale)
from .train import normalize_for, train

log = logging.getLogger("mobiattn")

EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _config(path) -> RunConfig:
    return load_config(path) if path else RunConfig()


def _write(path, text: str) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(text, encoding="utf-8")


def cmd_train(args) -> int:
    cfg = _config(args.config)
    index = scan_dataset(args.data, cfg.data.train_fraction, cfg.data.seed)
    spec = replace(cfg.model, num_classes=len(index.class_names), class_names=tuple(index.class_names))
    x, y = load_images(index.split("train"), spec.input_shape)
    log.info("training on %d images, %d classes", len(x), spec.num_classes)
    result = train(spec, cfg.train, x, y, cfg.augment)
    save_checkpoint(args.out, Checkpoint(result.spec, result.params, result.state))
    if args.history:
        _write(args.history, emit_history(result.history))
    last = result.history[-1]
    print(f"epochs {last.epoch}  train acc {last.train_acc:.4f}  val acc {last.val_acc:.4f}  "
          f"train loss {last.train_loss:.4g}  val loss {last.val_loss:.4g}")
    return 0


def _dataset_for(ckpt: Checkpoint, data: str, cfg: RunConfig):
    index = scan_dataset(data, cfg.data.train_fraction, cfg.data.seed)
    spec = ckpt.spec
    if len(index.class_names) != spec.num_classes:
        raise DatasetError(f"{data}: dataset has {len(index.class_names)} classes, checkpoint expects "
                           f"{spec.num_classes}")
    if spec.class_names is not None and tuple(index.class_names) != spec.class_names:
        raise DatasetError(f"{data}: class names {index.class_names} differ from checkpoint {list(spec.class_names)}")
    return index


def cmd_eval(args) -> int:
    ckpt = load_checkpoint(args.ckpt)
    cfg = _config(args.config)
    index = _dataset_for(ckpt, args.data, cfg)
    samples = index.split(args.split)
    if not samples:
        raise DatasetError(f"{args.data}: split {args.split!r} is empty")
    x, y = load_images(samples, ckpt.spec.input_shape)
    probs = predict_proba(ckpt.spec, ckpt.params, normalize_for(ckpt.spec, x))
    report = evaluate_predictions(probs, y, index.class_names)
    doc = report.to_dict()
    doc["split"] = args.split
    doc["roc"] = [{"class": n, "points": [[t if np.isfinite(t) else None, f, p] for t, f, p in pts]}
                  for n, pts in zip(report.class_names, report.roc.per_class_points)]
    if args.report:
        _write(args.report, json.dumps(doc, indent=2, sort_keys=True) + "\n")
    if args.roc:
        _write(args.roc, report.roc_csv())
    print(report.to_text(), end="")
    return 0


def cmd_predict(args) -> int:
    ckpt = load_checkpoint(args.ckpt)
    spec = ckpt.spec
    img = read_image(args.image)
    if img.shape[0] == 1 and spec.input_shape[0] == 3:
        img = np.repeat(img, 3, axis=0)
    if img.shape[0] != spec.input_shape[0]:
        raise DatasetError(f"{args.image}: {img.shape[0]} channels, model expects {spec.input_shape[0]}")
    x = resize(minmax_normalize(img), spec.input_shape[1], spec.input_shape[2])[None]
    probs = predict_proba(spec, ckpt.params, normalize_for(spec, x))[0]
    names = list(spec.class_names or (f"class_{i}" for i in range(spec.num_classes)))
    best = int(np.argmax(probs))
    print(f"{names[best]} {probs[best]:.6f}")
    for n, p in zip(names, probs):
        print(f"  {n}: {p:.6f}")
    return 0


def cmd_augment_preview(args) -> int:
    cfg = _config(args.config)
    aug = cfg.augment or AugmentConfig()
    img = minmax_normalize(read_image(args.image))
    d = draw_augment(aug, args.index)
    suffix = ".ppm" if img.shape[0] == 3 else ".pgm"
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    views = {
        "rotate": rotate(img, d.theta),
        "hflip": hflip(img),
        "scale": scale(img, d.scale),
        "photometric": brightness_contrast(img, d.alpha, d.beta),
        "composed": apply_draw(img, d),
    }
    for name, v in views.items():
        write_image(out / f"{name}{suffix}", v)
    print(f"theta {np.degrees(d.theta):.3f} deg  flip {d.flip}  scale {d.scale:.4f}  "
          f"alpha {d.alpha:.4f}  beta {d.beta:.4f}")
    return 0


def cmd_flops(args) -> int:
    spec = _config(args.config).model
    print(cost_table(spec), end="")
    if args.csv:
        _write(args.csv, cost_csv(spec))
    if args.time:
        store = init_params(spec, 0)
        batch = np.zeros((1,) + tuple(spec.input_shape))
        t = measure_inference(spec, store, batch, repetitions=args.time)
        print(f"measured forward, batch 1: median {t.median_ms:.2f} ms, p90 {t.p90_ms:.2f} ms "
              f"({args.time} runs, this machine)")
    return 0


def cmd_synth(args) -> int:
    names = synth_dataset(args.out, args.classes, args.per_class, args.size, args.noise, args.seed, args.channels)
    print(f"wrote {len(names)} classes x {args.per_class} images to {args.out}")
    return 0


def cmd_report(args) -> int:
    rows = parse_history(Path(args.history).read_text(encoding="utf-8"))
    out = Path(args.out)
    acc = ["epoch,train_acc,val_acc"] + [f"{r['epoch']},{r['train_acc']!r},{r['val_acc']!r}" for r in rows]
    loss = ["epoch,train_loss,val_loss"] + [f"{r['epoch']},{r['train_loss']!r},{r['val_loss']!r}" for r in rows]
    _write(out / "accuracy_vs_epoch.csv", "\n".join(acc) + "\n")
    _write(out / "loss_vs_epoch.csv", "\n".join(loss) + "\n")
    if args.eval_report:
        doc = json.loads(Path(args.eval_report).read_text(encoding="utf-8"))
        lines = ["class,threshold,fpr,tpr"]
        for entry in doc.get("roc", []):
            for t, f, p in entry["points"]:
                lines.append(f"{entry['class']},{'inf' if t is None else repr(t)},{f!r},{p!r}")
        _write(out / "roc.csv", "\n".join(lines) + "\n")
    print(f"wrote curve CSVs to {out}")
    return 0


def cmd_ablate(args) -> int:
    cfg = _config(args.config)
    index = scan_dataset(args.data, cfg.data.train_fraction, cfg.data.seed)
    spec = replace(cfg.model, num_classes=len(index.class_names), class_names=tuple(index.class_names))
    xtr, ytr = load_images(index.split("train"), spec.input_shape)
    test = index.split("test")
    if not test:
        raise DatasetError(f"{args.data}: test split is empty")
    xte, yte = load_images(test, spec.input_shape)
    rows = run_ablation(spec, cfg.train, xtr, ytr, xte, yte, cfg.augment)
    print(ablation_table(rows), end="")
    if args.out:
        _write(args.out, ablation_csv(rows))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mobiattn", description="Depthwise-separable CNN with channel/spatial attention.")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true", help="log per-epoch progress")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("train", help="train a model on a class-per-directory dataset")
    s.add_argument("--config")
    s.add_argument("--data", required=True)
    s.add_argument("--out", required=True, help="checkpoint path")
    s.add_argument("--history", help="per-epoch history CSV")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", help="evaluate a checkpoint on a dataset split")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--config", help="run config (for the split seed and fraction)")
    s.add_argument("--split", default="test", choices=("train", "test"))
    s.add_argument("--report", help="write the evaluation report as JSON")
    s.add_argument("--roc", help="write ROC points as CSV")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("predict", help="classify one image")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--image", required=True)
    s.set_defaults(func=cmd_predict)

    s = sub.add_parser("augment-preview", help="write each augmentation of an image")
    s.add_argument("--config")
    s.add_argument("--image", required=True)
    s.add_argument("--out-dir", required=True)
    s.add_argument("--index", type=int, default=0, help="sample index for the random draw")
    s.set_defaults(func=cmd_augment_preview)

    s = sub.add_parser("flops", help="parameter and MAC tables")
    s.add_argument("--config")
    s.add_argument("--csv")
    s.add_argument("--time", type=int, default=0, metavar="N", help="also time N forward passes (N >= 3)")
    s.set_defaults(func=cmd_flops)

    s = sub.add_parser("synth", help="generate a synthetic PGM/PPM dataset")
    s.add_argument("--classes", type=int, default=5)
    s.add_argument("--per-class", type=int, default=100)
    s.add_argument("--size", type=int, default=32)
    s.add_argument("--noise", type=float, default=0.05)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--channels", type=int, default=3, choices=(1, 3))
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("report", help="plot-ready curve CSVs from a history (and ROC from an eval report)")
    s.add_argument("--history", required=True)
    s.add_argument("--eval-report")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_report)

    s = sub.add_parser("ablate", help="train with each attention mode and compare")
    s.add_argument("--config")
    s.add_argument("--data", required=True)
    s.add_argument("--out", help="comparison CSV")
    s.set_defaults(func=cmd_ablate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (ConfigError, ParameterError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DatasetError, CheckpointError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except MobiAttnError as exc:  # remaining shape/parameter problems stem from the invocation
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
