"""Attention ablation: train the same backbone with each attention mode and compare."""

from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass, replace

import numpy as np

from .cost import model_cost
from .model import ATTENTION_MODES, ModelSpec
from .preprocess import AugmentConfig
from .train import TrainConfig, evaluate, normalize_for, train


@dataclass(frozen=True)
class AblationRow:
    attention: str
    params: int
    epochs_run: int
    train_acc: float
    test_acc: float
    test_loss: float
    seconds: float


def run_ablation(spec: ModelSpec, config: TrainConfig, train_x: np.ndarray, train_y: np.ndarray,
                 test_x: np.ndarray, test_y: np.ndarray, augment_cfg: AugmentConfig | None = None,
                 modes=ATTENTION_MODES) -> list[AblationRow]:
    rows = []
    for mode in modes:
        s = replace(spec, attention=mode)
        t0 = time.perf_counter()
        res = train(s, config, train_x, train_y, augment_cfg)
        elapsed = time.perf_counter() - t0
        _, train_acc = evaluate(res.spec, res.params, normalize_for(res.spec, train_x), train_y)
        test_loss, test_acc = evaluate(res.spec, res.params, normalize_for(res.spec, test_x), test_y)
        rows.append(AblationRow(mode, model_cost(s).params, len(res.history), train_acc, test_acc,
                                test_loss, elapsed))
    return rows


def ablation_table(rows: list[AblationRow]) -> str:
    lines = [f"{'attention':<10} {'params':>9} {'epochs':>6} {'train acc':>9} {'test acc':>9} {'test loss':>10}"]
    for r in rows:
        lines.append(f"{r.attention:<10} {r.params:>9,d} {r.epochs_run:>6d} {r.train_acc:>9.4f} "
                     f"{r.test_acc:>9.4f} {r.test_loss:>10.4g}")
    return "\n".join(lines) + "\n"


def ablation_csv(rows: list[AblationRow]) -> str:
    """Wall-clock time is left out so the file is reproducible."""
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["attention", "params", "epochs_run", "train_acc", "test_acc", "test_loss"])
    for r in rows:
        wr.writerow([r.attention, r.params, r.epochs_run, repr(r.train_acc), repr(r.test_acc), repr(r.test_loss)])
    return buf.getvalue()
