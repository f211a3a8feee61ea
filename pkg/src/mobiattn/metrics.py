"""Classification metrics: confusion matrix, precision/recall/F1, one-vs-rest ROC and AUC."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .errors import ParameterError


def confusion(labels: Sequence[int], predictions: Sequence[int], num_classes: int) -> np.ndarray:
    """C x C counts, rows = actual class, columns = predicted class."""
    y = np.asarray(labels, dtype=np.int64).reshape(-1)
    p = np.asarray(predictions, dtype=np.int64).reshape(-1)
    if y.shape != p.shape:
        raise ParameterError(f"confusion: {len(y)} labels vs {len(p)} predictions")
    for name, arr in (("label", y), ("prediction", p)):
        if arr.size and (arr.min() < 0 or arr.max() >= num_classes):
            raise ParameterError(f"confusion: {name} index out of range for {num_classes} classes")
    cm = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(cm, (y, p), 1)
    return cm


def predict_labels(scores: np.ndarray) -> np.ndarray:
    """Row-wise argmax; ties go to the lowest class index."""
    return np.asarray(scores).argmax(axis=1)


@dataclass
class ClassMetrics:
    precision: Fraction
    recall: Fraction
    f1: Fraction
    support: int
    # names of metrics whose denominator was zero (reported as 0)
    undefined: list[str] = field(default_factory=list)


@dataclass
class PRF:
    accuracy: Fraction
    per_class: list[ClassMetrics]
    macro_precision: Fraction
    macro_recall: Fraction
    macro_f1: Fraction


def _ratio(num: int, den: int) -> Fraction | None:
    return Fraction(num, den) if den else None


def prf(cm: np.ndarray) -> PRF:
    """Exact (rational) per-class and macro-averaged precision, recall and F1, plus accuracy."""
    cm = np.asarray(cm, dtype=np.int64)
    total = int(cm.sum())
    if total == 0:
        raise ParameterError("prf: confusion matrix is empty")
    per_class = []
    for c in range(cm.shape[0]):
        tp = int(cm[c, c])
        undefined = []
        p = _ratio(tp, int(cm[:, c].sum()))
        r = _ratio(tp, int(cm[c, :].sum()))
        if p is None:
            undefined.append("precision")
            p = Fraction(0)
        if r is None:
            undefined.append("recall")
            r = Fraction(0)
        if p + r == 0:
            undefined.append("f1")
            f1 = Fraction(0)
        else:
            f1 = 2 * p * r / (p + r)
        per_class.append(ClassMetrics(p, r, f1, int(cm[c, :].sum()), undefined))
    k = len(per_class)
    return PRF(
        accuracy=Fraction(int(np.trace(cm)), total),
        per_class=per_class,
        macro_precision=sum((m.precision for m in per_class), Fraction(0)) / k,
        macro_recall=sum((m.recall for m in per_class), Fraction(0)) / k,
        macro_f1=sum((m.f1 for m in per_class), Fraction(0)) / k,
    )


def binary_auc(scores: np.ndarray, positive: np.ndarray) -> float:
    """Mann-Whitney AUC: P(score_pos > score_neg) + 0.5 P(tie), via midranks."""
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    positive = np.asarray(positive, dtype=bool).reshape(-1)
    n_pos = int(positive.sum())
    n_neg = positive.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ParameterError("AUC undefined: need at least one positive and one negative sample")
    order = np.argsort(scores, kind="mergesort")
    sorted_scores = scores[order]
    ranks = np.empty(scores.size, dtype=np.float64)
    # midranks for tied groups; doubled to stay in integers
    starts = np.flatnonzero(np.r_[True, sorted_scores[1:] != sorted_scores[:-1]])
    ends = np.r_[starts[1:], scores.size]
    for s, e in zip(starts, ends):
        ranks[order[s:e]] = s + e + 1  # = 2 * midrank (1-based)
    u2 = ranks[positive].sum() - n_pos * (n_pos + 1)
    return float(u2 / (2.0 * n_pos * n_neg))


def roc_points(scores: np.ndarray, positive: np.ndarray) -> list[tuple[float, float, float]]:
    """(threshold, fpr, tpr) for every distinct score, descending, starting at (inf, 0, 0)."""
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    positive = np.asarray(positive, dtype=bool).reshape(-1)
    n_pos = max(int(positive.sum()), 1)
    n_neg = max(positive.size - int(positive.sum()), 1)
    order = np.argsort(-scores, kind="mergesort")
    s = scores[order]
    tp = np.cumsum(positive[order])
    fp = np.cumsum(~positive[order])
    last = np.r_[s[1:] != s[:-1], True]
    pts = [(float("inf"), 0.0, 0.0)]
    pts += [(float(t), float(f) / n_neg, float(p) / n_pos) for t, f, p in zip(s[last], fp[last], tp[last])]
    return pts


@dataclass
class RocReport:
    per_class_auc: list[float | None]
    per_class_points: list[list[tuple[float, float, float]]]
    macro_auc: float | None
    micro_auc: float | None
    undefined_classes: list[int]


def roc_auc(scores: np.ndarray, labels: Sequence[int]) -> RocReport:
    """One-vs-rest ROC per class, macro AUC (mean over defined classes) and micro AUC (pooled)."""
    scores = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    n, k = scores.shape
    onehot = np.zeros((n, k), dtype=bool)
    onehot[np.arange(n), y] = True
    aucs, points, undefined = [], [], []
    for c in range(k):
        points.append(roc_points(scores[:, c], onehot[:, c]))
        try:
            aucs.append(binary_auc(scores[:, c], onehot[:, c]))
        except ParameterError:
            aucs.append(None)
            undefined.append(c)
    defined = [a for a in aucs if a is not None]
    macro = float(np.mean(defined)) if defined else None
    try:
        micro = binary_auc(scores.reshape(-1), onehot.reshape(-1))
    except ParameterError:
        micro = None
    return RocReport(aucs, points, macro, micro, undefined)


@dataclass
class EvalReport:
    class_names: list[str]
    confusion: np.ndarray
    prf: PRF
    roc: RocReport
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        per_class = []
        for i, name in enumerate(self.class_names):
            m = self.prf.per_class[i]
            per_class.append({
                "class": name,
                "precision": float(m.precision),
                "recall": float(m.recall),
                "f1": float(m.f1),
                "support": m.support,
                "undefined": m.undefined,
                "auc": self.roc.per_class_auc[i],
            })
        return {
            "accuracy": float(self.prf.accuracy),
            "macro": {
                "precision": float(self.prf.macro_precision),
                "recall": float(self.prf.macro_recall),
                "f1": float(self.prf.macro_f1),
                "auc": self.roc.macro_auc,
            },
            "micro_auc": self.roc.micro_auc,
            "per_class": per_class,
            "confusion": {"classes": self.class_names, "rows_actual_cols_predicted": self.confusion.tolist()},
            "notes": self.notes,
        }

    def to_text(self) -> str:
        names = self.class_names
        w = max(8, *(len(n) for n in names))
        lines = [f"accuracy {float(self.prf.accuracy):.4f}", ""]
        lines.append(f"{'class':<{w}} {'precision':>9} {'recall':>9} {'f1':>9} {'auc':>9} {'support':>8}")
        for i, n in enumerate(names):
            m = self.prf.per_class[i]
            auc = self.roc.per_class_auc[i]
            auc_s = f"{auc:9.4f}" if auc is not None else f"{'n/a':>9}"
            lines.append(f"{n:<{w}} {float(m.precision):9.4f} {float(m.recall):9.4f} {float(m.f1):9.4f} "
                         f"{auc_s} {m.support:8d}")
        macro_auc = f"{self.roc.macro_auc:9.4f}" if self.roc.macro_auc is not None else f"{'n/a':>9}"
        lines.append(f"{'macro':<{w}} {float(self.prf.macro_precision):9.4f} {float(self.prf.macro_recall):9.4f} "
                     f"{float(self.prf.macro_f1):9.4f} {macro_auc}")
        if self.roc.micro_auc is not None:
            lines.append(f"{'micro auc':<{w}} {self.roc.micro_auc:.4f}")
        lines += ["", "confusion (rows actual, cols predicted)"]
        lines.append(" " * w + "".join(f"{n:>8}" for n in names))
        for i, n in enumerate(names):
            lines.append(f"{n:<{w}}" + "".join(f"{v:8d}" for v in self.confusion[i]))
        lines += [f"note: {s}" for s in self.notes]
        return "\n".join(lines) + "\n"

    def roc_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["class", "threshold", "fpr", "tpr"])
        for name, pts in zip(self.class_names, self.roc.per_class_points):
            for t, f, p in pts:
                wr.writerow([name, repr(t), repr(f), repr(p)])
        return buf.getvalue()


def evaluate_predictions(scores: np.ndarray, labels: Sequence[int], class_names: list[str]) -> EvalReport:
    scores = np.asarray(scores, dtype=np.float64)
    cm = confusion(labels, predict_labels(scores), len(class_names))
    return EvalReport(list(class_names), cm, prf(cm), roc_auc(scores, labels))


def report_from_confusion(cm: np.ndarray, class_names: list[str], notes: Sequence[str] = ()) -> EvalReport:
    """Report built from counts alone; ROC fields are marked undefined since no scores exist."""
    cm = np.asarray(cm, dtype=np.int64)
    k = cm.shape[0]
    if cm.shape != (k, k) or len(class_names) != k:
        raise ParameterError(f"confusion matrix {cm.shape} does not match {len(class_names)} class names")
    roc = RocReport([None] * k, [[] for _ in range(k)], None, None, list(range(k)))
    return EvalReport(list(class_names), cm, prf(cm), roc, list(notes))


HISTORY_COLUMNS = ("epoch", "train_acc", "val_acc", "train_loss", "val_loss")


def emit_history(history) -> str:
    """CSV with one row per epoch; accepts records with the five history attributes."""
    if not history:
        raise ParameterError("emit_history: empty history")
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(HISTORY_COLUMNS)
    for rec in history:
        wr.writerow([rec.epoch] + [repr(float(getattr(rec, c))) for c in HISTORY_COLUMNS[1:]])
    return buf.getvalue()


def parse_history(text: str) -> list[dict[str, float]]:
    rows = list(csv.DictReader(io.StringIO(text)))
    if not rows or tuple(rows[0].keys()) != HISTORY_COLUMNS:
        raise ParameterError(f"history CSV must have columns {HISTORY_COLUMNS}")
    return [{"epoch": int(r["epoch"]), **{c: float(r[c]) for c in HISTORY_COLUMNS[1:]}} for r in rows]
