"""Confusion matrices, one-vs-all metrics and report files."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .sim import LABELS, InterferenceKind, Label

CLASS_NAMES = [l.value for l in LABELS]
N_CLASSES = len(LABELS)
PER_KIND = (InterferenceKind.POWER_INCREASE, InterferenceKind.ADD_DROP, InterferenceKind.OOK)


def _indices(labels) -> np.ndarray:
    out = np.array([l.index if isinstance(l, Label) else int(l) for l in labels], dtype=np.intp)
    if out.size and (out.min() < 0 or out.max() >= N_CLASSES):
        raise ValueError(f"class index out of range [0, {N_CLASSES})")
    return out


@dataclass
class ConfusionMatrix:
    counts: np.ndarray  # rows true, columns predicted

    def normalized(self) -> np.ndarray:
        rows = self.counts.sum(axis=1, keepdims=True).astype(np.float64)
        return np.divide(self.counts, rows, out=np.zeros(self.counts.shape), where=rows > 0)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def accuracy(self) -> float:
        return float(np.trace(self.counts)) / self.total if self.total else 0.0


def confusion(true_labels: Sequence, predicted_labels: Sequence) -> ConfusionMatrix:
    t, p = _indices(true_labels), _indices(predicted_labels)
    if len(t) != len(p):
        raise ValueError(f"{len(t)} true labels but {len(p)} predictions")
    counts = np.zeros((N_CLASSES, N_CLASSES), dtype=np.int64)
    np.add.at(counts, (t, p), 1)
    return ConfusionMatrix(counts)


def _ratio(a: float, b: float) -> float:
    return a / b if b else 0.0


def one_vs_all_f1(cm: ConfusionMatrix, c: int) -> dict[str, float]:
    tp = float(cm.counts[c, c])
    fp = float(cm.counts[:, c].sum()) - tp
    fn = float(cm.counts[c, :].sum()) - tp
    precision = _ratio(tp, tp + fp)
    recall = _ratio(tp, tp + fn)
    return {"precision": precision, "recall": recall, "f1": _ratio(2 * precision * recall, precision + recall)}


def micro_recall(cm: ConfusionMatrix) -> float:
    tp = float(np.trace(cm.counts))
    fn = float(cm.counts.sum()) - tp
    return _ratio(tp, tp + fn)


@dataclass
class EvalReport:
    accuracy: float
    per_class: dict[str, dict[str, float]]
    per_kind_f1: dict[str, dict[str, float]]
    per_kind_sizes: dict[str, int]
    matrix: ConfusionMatrix

    @property
    def normalized_matrix(self) -> np.ndarray:
        return self.matrix.normalized()

    def rows(self):
        yield "accuracy", "all", self.accuracy
        for metric in ("precision", "recall", "f1"):
            for name in CLASS_NAMES:
                yield metric, name, self.per_class[name][metric]
        for kind, scores in self.per_kind_f1.items():
            for name, value in scores.items():
                yield f"f1[{kind}]", name, value


def report(true_labels, predicted_labels, kinds: Optional[Sequence] = None) -> EvalReport:
    """Accuracy, per-class one-vs-all metrics and per-interference-kind user F1.

    Each kind group holds the measurements of that kind plus every
    NoInterference measurement, so false alarms weigh on every group.
    """
    t, p = _indices(true_labels), _indices(predicted_labels)
    if len(t) == 0:
        raise ValueError("cannot evaluate an empty test set")
    cm = confusion(t, p)
    per_class = {name: one_vs_all_f1(cm, i) for i, name in enumerate(CLASS_NAMES)}
    per_kind: dict[str, dict[str, float]] = {}
    sizes: dict[str, int] = {}
    if kinds is not None:
        k = np.array([InterferenceKind(x).value for x in kinds])
        if len(k) != len(t):
            raise ValueError("kinds must align with labels")
        sizes[InterferenceKind.NONE.value] = int(np.sum(k == InterferenceKind.NONE.value))
        for kind in PER_KIND:
            mask = k == kind.value
            sizes[kind.value] = int(mask.sum())
            group = mask | (t == Label.NONE.index)
            sub = confusion(t[group], p[group])
            per_kind[kind.value] = {name: one_vs_all_f1(sub, i)["f1"] for i, name in enumerate(CLASS_NAMES)
                                    if i != Label.NONE.index}
    return EvalReport(cm.accuracy, per_class, per_kind, sizes, cm)


def write_report(rep: EvalReport, out_dir) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {name: out / name for name in ("report.csv", "confusion.csv", "confusion_counts.csv")}
    with paths["report.csv"].open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["metric", "class", "value"])
        for metric, cls, value in rep.rows():
            w.writerow([metric, cls, repr(float(value))])
    for key, mat in (("confusion.csv", rep.normalized_matrix), ("confusion_counts.csv", rep.matrix.counts)):
        with paths[key].open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["true\\predicted", *CLASS_NAMES])
            for name, row in zip(CLASS_NAMES, mat):
                w.writerow([name, *(repr(float(v)) if key == "confusion.csv" else int(v) for v in row)])
    return paths


def read_report(path) -> dict[tuple[str, str], float]:
    with Path(path).open() as fh:
        return {(r["metric"], r["class"]): float(r["value"]) for r in csv.DictReader(fh)}


def moving_average(values: Sequence[float], window: int = 25) -> np.ndarray:
    """Trailing mean over up to ``window`` points (shorter at the start)."""
    v = np.asarray(values, dtype=np.float64)
    if window < 1:
        raise ValueError("window must be positive")
    c = np.concatenate([[0.0], np.cumsum(v)])
    idx = np.arange(1, len(v) + 1)
    lo = np.maximum(idx - window, 0)
    return (c[idx] - c[lo]) / (idx - lo)
