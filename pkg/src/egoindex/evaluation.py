"""Segment-level ground truth, confusion matrices and precision/recall/F."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import LengthMismatch, UnlabeledFrame


def segment_ground_truth(frame_labels, segments) -> list:
    """Majority frame label per segment.

    Ties go to the key frame's label when it is among the tied labels,
    otherwise to the tied label seen first in the segment.
    """
    out = []
    for seg in segments:
        labels = []
        for f in seg.frames():
            if f >= len(frame_labels) or frame_labels[f] is None:
                raise UnlabeledFrame(f"frame {f} has no label")
            labels.append(frame_labels[f])
        counts = Counter(labels)
        top = max(counts.values())
        tied = [lab for lab in dict.fromkeys(labels) if counts[lab] == top]
        key = frame_labels[seg.key_frame]
        out.append(key if key in tied else tied[0])
    return out


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    """Rows are ground truth, columns predictions."""

    counts: np.ndarray
    labels: tuple

    def normalized(self):
        """Row-stochastic view; rows without ground truth stay zero."""
        rows = self.counts.sum(axis=1, keepdims=True).astype(float)
        return np.divide(self.counts, rows, out=np.zeros(self.counts.shape), where=rows > 0)

    @property
    def total(self):
        return int(self.counts.sum())


def confusion(truth: Sequence, predicted, labels: Sequence | None = None) -> ConfusionMatrix:
    pred = list(getattr(predicted, "labels", predicted))
    truth = list(truth)
    if len(truth) != len(pred):
        raise LengthMismatch(f"{len(truth)} ground-truth labels vs {len(pred)} predictions")
    if labels is None:
        labels = sorted(set(truth) | set(pred), key=str)
    index = {lab: i for i, lab in enumerate(labels)}
    cm = np.zeros((len(labels), len(labels)), dtype=int)
    for t, p in zip(truth, pred):
        cm[index[t], index[p]] += 1
    return ConfusionMatrix(cm, tuple(labels))


def _ratio(num, den):
    return np.divide(num, den, out=np.zeros(len(num)), where=den > 0)


def f_score(p, r):
    p, r = np.asarray(p, dtype=float), np.asarray(r, dtype=float)
    s = p + r
    return np.divide(2 * p * r, s, out=np.zeros(np.shape(s)), where=s > 0)


@dataclass(frozen=True)
class MetricsReport:
    labels: tuple
    precision: tuple
    recall: tuple
    f_score: tuple
    support: tuple
    macro_precision: float
    macro_recall: float
    macro_f_score: float
    micro_precision: float
    micro_recall: float
    micro_f_score: float
    accuracy: float
    config: dict = field(default_factory=dict, compare=False)

    def to_dict(self):
        per = {lab: {"precision": p, "recall": r, "f_score": f, "support": s}
               for lab, p, r, f, s in zip(self.labels, self.precision, self.recall,
                                          self.f_score, self.support)}
        return {"config": self.config, "accuracy": self.accuracy,
                "macro": {"precision": self.macro_precision, "recall": self.macro_recall,
                          "f_score": self.macro_f_score},
                "micro": {"precision": self.micro_precision, "recall": self.micro_recall,
                          "f_score": self.micro_f_score},
                "per_activity": per}


def metrics(cm: ConfusionMatrix, config: dict | None = None) -> MetricsReport:
    """Per-activity and averaged scores.

    Macro averages run over activities with non-zero ground truth.
    """
    c = cm.counts.astype(float)
    tp = np.diag(c)
    support = c.sum(axis=1)
    predicted = c.sum(axis=0)
    precision = _ratio(tp, predicted)
    recall = _ratio(tp, support)
    f = f_score(precision, recall)
    present = support > 0
    total = c.sum()
    micro_p = float(tp.sum() / predicted.sum()) if predicted.sum() else 0.0
    micro_r = float(tp.sum() / support.sum()) if support.sum() else 0.0

    def macro(v):
        return float(v[present].mean()) if present.any() else 0.0

    return MetricsReport(
        labels=tuple(cm.labels),
        precision=tuple(float(v) for v in precision),
        recall=tuple(float(v) for v in recall),
        f_score=tuple(float(v) for v in f),
        support=tuple(int(v) for v in support),
        macro_precision=macro(precision),
        macro_recall=macro(recall),
        macro_f_score=macro(f),
        micro_precision=micro_p,
        micro_recall=micro_r,
        micro_f_score=float(f_score(micro_p, micro_r)),
        accuracy=float(tp.sum() / total) if total else 0.0,
        config=dict(config or {}),
    )


def rank_reports(reports: Sequence[MetricsReport]) -> list:
    """Reports sorted by macro F-score, best first; input order breaks ties."""
    order = sorted(range(len(reports)), key=lambda i: (-reports[i].macro_f_score, i))
    return [reports[i] for i in order]


def best_rows(reports: Sequence[MetricsReport]) -> list:
    """The (measure, score, report) rows for best F-score, recall and precision."""
    rows = []
    for measure, attr in (("F-Score", "macro_f_score"), ("Recall", "macro_recall"),
                          ("Precision", "macro_precision")):
        i = max(range(len(reports)), key=lambda j: (getattr(reports[j], attr), -j))
        rows.append((measure, getattr(reports[i], attr), reports[i]))
    return rows


def describe_config(config: dict) -> str:
    names = {"cut": "H_c", "tpe": "H_tpe", "cld": "CLD", "loc": "Localization"}
    feats = config.get("features", "")
    label = " + ".join(names.get(f, f) for f in feats.split("+") if f)
    return f"{label} {config.get('m', '?')} states HMMs"


def format_table(reports: Sequence[MetricsReport]) -> str:
    lines = ["Measure\tScore\tConfiguration"]
    for measure, score, rep in best_rows(reports):
        lines.append(f"{measure}\t{score:.2f}\t{describe_config(rep.config)}")
    return "\n".join(lines)
