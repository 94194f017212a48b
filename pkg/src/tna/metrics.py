"""Accuracy, calibration-error estimators, and reliability tables.

ECE bins confidences into equal-width intervals (j/B, (j+1)/B]; AdaECE uses
equal-mass bins over the confidence-sorted records. Both metrics live in
[0, 1]; percentages are a presentation-layer concern.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .calibration import apply_map_rows, mean_nll
from .core import logit_matrix
from .errors import DomainError

DEFAULT_BINS = 15


@dataclass(frozen=True)
class PredictionRecord:
    confidence: float
    correct: bool
    predicted_class: int


@dataclass
class ReliabilityTable:
    scheme: str  # "equal-interval" | "equal-mass"
    bins: int
    rows: list[tuple[float, float, int, float, float]]  # (lower, upper, count, acc, conf)

    def to_rows(self):
        return [
            {"lower": lo, "upper": hi, "count": n, "acc": a, "conf": c}
            for lo, hi, n, a, c in self.rows
        ]


def _extract(records):
    conf = np.array([r.confidence for r in records], dtype=float)
    correct = np.array([r.correct for r in records], dtype=bool)
    if conf.size == 0:
        raise DomainError("no prediction records")
    if not np.all(np.isfinite(conf)):
        raise DomainError("confidences must be finite")
    return conf, correct


def _interval_bin_index(conf, b):
    # bins are (j/B, (j+1)/B]; an exact 0 goes to bin 0. Edges are compared
    # directly so a confidence equal to j/B lands in the lower bin even when
    # conf * b is not exactly representable.
    edges = np.arange(b + 1) / b
    idx = np.searchsorted(edges, conf, side="left") - 1
    return np.clip(idx, 0, b - 1)


def _gap_sum(bin_idx, conf, correct, b):
    total = conf.size
    gap = 0.0
    rows = []
    for j in range(b):
        mask = bin_idx == j
        count = int(mask.sum())
        if count == 0:
            rows.append((j, count, np.nan, np.nan))
            continue
        acc = float(correct[mask].mean())
        avg_conf = float(conf[mask].mean())
        gap += (count / total) * abs(acc - avg_conf)
        rows.append((j, count, acc, avg_conf))
    return gap, rows


def ece(records, b: int = DEFAULT_BINS) -> float:
    """Equal-interval-binned calibration error."""
    if b < 1:
        raise DomainError("bin count must be >= 1")
    conf, correct = _extract(records)
    gap, _ = _gap_sum(_interval_bin_index(conf, b), conf, correct, b)
    return gap


def adaece(records, b: int = DEFAULT_BINS) -> float:
    """Equal-mass-binned calibration error.

    Records are stably sorted by confidence (ties keep input order); bin
    sizes are floor(m/B) with the remainder spread one extra over the
    first (m mod B) bins.
    """
    if b < 1:
        raise DomainError("bin count must be >= 1")
    conf, correct = _extract(records)
    order = np.argsort(conf, kind="stable")
    conf, correct = conf[order], correct[order]
    sizes = _equal_mass_sizes(conf.size, b)
    idx = np.repeat(np.arange(b), sizes)
    gap, _ = _gap_sum(idx, conf, correct, b)
    return gap


def _equal_mass_sizes(m, b):
    base = m // b
    extra = m % b
    return [base + 1 if j < extra else base for j in range(b)]


def reliability_table(records, b: int = DEFAULT_BINS, scheme: str = "equal-interval") -> ReliabilityTable:
    conf, correct = _extract(records)
    if scheme == "equal-interval":
        idx = _interval_bin_index(conf, b)
        edges = [(j / b, (j + 1) / b) for j in range(b)]
    elif scheme == "equal-mass":
        order = np.argsort(conf, kind="stable")
        conf, correct = conf[order], correct[order]
        sizes = _equal_mass_sizes(conf.size, b)
        idx = np.repeat(np.arange(b), sizes)
        edges = []
        pos = 0
        for s in sizes:
            lo = conf[pos] if s else np.nan
            hi = conf[pos + s - 1] if s else np.nan
            edges.append((float(lo), float(hi)))
            pos += s
    else:
        raise DomainError(f"unknown binning scheme: {scheme}")
    _, per_bin = _gap_sum(idx, conf, correct, b)
    rows = [(edges[j][0], edges[j][1], n, a, c) for (j, n, a, c) in per_bin]
    return ReliabilityTable(scheme=scheme, bins=b, rows=rows)


@dataclass
class EvalReport:
    """Evaluation of one (weights, map) pair on one split.

    Accuracy/ECE/AdaECE are stored as percentages; NLL in nats.
    """

    accuracy_pct: float
    ece_pct: float
    adaece_pct: float
    nll: float
    mean_confidence: float
    num_samples: int
    bins: int
    map_type: str
    reliability_interval: ReliabilityTable = field(repr=False, default=None)
    reliability_mass: ReliabilityTable = field(repr=False, default=None)

    def to_dict(self):
        return {
            "accuracy_pct": self.accuracy_pct,
            "ece_pct": self.ece_pct,
            "adaece_pct": self.adaece_pct,
            "nll": self.nll,
            "mean_confidence": self.mean_confidence,
            "num_samples": self.num_samples,
            "bins": self.bins,
            "map_type": self.map_type,
            "reliability_interval": self.reliability_interval.to_rows(),
            "reliability_mass": self.reliability_mass.to_rows(),
        }

    def save_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True, indent=2)
            fh.write("\n")

    def csv_row(self):
        return {
            "accuracy_pct": self.accuracy_pct,
            "ece_pct": self.ece_pct,
            "adaece_pct": self.adaece_pct,
            "nll": self.nll,
            "mean_confidence": self.mean_confidence,
            "num_samples": self.num_samples,
            "map_type": self.map_type,
        }

    def save_csv(self, path):
        row = self.csv_row()
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(row))
            writer.writeheader()
            writer.writerow(row)


def records_from_probs(prob_rows, labels):
    p = np.asarray(prob_rows, dtype=float)
    y = np.asarray(labels, dtype=int)
    preds = np.argmax(p, axis=1)
    confs = p[np.arange(len(y)), preds]
    return [
        PredictionRecord(confidence=float(c), correct=bool(pr == yy), predicted_class=int(pr))
        for c, pr, yy in zip(confs, preds, y)
    ]


def evaluate(weights, bias, cal_map, features, labels, b: int = DEFAULT_BINS) -> EvalReport:
    """Score a weight variant + calibration map on one split."""
    y = np.asarray(labels, dtype=int)
    if y.size == 0:
        raise DomainError("empty split")
    s = logit_matrix(weights, bias, features)
    probs = apply_map_rows(cal_map, s)
    records = records_from_probs(probs, y)
    correct = np.array([r.correct for r in records])
    conf = np.array([r.confidence for r in records])
    return EvalReport(
        accuracy_pct=float(correct.mean()) * 100.0,
        ece_pct=ece(records, b) * 100.0,
        adaece_pct=adaece(records, b) * 100.0,
        nll=mean_nll(probs, y),
        mean_confidence=float(conf.mean()),
        num_samples=int(y.size),
        bins=b,
        map_type=cal_map.to_dict()["type"],
        reliability_interval=reliability_table(records, b, "equal-interval"),
        reliability_mass=reliability_table(records, b, "equal-mass"),
    )
