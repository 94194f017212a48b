"""Post-hoc calibration maps: identity, temperature scaling, ensemble
temperature scaling, and one-vs-all isotonic regression.

All fitting minimizes mean negative log-likelihood on the calibration split
(recorded in every serialized map so results are auditable). Maps consume
the logits of whichever weight variant is being evaluated, so the sparse
and complete searches reuse this module unchanged.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .core import softmax
from .errors import DomainError, UnfittedMapError

T_BRACKET = (0.05, 10.0)
T_TOL = 1e-4
_GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0
IROVA_FLOOR = 1e-12

FIT_OBJECTIVE = "nll"  # shared by TS and ETS


def _check_fit_inputs(logit_rows, labels):
    s = np.asarray(logit_rows, dtype=float)
    y = np.asarray(labels, dtype=int)
    if s.ndim != 2 or s.shape[0] == 0:
        raise DomainError("need a nonempty 2-d array of logit rows")
    if y.shape != (s.shape[0],):
        raise DomainError(f"labels shape {y.shape} does not match {s.shape[0]} rows")
    return s, y


def mean_nll(prob_rows, labels) -> float:
    p = np.asarray(prob_rows, dtype=float)
    y = np.asarray(labels, dtype=int)
    picked = np.clip(p[np.arange(len(y)), y], 1e-300, None)
    return float(-np.mean(np.log(picked)))


def _nll_at_temperature(logit_rows, labels, t):
    return mean_nll(softmax(logit_rows / t), labels)


@dataclass
class IdentityMap:
    """Plain softmax; the uncalibrated baseline."""

    def apply(self, logit_row):
        return softmax(np.asarray(logit_row, dtype=float))

    def to_dict(self):
        return {"type": "identity"}


@dataclass
class TemperatureMap:
    T: float

    def __post_init__(self):
        if self.T <= 0:
            raise DomainError(f"temperature must be positive, got {self.T}")

    def apply(self, logit_row):
        return softmax(np.asarray(logit_row, dtype=float) / self.T)

    def to_dict(self):
        return {"type": "temperature", "T": self.T, "objective": FIT_OBJECTIVE}


@dataclass
class EnsembleTemperatureMap:
    """Convex mixture of tempered softmax, raw softmax, and uniform."""

    T: float
    w: tuple[float, float, float]

    def __post_init__(self):
        if self.T <= 0:
            raise DomainError(f"temperature must be positive, got {self.T}")
        w = np.asarray(self.w, dtype=float)
        if w.shape != (3,) or np.any(w < -1e-12) or abs(w.sum() - 1.0) > 1e-9:
            raise DomainError(f"mixture weights must be on the 3-simplex, got {self.w}")

    def apply(self, logit_row):
        s = np.asarray(logit_row, dtype=float)
        c = s.shape[-1]
        w1, w2, w3 = self.w
        return w1 * softmax(s / self.T) + w2 * softmax(s) + w3 / c

    def to_dict(self):
        return {"type": "ets", "T": self.T, "w": list(self.w), "objective": FIT_OBJECTIVE}


@dataclass
class IsotonicOvAMap:
    """Per-class monotone step functions fitted by pool-adjacent-violators.

    Out-of-range queries clamp to the nearest step value; calibrated
    per-class scores are renormalized to sum 1 with a floor of 1e-12.
    """

    thresholds: list[np.ndarray]  # strictly increasing per class
    values: list[np.ndarray]  # nondecreasing per class
    missing_classes: list[int] = field(default_factory=list)

    @property
    def num_classes(self):
        return len(self.thresholds)

    def _lookup(self, c, score):
        th, va = self.thresholds[c], self.values[c]
        if th.size == 0:
            return 0.0
        idx = np.searchsorted(th, score, side="right") - 1
        return float(va[np.clip(idx, 0, va.size - 1)])

    def apply(self, logit_row):
        s = np.asarray(logit_row, dtype=float)
        if s.shape != (self.num_classes,):
            raise DomainError(f"expected {self.num_classes} logits, got shape {s.shape}")
        scores = softmax(s)
        cal = np.array([self._lookup(c, scores[c]) for c in range(self.num_classes)])
        cal = np.maximum(cal, IROVA_FLOOR)
        return cal / cal.sum()

    def apply_scores(self, score_rows):
        """Vectorized application to an m x C matrix of per-class scores."""
        scores = np.asarray(score_rows, dtype=float)
        cal = np.empty_like(scores)
        for c in range(self.num_classes):
            th, va = self.thresholds[c], self.values[c]
            if th.size == 0:
                cal[:, c] = 0.0
                continue
            idx = np.searchsorted(th, scores[:, c], side="right") - 1
            cal[:, c] = va[np.clip(idx, 0, va.size - 1)]
        cal = np.maximum(cal, IROVA_FLOOR)
        return cal / cal.sum(axis=1, keepdims=True)

    def to_dict(self):
        return {
            "type": "irova",
            "thresholds": [t.tolist() for t in self.thresholds],
            "values": [v.tolist() for v in self.values],
            "missing_classes": self.missing_classes,
        }


CalibrationMap = IdentityMap | TemperatureMap | EnsembleTemperatureMap | IsotonicOvAMap

# deterministic tie-break order used by the searches
MAP_ORDER = ("identity", "temperature", "ets", "irova")


def fit_temperature(logit_rows, labels) -> TemperatureMap:
    """Golden-section search on log T over [0.05, 10], tolerance 1e-4 in T."""
    s, y = _check_fit_inputs(logit_rows, labels)
    if len(np.unique(y)) < 2:
        warnings.warn("fitting a temperature on fewer than 2 distinct labels", stacklevel=2)
    lo, hi = np.log(T_BRACKET[0]), np.log(T_BRACKET[1])
    x1 = hi - _GOLDEN * (hi - lo)
    x2 = lo + _GOLDEN * (hi - lo)
    f1 = _nll_at_temperature(s, y, np.exp(x1))
    f2 = _nll_at_temperature(s, y, np.exp(x2))
    while np.exp(hi) - np.exp(lo) > T_TOL:
        if f1 <= f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - _GOLDEN * (hi - lo)
            f1 = _nll_at_temperature(s, y, np.exp(x1))
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + _GOLDEN * (hi - lo)
            f2 = _nll_at_temperature(s, y, np.exp(x2))
    t = float(np.exp((lo + hi) / 2.0))
    return TemperatureMap(T=min(max(t, T_BRACKET[0]), T_BRACKET[1]))


def apply_temperature(tmap: TemperatureMap, logit_row):
    return tmap.apply(logit_row)


def _simplex_grid(step):
    w1 = np.arange(0.0, 1.0 + step / 2, step)
    pts = []
    for a in w1:
        b = np.arange(0.0, 1.0 - a + step / 2, step)
        for bb in b:
            pts.append((a, bb, max(1.0 - a - bb, 0.0)))
    return pts


def fit_ets(logit_rows, labels, base_T: float) -> EnsembleTemperatureMap:
    """Exhaustive simplex grid (step 0.02) plus one local refinement (0.002)."""
    s, y = _check_fit_inputs(logit_rows, labels)
    idx = np.arange(len(y))
    c = s.shape[1]
    p_t = softmax(s / base_T)[idx, y]
    p_1 = softmax(s)[idx, y]
    p_u = np.full(len(y), 1.0 / c)

    def nll(w):
        mix = w[0] * p_t + w[1] * p_1 + w[2] * p_u
        return float(-np.mean(np.log(np.clip(mix, 1e-300, None))))

    best = min(_simplex_grid(0.02), key=nll)
    # local refinement around the coarse optimum
    fine = []
    for da in np.arange(-0.02, 0.0201, 0.002):
        for db in np.arange(-0.02, 0.0201, 0.002):
            a, b = best[0] + da, best[1] + db
            if a >= -1e-12 and b >= -1e-12 and a + b <= 1.0 + 1e-12:
                a, b = max(a, 0.0), max(b, 0.0)
                fine.append((a, b, max(1.0 - a - b, 0.0)))
    best = min(fine, key=nll)
    total = sum(best)
    best = tuple(x / total for x in best)
    return EnsembleTemperatureMap(T=base_T, w=best)


def pava(values, weights=None):
    """Isotonic (nondecreasing) least-squares fit by pool-adjacent-violators."""
    v = np.asarray(values, dtype=float)
    w = np.ones_like(v) if weights is None else np.asarray(weights, dtype=float)
    means, wts, sizes = [], [], []
    for val, wt in zip(v, w):
        means.append(val)
        wts.append(wt)
        sizes.append(1)
        while len(means) > 1 and means[-2] > means[-1]:
            m2, w2, s2 = means.pop(), wts.pop(), sizes.pop()
            m1, w1, s1 = means.pop(), wts.pop(), sizes.pop()
            wt_sum = w1 + w2
            means.append((m1 * w1 + m2 * w2) / wt_sum)
            wts.append(wt_sum)
            sizes.append(s1 + s2)
    out = np.empty_like(v)
    pos = 0
    for m, s in zip(means, sizes):
        out[pos : pos + s] = m
        pos += s
    return out


def fit_irova(score_rows, labels) -> IsotonicOvAMap:
    """One-vs-all isotonic regression on per-class softmax scores.

    Tied calibration scores are merged (mean indicator) before PAVA so the
    fit is deterministic. A class absent from the labels gets the constant
    0 step function and is flagged in ``missing_classes``.
    """
    scores = np.asarray(score_rows, dtype=float)
    y = np.asarray(labels, dtype=int)
    if scores.ndim != 2 or scores.shape[0] == 0:
        raise DomainError("need a nonempty 2-d score matrix")
    if y.shape != (scores.shape[0],):
        raise DomainError("labels do not match score rows")
    if np.any(scores < 0) or np.any(scores > 1):
        raise DomainError("per-class scores must lie in [0, 1]")
    num_classes = scores.shape[1]
    thresholds, vals, missing = [], [], []
    for c in range(num_classes):
        target = (y == c).astype(float)
        if target.sum() == 0:
            missing.append(c)
            thresholds.append(np.array([0.0]))
            vals.append(np.array([0.0]))
            continue
        sc = scores[:, c]
        uniq, inverse = np.unique(sc, return_inverse=True)
        counts = np.bincount(inverse, minlength=uniq.size).astype(float)
        sums = np.bincount(inverse, weights=target, minlength=uniq.size)
        fitted = pava(sums / counts, counts)
        thresholds.append(uniq)
        vals.append(fitted)
    return IsotonicOvAMap(thresholds=thresholds, values=vals, missing_classes=missing)


def apply_map(cal_map, logit_row):
    """Dispatch to the fitted map; probabilities are nonnegative and sum to 1."""
    if cal_map is None:
        raise UnfittedMapError("calibration map has not been fitted")
    return cal_map.apply(logit_row)


def apply_map_rows(cal_map, logit_rows):
    """Map an m x C logit matrix to calibrated probability rows."""
    s = np.asarray(logit_rows, dtype=float)
    if isinstance(cal_map, IdentityMap):
        return softmax(s)
    if isinstance(cal_map, TemperatureMap):
        return softmax(s / cal_map.T)
    if isinstance(cal_map, EnsembleTemperatureMap):
        w1, w2, w3 = cal_map.w
        return w1 * softmax(s / cal_map.T) + w2 * softmax(s) + w3 / s.shape[1]
    if isinstance(cal_map, IsotonicOvAMap):
        return cal_map.apply_scores(softmax(s))
    raise UnfittedMapError(f"not a fitted calibration map: {cal_map!r}")


def map_kind(cal_map) -> str:
    return cal_map.to_dict()["type"]


def save_map(cal_map, path):
    with open(path, "w") as fh:
        json.dump(cal_map.to_dict(), fh, sort_keys=True, indent=2)
        fh.write("\n")


def map_from_dict(doc) -> CalibrationMap:
    kind = doc["type"]
    if kind == "identity":
        return IdentityMap()
    if kind == "temperature":
        return TemperatureMap(T=doc["T"])
    if kind == "ets":
        return EnsembleTemperatureMap(T=doc["T"], w=tuple(doc["w"]))
    if kind == "irova":
        return IsotonicOvAMap(
            thresholds=[np.asarray(t, dtype=float) for t in doc["thresholds"]],
            values=[np.asarray(v, dtype=float) for v in doc["values"]],
            missing_classes=list(doc.get("missing_classes", [])),
        )
    raise DomainError(f"unknown calibration map type: {kind}")


def load_map(path) -> CalibrationMap:
    with open(path) as fh:
        return map_from_dict(json.load(fh))
