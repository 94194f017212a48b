"""Grid search over rotation intensity and calibration maps.

Two modes mirror the sparse/complete protocols: sparse optimizes the angle
first (raw identity-map confidences) and the map second; complete scans
every (angle, map) pair. Both consume only the calibration split; the test
split is never read during a search (the bundle's access counters prove
it). The sparse stage-1 objective uses the identity map, a choice recorded
in every result.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace

import numpy as np

from . import calibration as cal
from .bundle import FeatureBundle
from .core import AveragedWeight, TiltPlan, logit_matrix, tna
from .errors import DomainError, SaturationError
from .metrics import adaece, ece, records_from_probs

DEFAULT_GRID = tuple(float(t) for t in range(0, 91, 5))
OBJECTIVES = ("ece", "adaece", "nll")


@dataclass(frozen=True)
class SearchSpec:
    angle_grid: tuple = DEFAULT_GRID
    maps: tuple = cal.MAP_ORDER  # ("identity", "temperature", "ets", "irova")
    mode: str = "sparse"
    plan: TiltPlan = field(default_factory=lambda: TiltPlan(target_mrc_deg=0.0))
    repeats: int = 5
    objective: str = "ece"
    bins: int = 15

    def __post_init__(self):
        grid = tuple(float(t) for t in self.angle_grid)
        if not grid or list(grid) != sorted(grid) or grid[0] != 0.0:
            raise DomainError("angle grid must be nonempty, ascending, and contain 0")
        if any(t < 0 or t > 90 for t in grid):
            raise DomainError("angles must lie in [0, 90] deg")
        object.__setattr__(self, "angle_grid", grid)
        unknown = [m for m in self.maps if m not in cal.MAP_ORDER]
        if unknown:
            raise DomainError(f"unknown calibration maps: {unknown}")
        if self.objective not in OBJECTIVES:
            raise DomainError(f"objective must be one of {OBJECTIVES}")
        if self.mode not in ("sparse", "complete"):
            raise DomainError("mode must be 'sparse' or 'complete'")


@dataclass
class SearchResult:
    mode: str
    objective: str
    stage1_objective: str  # sparse stage 1 always scores the identity map
    best_theta_deg: float
    best_map_kind: str
    best_map: object
    best_objective: float
    best_weights: AveragedWeight
    curve: list[dict] = field(default_factory=list)
    skipped_thetas: list[dict] = field(default_factory=list)

    def to_dict(self):
        return {
            "mode": self.mode,
            "objective": self.objective,
            "stage1_objective": self.stage1_objective,
            "best_theta_deg": self.best_theta_deg,
            "best_map_kind": self.best_map_kind,
            "best_map": self.best_map.to_dict(),
            "best_objective": self.best_objective,
            "provenance": self.best_weights.provenance,
            "curve": self.curve,
            "skipped_thetas": self.skipped_thetas,
        }

    def save_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True, indent=2)
            fh.write("\n")

    def save_curve_csv(self, path):
        cols = ["theta_deg", "map", "objective", "accuracy", "ece", "adaece"]
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=cols)
            writer.writeheader()
            for row in self.curve:
                writer.writerow({k: row[k] for k in cols})


def fit_map(kind: str, logit_rows, labels):
    """Fit one calibration map family on the given logits."""
    if kind == "identity":
        return cal.IdentityMap()
    if kind == "temperature":
        return cal.fit_temperature(logit_rows, labels)
    if kind == "ets":
        base = cal.fit_temperature(logit_rows, labels)
        return cal.fit_ets(logit_rows, labels, base.T)
    if kind == "irova":
        return cal.fit_irova(cal.softmax(np.asarray(logit_rows, dtype=float)), labels)
    raise DomainError(f"unknown calibration map kind: {kind}")


def _objective_value(name, probs, labels, bins):
    if name == "nll":
        return cal.mean_nll(probs, labels)
    records = records_from_probs(probs, labels)
    return ece(records, bins) if name == "ece" else adaece(records, bins)


def _curve_row(theta, kind, objective_name, probs, labels, bins):
    records = records_from_probs(probs, labels)
    correct = np.array([r.correct for r in records])
    return {
        "theta_deg": theta,
        "map": kind,
        "objective": _objective_value(objective_name, probs, labels, bins),
        "accuracy": float(correct.mean()),
        "ece": ece(records, bins),
        "adaece": adaece(records, bins),
    }


def _check_splits(bundle: FeatureBundle):
    calset = set(bundle.splits.get("calibration", np.array([], dtype=int)).tolist())
    testset = set(bundle.splits.get("test", np.array([], dtype=int)).tolist())
    if not calset or not testset:
        raise DomainError("bundle needs nonempty calibration and test splits")
    if calset & testset:
        raise DomainError("calibration and test splits overlap")


class _ThetaWeights:
    """Lazy per-angle weight generation, shared between both search modes."""

    def __init__(self, bundle, plan, cal_features):
        self.bundle = bundle
        self.plan = plan
        self.cal_features = cal_features
        self._cache = {}

    def get(self, theta):
        if theta not in self._cache:
            aw = tna(self.bundle.layer, replace(self.plan, target_mrc_deg=theta))
            logits = logit_matrix(aw.weights, aw.bias, self.cal_features)
            self._cache[theta] = (aw, logits)
        return self._cache[theta]


def search_sparse(bundle: FeatureBundle, spec: SearchSpec) -> SearchResult:
    """Two-stage search: best angle under the identity map, then best map."""
    _check_splits(bundle)
    cal_features, cal_labels = bundle.split_view("calibration")
    weights = _ThetaWeights(bundle, spec.plan, cal_features)
    curve, skipped = [], []

    best_theta, best_val = None, np.inf
    for theta in spec.angle_grid:
        try:
            _, logits = weights.get(theta)
        except SaturationError as err:
            skipped.append({"theta_deg": theta, "reason": str(err)})
            continue
        probs = cal.apply_map_rows(cal.IdentityMap(), logits)
        row = _curve_row(theta, "identity", spec.objective, probs, cal_labels, spec.bins)
        curve.append(row)
        if row["objective"] < best_val:
            best_theta, best_val = theta, row["objective"]
    if best_theta is None:
        raise DomainError("every grid angle saturated; nothing to search")

    aw, logits = weights.get(best_theta)
    best_map, best_kind, best_obj = None, None, np.inf
    for kind in cal.MAP_ORDER:
        if kind not in spec.maps:
            continue
        fitted = fit_map(kind, logits, cal_labels)
        probs = cal.apply_map_rows(fitted, logits)
        row = _curve_row(best_theta, kind, spec.objective, probs, cal_labels, spec.bins)
        if kind != "identity":  # identity row already recorded in stage 1
            curve.append(row)
        if row["objective"] < best_obj:
            best_map, best_kind, best_obj = fitted, kind, row["objective"]

    return SearchResult(
        mode="sparse",
        objective=spec.objective,
        stage1_objective=f"{spec.objective} (identity map)",
        best_theta_deg=best_theta,
        best_map_kind=best_kind,
        best_map=best_map,
        best_objective=best_obj,
        best_weights=aw,
        curve=curve,
        skipped_thetas=skipped,
    )


def search_complete(bundle: FeatureBundle, spec: SearchSpec) -> SearchResult:
    """Exhaustive scan of every (angle, map) pair on the calibration split."""
    _check_splits(bundle)
    cal_features, cal_labels = bundle.split_view("calibration")
    weights = _ThetaWeights(bundle, spec.plan, cal_features)
    curve, skipped = [], []
    best = None  # (objective, theta, kind, map, aw)
    for theta in spec.angle_grid:
        try:
            aw, logits = weights.get(theta)
        except SaturationError as err:
            skipped.append({"theta_deg": theta, "reason": str(err)})
            continue
        for kind in cal.MAP_ORDER:
            if kind not in spec.maps:
                continue
            fitted = fit_map(kind, logits, cal_labels)
            probs = cal.apply_map_rows(fitted, logits)
            row = _curve_row(theta, kind, spec.objective, probs, cal_labels, spec.bins)
            curve.append(row)
            if best is None or row["objective"] < best[0]:
                best = (row["objective"], theta, kind, fitted, aw)
    if best is None:
        raise DomainError("every grid angle saturated; nothing to search")
    best_obj, best_theta, best_kind, best_map, aw = best
    return SearchResult(
        mode="complete",
        objective=spec.objective,
        stage1_objective=f"{spec.objective} (identity map)",
        best_theta_deg=best_theta,
        best_map_kind=best_kind,
        best_map=best_map,
        best_objective=best_obj,
        best_weights=aw,
        curve=curve,
        skipped_thetas=skipped,
    )


def run_search(bundle: FeatureBundle, spec: SearchSpec) -> SearchResult:
    fn = search_sparse if spec.mode == "sparse" else search_complete
    return fn(bundle, spec)


def repeat_search(bundle: FeatureBundle, spec: SearchSpec):
    """spec.repeats independent searches, seeds offset by the repeat index."""
    results = []
    for r in range(spec.repeats):
        plan = replace(spec.plan, seed=spec.plan.seed + r)
        results.append(run_search(bundle, replace(spec, plan=plan)))
    return results


def data_efficiency_sweep(bundle: FeatureBundle, spec: SearchSpec, sizes, subsample_seed=0):
    """search_sparse on seeded calibration subsamples of the given sizes.

    Returns a list of (size, SearchResult) pairs; evaluation on the
    untouched test split is left to the caller.
    """
    _check_splits(bundle)
    full = bundle.splits["calibration"]
    out = []
    for i, size in enumerate(sizes):
        size = int(size)
        if size > full.size or size < 1:
            raise DomainError(f"subsample size {size} exceeds calibration split ({full.size})")
        if size == full.size:
            idx = full
        else:
            gen = np.random.Generator(
                np.random.PCG64(np.random.SeedSequence(entropy=subsample_seed, spawn_key=(i,)))
            )
            idx = np.sort(gen.choice(full, size=size, replace=False))
        sub = FeatureBundle(
            features=bundle.features,
            labels=bundle.labels,
            layer=bundle.layer,
            splits={"calibration": idx, "test": bundle.splits["test"]},
            metadata=dict(bundle.metadata),
        )
        out.append((size, search_sparse(sub, spec)))
    return out
