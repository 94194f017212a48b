"""Monte-Carlo oracles for the geometric theory, plus figure-curve emitters.

The cone sampler implements the uniform-rotation assumption directly
(rather than through the compound-rotation generator, which does not
guarantee a uniform cone law); the relation between the two samplers is
measured, never assumed. Mode estimation uses fixed-width histograms for
determinism.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np

from .bundle import FeatureBundle
from .core import TiltPlan, logit_matrix, mrc_trace, softmax, tna
from .errors import DomainError
from .geometry import angle_between
from .rng import SeededRng

_RESAMPLE_LIMIT = 100


@dataclass
class ConeSample:
    base: np.ndarray
    angle_deg: float
    vector: np.ndarray


@dataclass
class MonteCarloModeReport:
    n: int
    psi_deg: float
    theta_deg: float
    samples: int
    bin_width_deg: float
    histogram: np.ndarray = field(repr=False)
    bin_edges: np.ndarray = field(repr=False)
    empirical_mode_deg: float = 0.0
    closed_form_mode_deg: float = 0.0
    gap_deg: float = 0.0
    empirical_mean_deg: float = 0.0  # reported, never asserted


def closed_form_mode_deg(psi_deg: float, theta_deg: float) -> float:
    """Most likely angle shift for a uniformly rotated class vector."""
    psi, theta = np.radians(psi_deg), np.radians(theta_deg)
    return float(np.degrees(np.arccos(np.cos(psi) * np.cos(theta)))) - psi_deg


def _unit(v):
    return v / np.linalg.norm(v)


def cone_directions(u, count, gen):
    """``count`` unit directions uniform on the sphere of u's orthogonal complement."""
    n = u.size
    out = np.empty((count, n))
    filled = 0
    attempts = 0
    while filled < count:
        need = count - filled
        g = gen.standard_normal((need, n))
        g -= np.outer(g @ u, u)
        norms = np.linalg.norm(g, axis=1)
        ok = norms > 1e-12
        out[filled : filled + int(ok.sum())] = g[ok] / norms[ok, None]
        filled += int(ok.sum())
        attempts += 1
        if attempts > _RESAMPLE_LIMIT:
            raise DomainError("degenerate projection: could not sample the cone direction")
    return out


def sample_on_cone(u, angle_deg: float, rng: SeededRng) -> ConeSample:
    """A vector at exactly ``angle_deg`` from the unit vector ``u``."""
    u = np.asarray(u, dtype=float)
    if abs(np.linalg.norm(u) - 1.0) > 1e-9:
        raise DomainError("cone base vector must be unit norm")
    if not (0.0 < angle_deg < 180.0):
        raise DomainError(f"cone angle must lie strictly in (0, 180) deg, got {angle_deg}")
    r = cone_directions(u, 1, rng.generator)[0]
    a = np.radians(angle_deg)
    return ConeSample(base=u, angle_deg=angle_deg, vector=np.cos(a) * u + np.sin(a) * r)


def thm1_mode_check(
    n: int,
    psi_deg: float,
    theta_deg: float,
    samples: int = 200_000,
    bin_width_deg: float = 0.25,
    seed: int = 0,
    chunk: int = 5_000,
) -> MonteCarloModeReport:
    """Empirical vs closed-form mode of the angle shift under uniform cone rotation.

    Fixes a unit class-vector direction u and a feature direction v at
    angle psi in a shared plane, draws rotated copies of u uniformly on
    the theta-cone, and histograms delta = angle(rotated, v) - psi.
    """
    if not (0.0 < theta_deg < psi_deg < 90.0):
        raise DomainError(
            "need 0 deg < theta < psi < 90 deg "
            f"(got theta={theta_deg}, psi={psi_deg})"
        )
    if n < 3:
        raise DomainError("need n >= 3 for a nondegenerate cone")
    psi, theta = np.radians(psi_deg), np.radians(theta_deg)
    u = np.zeros(n)
    u[0] = 1.0
    v = np.zeros(n)
    v[0], v[1] = np.cos(psi), np.sin(psi)

    gen = SeededRng(seed).generator
    lo, hi = -psi_deg, 180.0 - psi_deg
    nbins = int(np.ceil((hi - lo) / bin_width_deg))
    edges = lo + bin_width_deg * np.arange(nbins + 1)
    hist = np.zeros(nbins, dtype=np.int64)
    total = 0
    mean_acc = 0.0
    while total < samples:
        take = min(chunk, samples - total)
        dirs = cone_directions(u, take, gen)
        rotated = np.cos(theta) * u + np.sin(theta) * dirs
        cosang = np.clip(rotated @ v, -1.0, 1.0)
        delta = np.degrees(np.arccos(cosang)) - psi_deg
        hist += np.histogram(delta, bins=edges)[0]
        mean_acc += float(delta.sum())
        total += take
    mode_bin = int(np.argmax(hist))
    empirical_mode = float((edges[mode_bin] + edges[mode_bin + 1]) / 2.0)
    closed = closed_form_mode_deg(psi_deg, theta_deg)
    return MonteCarloModeReport(
        n=n,
        psi_deg=psi_deg,
        theta_deg=theta_deg,
        samples=samples,
        bin_width_deg=bin_width_deg,
        histogram=hist,
        bin_edges=edges,
        empirical_mode_deg=empirical_mode,
        closed_form_mode_deg=closed,
        gap_deg=abs(empirical_mode - closed),
        empirical_mean_deg=mean_acc / samples,
    )


def prop1_check(psis_deg, theta_deg: float, w_norms, z_norm: float = 1.0):
    """Confidence before vs after an equal-angle tilt, on the idealized construction.

    Evaluates max softmax of ||w_i|| ||z|| cos(psi_i) against the tilted
    version with cos(psi_i) cos(theta), equal biases assumed zero.
    Returns (holds, p_before, p_after) where ``holds`` is True when the
    tilted confidence is strictly smaller (equal allowed only at theta=0).
    """
    psis = np.asarray(psis_deg, dtype=float)
    norms = np.asarray(w_norms, dtype=float)
    if psis.shape != norms.shape or psis.ndim != 1 or psis.size < 2:
        raise DomainError("need matching 1-d psi and norm lists with at least two classes")
    if np.any(psis >= 90.0) or np.any(psis < 0.0):
        raise DomainError("all psi_i must lie in [0, 90) deg")
    if not (0.0 <= theta_deg < 90.0):
        raise DomainError("theta must lie in [0, 90) deg")
    base = norms * z_norm * np.cos(np.radians(psis))
    tilted = base * np.cos(np.radians(theta_deg))
    p_before = float(np.max(softmax(base)))
    p_after = float(np.max(softmax(tilted)))
    holds = (p_after < p_before) if theta_deg > 0 else (p_after == p_before)
    return holds, p_before, p_after


def orthogonality_concentration(n: int, samples: int = 10_000, seed: int = 0):
    """Mean/stddev of the angle between i.i.d. uniform sphere vectors."""
    if n < 2:
        raise DomainError("need n >= 2")
    gen = SeededRng(seed).generator
    a = gen.standard_normal((samples, n))
    b = gen.standard_normal((samples, n))
    cos = np.einsum("ij,ij->i", a, b) / (np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1))
    ang = np.degrees(np.arccos(np.clip(cos, -1.0, 1.0)))
    return float(ang.mean()), float(ang.std())


# ---------------------------------------------------------------------------
# figure-curve emitters (headered CSV; plotting is left to external tools)
# ---------------------------------------------------------------------------

FIG2_THETA_S = (0.5, 1.0, 1.5)


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def fig2_rows(layer_weights, seeds, checkpoints, theta_s_values=FIG2_THETA_S):
    rows = []
    for theta_s in theta_s_values:
        for seed in seeds:
            trace = mrc_trace(layer_weights, theta_s, SeededRng(seed), checkpoints)
            rows.extend((theta_s, seed, n_r, m) for n_r, m in trace)
    return rows


def fig3_rows(bundle: FeatureBundle, plan: TiltPlan, mrc_values, ne_values, seeds):
    test_f, test_y = bundle.split_view("test")
    base_logits = logit_matrix(bundle.layer.weights, bundle.layer.bias, test_f)
    base_acc = float((np.argmax(base_logits, axis=1) == test_y).mean())
    rows = [("original", "", "", base_acc)]
    for target in mrc_values:
        for ne in ne_values:
            accs = []
            for seed in seeds:
                aw = tna(bundle.layer, replace(plan, target_mrc_deg=target, n_e=ne, seed=seed))
                s = logit_matrix(aw.weights, aw.bias, test_f)
                accs.append(float((np.argmax(s, axis=1) == test_y).mean()))
            rows.append((target, ne, len(seeds), float(np.mean(accs))))
    return rows


def fig4_rows(bundle, spec, sizes):
    from .metrics import evaluate
    from .search import data_efficiency_sweep

    rows = []
    for size, result in data_efficiency_sweep(bundle, spec, sizes):
        test_f, test_y = bundle.split_view("test")
        report = evaluate(
            result.best_weights.weights, result.best_weights.bias, result.best_map,
            test_f, test_y, spec.bins,
        )
        rows.append((size, result.best_theta_deg, result.best_map_kind, report.ece_pct / 100.0))
    return rows


def angle_histogram_rows(bundle: FeatureBundle, plan: TiltPlan, tilt_degrees=(30.0, 45.0),
                         max_samples=4_000, seed=0):
    """Angles between the predicted/false class vector and the feature.

    Emits one row per sample per variant: original weights, each tilted
    variant, and a randomly chosen false class under the original weights.
    """
    test_f, test_y = bundle.split_view("test")
    if test_f.shape[0] > max_samples:
        gen = SeededRng(seed, 900).generator
        pick = np.sort(gen.choice(test_f.shape[0], size=max_samples, replace=False))
        test_f, test_y = test_f[pick], test_y[pick]
    variants = {"orig": bundle.layer.weights}
    for target in tilt_degrees:
        aw = tna(bundle.layer, replace(plan, target_mrc_deg=target))
        variants[f"tilt{target:g}"] = aw.weights
    rows = []
    for name, w in variants.items():
        s = logit_matrix(w, bundle.layer.bias, test_f)
        preds = np.argmax(s, axis=1)
        for i in range(test_f.shape[0]):
            rows.append((name, angle_between(w[:, preds[i]], test_f[i])))
    gen = SeededRng(seed, 901).generator
    c = bundle.num_classes
    false_cls = (test_y + 1 + gen.integers(0, c - 1, size=test_y.size)) % c
    w = bundle.layer.weights
    for i in range(test_f.shape[0]):
        rows.append(("false", angle_between(w[:, false_cls[i]], test_f[i])))
    return rows


def emit_figure_curves(bundle: FeatureBundle, plan: TiltPlan, which: str, out_path,
                       seeds=(0, 1, 2), sizes=(100, 500, 1000, 2000)):
    """Write one figure's curve data as headered CSV; returns the row count."""
    if which == "fig2":
        checkpoints = np.unique(np.geomspace(plan.n_t, 8000, 40).astype(int)).tolist()
        rows = fig2_rows(bundle.layer.weights, seeds, checkpoints)
        _write_csv(out_path, ["theta_s", "seed", "n_r", "mrc_deg"], rows)
    elif which == "fig3":
        rows = fig3_rows(bundle, plan, mrc_values=(30.0,), ne_values=(1, 5, 10, 20), seeds=list(seeds))
        _write_csv(out_path, ["mrc_deg", "n_e", "num_seeds", "accuracy"], rows)
    elif which == "fig4":
        from .search import SearchSpec

        spec = SearchSpec(plan=plan)
        rows = fig4_rows(bundle, spec, sizes)
        _write_csv(out_path, ["calibration_size", "best_theta_deg", "best_map", "test_ece"], rows)
    elif which == "angles":
        rows = angle_histogram_rows(bundle, plan)
        _write_csv(out_path, ["variant", "angle_deg"], rows)
    else:
        raise DomainError(f"unknown figure id: {which}")
    return len(rows)
