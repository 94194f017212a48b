"""Tilt-and-average: compound random rotations driven to a target mRC.

The generator composes elementary Givens rotations with Beta-distributed
angles until the mean rotation over classes exceeds the requested target,
repeats that n_e times on independent streams, and averages the resulting
transforms entrywise. The bias vector is never transformed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, SaturationError
from .geometry import GivensFactor, TiltedTransform, mrc_from_rotated
from .rng import SeededRng


@dataclass(frozen=True)
class LastLayer:
    """Final linear layer: class vectors as columns of ``weights`` plus bias."""

    weights: np.ndarray  # n x C
    bias: np.ndarray  # C

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        b = np.asarray(self.bias, dtype=float)
        if w.ndim != 2 or w.shape[1] < 2:
            raise DomainError(f"weights must be n x C with C >= 2, got shape {w.shape}")
        if b.shape != (w.shape[1],):
            raise DomainError(f"bias shape {b.shape} does not match C={w.shape[1]}")
        norms = np.linalg.norm(w, axis=0)
        zero = np.nonzero(norms == 0.0)[0]
        if zero.size:
            raise DomainError(f"class vector {zero[0]} is the zero vector")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)

    @property
    def n(self) -> int:
        return self.weights.shape[0]

    @property
    def num_classes(self) -> int:
        return self.weights.shape[1]


@dataclass(frozen=True)
class TiltPlan:
    """Hyperparameters for one tilt-and-average run."""

    target_mrc_deg: float
    theta_s: float = 0.9  # radians, max elementary angle
    alpha: float = 5.0
    beta: float = 1.0
    n_t: int = 50  # factors composed between mRC checks
    n_e: int = 10  # ensemble size
    seed: int = 0
    max_factors: int | None = None  # defaults to 200 * n_t

    def __post_init__(self):
        if not (0.0 <= self.target_mrc_deg <= 90.0):
            raise DomainError(f"target mRC must lie in [0, 90] deg, got {self.target_mrc_deg}")
        if self.theta_s <= 0:
            raise DomainError("theta_s must be positive")
        if self.alpha <= 0 or self.beta <= 0:
            raise DomainError("Beta shapes must be positive")
        if self.n_t < 1 or self.n_e < 1:
            raise DomainError("n_t and n_e must be positive integers")
        if self.max_factors is not None and self.max_factors < 1:
            raise DomainError("max_factors must be positive")

    @property
    def factor_cap(self) -> int:
        return self.max_factors if self.max_factors is not None else 200 * self.n_t


@dataclass
class AveragedWeight:
    """Entrywise mean of n_e tilted weights, with the original bias."""

    weights: np.ndarray  # n x C
    bias: np.ndarray  # C
    transform: np.ndarray  # the averaged n x n transform
    provenance: list[dict] = field(default_factory=list)


def sample_beta(alpha: float, beta: float, rng: SeededRng, size=None):
    """Beta(alpha, beta) draw(s) via the gamma-ratio construction."""
    if alpha <= 0 or beta <= 0:
        raise DomainError(f"Beta shapes must be positive, got alpha={alpha}, beta={beta}")
    gen = rng.generator
    g1 = gen.standard_gamma(alpha, size=size)
    g2 = gen.standard_gamma(beta, size=size)
    return g1 / (g1 + g2)


def _draw_factor_batch(gen, n, n_t, alpha, beta, theta_s):
    """One batch of random Givens factors: angles first, then index pairs."""
    g1 = gen.standard_gamma(alpha, size=n_t)
    g2 = gen.standard_gamma(beta, size=n_t)
    thetas = theta_s * g1 / (g1 + g2)
    k1 = gen.integers(0, n, size=n_t)
    kr = gen.integers(0, n - 1, size=n_t)
    k2 = kr + (kr >= k1)
    return k1, k2, thetas


def _apply_batch(rot, rw, k1, k2, thetas):
    """Left-compose a factor batch onto ``rot`` and ``rw`` (row updates)."""
    cos = np.cos(thetas)
    sin = np.sin(thetas)
    for i in range(len(thetas)):
        a, b, c, s = k1[i], k2[i], cos[i], sin[i]
        r1 = rot[a].copy()
        r2 = rot[b]
        rot[a] = c * r1 - s * r2
        rot[b] = s * r1 + c * r2
        if rw is not None:
            w1 = rw[a].copy()
            w2 = rw[b]
            rw[a] = c * w1 - s * w2
            rw[b] = s * w1 + c * w2


def tilt_to_target(layer: LastLayer, plan: TiltPlan, rng: SeededRng) -> TiltedTransform:
    """Compose factors in batches of n_t until mRC(W, R) exceeds the target.

    A target of 0 deg short-circuits to the identity so that a 0-degree
    grid point means "no change". The loop condition is re-evaluated after
    every batch, never mid-batch, and the final (overshot) mRC is recorded
    rather than corrected.
    """
    w = layer.weights
    n = layer.n
    target = float(plan.target_mrc_deg)
    if target == 0.0:
        return TiltedTransform(
            matrix=np.eye(n), achieved_mrc_deg=0.0, n_r=0, seed=rng.seed, trace=[(0, 0.0)]
        )

    gen = rng.generator
    rot = np.eye(n)
    rw = w.copy()
    factors: list[GivensFactor] = []
    trace: list[tuple[int, float]] = []
    n_r = 0
    current = 0.0
    while current <= target:
        if n_r >= plan.factor_cap:
            raise SaturationError(target, current, n_r)
        k1, k2, thetas = _draw_factor_batch(gen, n, plan.n_t, plan.alpha, plan.beta, plan.theta_s)
        _apply_batch(rot, rw, k1, k2, thetas)
        factors.extend(GivensFactor(int(a), int(b), float(t)) for a, b, t in zip(k1, k2, thetas))
        n_r += plan.n_t
        current = mrc_from_rotated(w, rw)
        trace.append((n_r, current))
    # factors were left-composed; reverse so the stored list reproduces the
    # matrix under left-to-right composition
    factors.reverse()
    return TiltedTransform(
        matrix=rot, achieved_mrc_deg=current, n_r=n_r, seed=rng.seed, factors=factors, trace=trace
    )


def mrc_trace(weights, theta_s, rng, checkpoints, alpha=5.0, beta=1.0):
    """mRC of a growing compound rotation, sampled at the given n_r checkpoints.

    Returns a list of (n_r, mRC deg) pairs; checkpoints must be increasing.
    Used for convergence plots and plateau measurements, with no target.
    """
    w = np.asarray(weights, dtype=float)
    n = w.shape[0]
    checkpoints = [int(c) for c in checkpoints]
    if any(b <= a for a, b in zip(checkpoints, checkpoints[1:])) or checkpoints[0] < 1:
        raise DomainError("checkpoints must be strictly increasing positive integers")
    gen = rng.generator
    rot = np.eye(n)
    rw = w.copy()
    out = []
    done = 0
    for cp in checkpoints:
        k1, k2, thetas = _draw_factor_batch(gen, n, cp - done, alpha, beta, theta_s)
        _apply_batch(rot, rw, k1, k2, thetas)
        done = cp
        out.append((cp, mrc_from_rotated(w, rw)))
    return out


def tna(layer: LastLayer, plan: TiltPlan, workers: int = 1) -> AveragedWeight:
    """Full tilt-and-average: n_e independent tilts, averaged entrywise.

    Child streams use stream ids 1..n_e so members are independent and
    individually reproducible; the averaging sum always runs in
    member-index order to keep bit-reproducibility, even when the tilts
    themselves run on a worker pool.
    """
    n = layer.n

    def member_tilt(member):
        try:
            return tilt_to_target(layer, plan, SeededRng(plan.seed, member))
        except SaturationError as err:
            raise SaturationError(
                err.target_mrc_deg, err.plateau_mrc_deg, err.n_r, member=member
            ) from err

    members = range(1, plan.n_e + 1)
    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=workers) as pool:
            tilts = list(pool.map(member_tilt, members))
    else:
        tilts = [member_tilt(m) for m in members]

    acc = np.zeros((n, n))
    provenance = []
    for member, t in zip(members, tilts):
        acc += t.matrix
        provenance.append(
            {
                "seed": plan.seed,
                "stream_id": member,
                "achieved_mrc_deg": t.achieved_mrc_deg,
                "n_r": t.n_r,
            }
        )
    mean_rot = acc / plan.n_e
    return AveragedWeight(
        weights=mean_rot @ layer.weights,
        bias=layer.bias.copy(),
        transform=mean_rot,
        provenance=provenance,
    )


def logits(weights, bias, z) -> np.ndarray:
    """Per-class scores s_i = <w_i, z> + b_i."""
    w = np.asarray(weights, dtype=float)
    b = np.asarray(bias, dtype=float)
    z = np.asarray(z, dtype=float)
    if z.shape != (w.shape[0],) or b.shape != (w.shape[1],):
        raise DomainError(
            f"dimension mismatch: weights {w.shape}, bias {b.shape}, feature {z.shape}"
        )
    return w.T @ z + b


def logit_matrix(weights, bias, features) -> np.ndarray:
    """Row-per-sample logits for an m x n feature matrix."""
    w = np.asarray(weights, dtype=float)
    b = np.asarray(bias, dtype=float)
    f = np.asarray(features, dtype=float)
    if f.ndim != 2 or f.shape[1] != w.shape[0]:
        raise DomainError(f"feature matrix {f.shape} does not match weights {w.shape}")
    return f @ w + b


def softmax(rows) -> np.ndarray:
    """Numerically stable softmax along the last axis."""
    s = np.asarray(rows, dtype=float)
    shifted = s - s.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def confidence(logit_row):
    """(predicted class, max softmax probability) with lowest-index tie-break."""
    s = np.asarray(logit_row, dtype=float)
    if not np.all(np.isfinite(s)):
        raise DomainError("logits must be finite")
    p = softmax(s)
    pred = int(np.argmax(p))
    return pred, float(p[pred])
