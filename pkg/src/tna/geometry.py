"""Dense vector/matrix primitives: angles, Givens factors, and the mRC metric.

Conventions used throughout the package:

* class vectors are the *columns* of the n x C weight matrix ``W`` and
  rotations act on the left, ``W' = R @ W``;
* angles are degrees at every public interface and radians internally;
* arccos inputs are clamped to [-1, 1] before evaluation, since floating
  point dot products can exceed 1 by ~1e-16.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError

ORTHOGONALITY_TOL = 1e-6


@dataclass(frozen=True)
class GivensFactor:
    """Elementary rotation by ``theta_t`` radians in the (k1, k2) plane."""

    k1: int
    k2: int
    theta_t: float

    def __post_init__(self):
        if self.k1 == self.k2:
            raise DomainError(f"Givens factor needs two distinct axes, got k1=k2={self.k1}")


@dataclass
class TiltedTransform:
    """An n x n transform with its generation trace.

    ``matrix`` is the source of truth: after ensemble averaging the
    transform is no longer a rotation and cannot be represented as a
    factor list. For composed (non-averaged) transforms ``factors`` holds
    the ordered Givens factors whose left-to-right product equals
    ``matrix``.
    """

    matrix: np.ndarray
    achieved_mrc_deg: float | None = None
    n_r: int = 0
    seed: int | None = None
    factors: list[GivensFactor] = field(default_factory=list)
    trace: list[tuple[int, float]] = field(default_factory=list)  # (n_r, mRC deg) per batch

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def is_orthogonal(self, tol: float = ORTHOGONALITY_TOL) -> bool:
        gram = self.matrix.T @ self.matrix
        return bool(np.max(np.abs(gram - np.eye(self.n))) <= tol)


def _check_vector(v, name):
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.size < 1:
        raise DomainError(f"{name} must be a 1-d vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise DomainError(f"{name} contains non-finite values")
    return v


def angle_between(u, v) -> float:
    """Angle between two vectors, in degrees within [0, 180]."""
    u = _check_vector(u, "u")
    v = _check_vector(v, "v")
    if u.shape != v.shape:
        raise DomainError(f"dimension mismatch: {u.shape} vs {v.shape}")
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0:
        raise DomainError("angle_between: first vector has zero norm")
    if nv == 0.0:
        raise DomainError("angle_between: second vector has zero norm")
    c = np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0)
    return float(np.degrees(np.arccos(c)))


def apply_givens(x, g: GivensFactor) -> np.ndarray:
    """Rotate coordinates (k1, k2) of ``x`` by ``g.theta_t``; others untouched."""
    x = _check_vector(x, "x")
    n = x.size
    if not (0 <= g.k1 < n and 0 <= g.k2 < n):
        raise DomainError(f"Givens indices ({g.k1}, {g.k2}) out of range for dim {n}")
    out = x.copy()
    c, s = np.cos(g.theta_t), np.sin(g.theta_t)
    out[g.k1] = c * x[g.k1] - s * x[g.k2]
    out[g.k2] = s * x[g.k1] + c * x[g.k2]
    return out


def apply_factor_rows(m: np.ndarray, g: GivensFactor) -> None:
    """In-place left-multiplication ``m <- G @ m`` (touches rows k1, k2)."""
    c, s = np.cos(g.theta_t), np.sin(g.theta_t)
    r1 = m[g.k1].copy()
    r2 = m[g.k2]
    m[g.k1] = c * r1 - s * r2
    m[g.k2] = s * r1 + c * r2


def compose_transform(factors, n: int) -> TiltedTransform:
    """Ordered product of Givens factors applied left-to-right.

    An empty list yields the identity. The product is built as
    F_1 @ (F_2 @ ( ... @ (F_m @ I))), i.e. O(n) row updates per factor.
    """
    factors = list(factors)
    for g in factors:
        if not (0 <= g.k1 < n and 0 <= g.k2 < n):
            raise DomainError(f"Givens indices ({g.k1}, {g.k2}) out of range for dim {n}")
    m = np.eye(n)
    for g in reversed(factors):
        apply_factor_rows(m, g)
    return TiltedTransform(matrix=m, achieved_mrc_deg=None, n_r=len(factors), factors=factors)


def mrc(weights: np.ndarray, transform) -> float:
    """Mean rotation over classes, in degrees.

    ``weights`` is n x C with class vectors as columns; ``transform`` is a
    TiltedTransform or a plain n x n matrix. Returns the average angle by
    which each class vector is rotated.
    """
    w = np.asarray(weights, dtype=float)
    r = transform.matrix if isinstance(transform, TiltedTransform) else np.asarray(transform, dtype=float)
    if w.ndim != 2 or w.shape[1] < 1:
        raise DomainError(f"weights must be n x C with C >= 1, got shape {w.shape}")
    if r.shape != (w.shape[0], w.shape[0]):
        raise DomainError(f"transform shape {r.shape} does not match feature dim {w.shape[0]}")
    norms = np.linalg.norm(w, axis=0)
    zero = np.nonzero(norms == 0.0)[0]
    if zero.size:
        raise DomainError(f"class vector {zero[0]} has zero norm")
    return mrc_from_rotated(w, r @ w)


def mrc_from_rotated(w: np.ndarray, rw: np.ndarray) -> float:
    """mRC given the original and already-rotated weight matrices."""
    dots = np.einsum("ij,ij->j", w, rw)
    cos = dots / (np.linalg.norm(w, axis=0) * np.linalg.norm(rw, axis=0))
    return float(np.degrees(np.arccos(np.clip(cos, -1.0, 1.0))).mean())
