"""Probability-simplex primitives.

Strategies are plain 1-D float64 arrays whose entries are nonnegative and
sum to one. Most functions also accept a 2-D array and then work row-wise,
which is how the learner stores one strategy per thread.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

SUM_TOL = 1e-12


def as_simplex_point(weights, *, tol: float = SUM_TOL) -> np.ndarray:
    """Validate ``weights`` as a probability vector and return it as float64."""
    p = np.asarray(weights, dtype=np.float64)
    if p.ndim != 1 or p.size == 0:
        raise ValueError("a simplex point must be a non-empty 1-D vector")
    if not np.all(np.isfinite(p)):
        raise ValueError("simplex point has non-finite entries")
    if p.min() < 0.0:
        raise ValueError(f"simplex point has a negative entry ({p.min()!r})")
    if abs(p.sum() - 1.0) > tol:
        raise ValueError(f"simplex point sums to {p.sum()!r}, not 1")
    return p


def is_simplex_point(weights, *, tol: float = SUM_TOL) -> bool:
    try:
        as_simplex_point(weights, tol=tol)
    except ValueError:
        return False
    return True


def project_to_simplex(v) -> np.ndarray:
    """Euclidean projection onto the probability simplex.

    Uses the sort-and-threshold method: with ``u`` the entries sorted in
    decreasing order, find the largest ``rho`` such that
    ``u[rho] - (sum(u[:rho+1]) - 1) / (rho+1) > 0`` and shift everything by
    that threshold, clipping at zero.

    A 2-D input is projected row by row. Inputs that already are simplex
    points (within ``SUM_TOL``) are returned unchanged, which makes the
    operation exactly idempotent.

    Raises:
        ValueError: on empty or non-finite input.
    """
    V = np.array(v, dtype=np.float64)
    if V.size == 0 or V.ndim not in (1, 2) or V.shape[-1] == 0:
        raise ValueError("cannot project an empty vector")
    if not np.all(np.isfinite(V)):
        raise ValueError("cannot project a vector with non-finite entries")
    squeeze = V.ndim == 1
    V = np.atleast_2d(V)

    inside = (V.min(axis=1) >= 0.0) & (np.abs(V.sum(axis=1) - 1.0) <= SUM_TOL)
    if not inside.all():
        rows = ~inside
        W = V[rows]
        m = W.shape[1]
        U = -np.sort(-W, axis=1)
        css = np.cumsum(U, axis=1) - 1.0
        ind = np.arange(1, m + 1)
        rho = np.count_nonzero(U - css / ind > 0, axis=1)
        theta = css[np.arange(W.shape[0]), rho - 1] / rho
        V[rows] = np.maximum(W - theta[:, None], 0.0)
    return V[0] if squeeze else V


def perturb(x, lam: float) -> np.ndarray:
    """Mix ``x`` with the uniform distribution: ``(1 - lam) * x + lam / m``.

    Every entry of the result is at least ``lam / m``. Works row-wise on 2-D
    input.
    """
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"perturbation lambda must lie in [0, 1], got {lam!r}")
    x = np.asarray(x, dtype=np.float64)
    m = x.shape[-1]
    if lam == 0.0:
        return x.copy()
    return (1.0 - lam) * x + lam / m


def sample_index(p, rng: np.random.Generator) -> int:
    """Draw index ``j`` with probability ``p[j]``, consuming one uniform from ``rng``."""
    return int(sample_rows(np.asarray(p, dtype=np.float64)[None, :], rng.random(1))[0])


def sample_rows(P: np.ndarray, uniforms: np.ndarray) -> np.ndarray:
    """Inverse-CDF sampling of one index per row of ``P``.

    ``uniforms[i]`` in [0, 1) drives row ``i``. Scaling by the row total keeps
    rounding in the cumulative sum from ever selecting a zero-probability
    trailing entry.
    """
    cdf = np.cumsum(P, axis=1)
    target = uniforms * cdf[:, -1]
    idx = np.count_nonzero(cdf <= target[:, None], axis=1)
    return np.minimum(idx, P.shape[1] - 1)


def vertex_distance(x_profile: Sequence, pure_profile: Sequence[int]) -> float:
    """Largest sup-norm distance between ``x_i`` and the vertex of action ``pure_profile[i]``.

    Raises:
        ValueError: when the agent counts differ or an action index is out of range.
    """
    if len(x_profile) != len(pure_profile):
        raise ValueError(
            f"{len(x_profile)} strategies but {len(pure_profile)} actions in the profile"
        )
    worst = 0.0
    for x, a in zip(x_profile, pure_profile):
        x = np.asarray(x, dtype=np.float64)
        if not 0 <= a < x.size:
            raise ValueError(f"action {a} is outside a strategy of dimension {x.size}")
        e = np.zeros_like(x)
        e[a] = 1.0
        worst = max(worst, float(np.max(np.abs(x - e))))
    return worst


def nearest_vertex_distance(X: np.ndarray, profiles: np.ndarray) -> float:
    """Minimum over ``profiles`` of :func:`vertex_distance`, vectorized.

    ``X`` holds one strategy per row; ``profiles`` is an integer array of shape
    ``(K, n)``. For a simplex point the sup-norm distance to ``e_a`` equals
    ``1 - x[a]``, since the mass off ``a`` bounds every other coordinate.
    """
    chosen = X[np.arange(X.shape[0]), profiles]  # (K, n)
    return float(np.min(1.0 - chosen.min(axis=1)))
