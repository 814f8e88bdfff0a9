"""Slow, independent reference implementations used as test oracles.

Nothing here calls into the package's vectorized paths: each function is
written from the defining formula with plain loops.
"""

import itertools

import numpy as np

from rlpin.game import GameSpec, objective_value, speeds

_MASKS: dict[int, np.ndarray] = {}


def _support_masks(m: int) -> np.ndarray:
    if m not in _MASKS:
        _MASKS[m] = np.array([[(s >> j) & 1 for j in range(m)] for s in range(1, 1 << m)], dtype=bool)
    return _MASKS[m]


def qp_projection(v) -> np.ndarray:
    """Simplex projection by exhaustive active-set search.

    For every candidate support S the equality-constrained minimizer is
    ``v_S - theta`` with ``theta = (sum(v_S) - 1) / |S|``; among the
    candidates that are nonnegative, the closest to ``v`` is the projection.
    """
    v = np.asarray(v, dtype=np.float64)
    M = _support_masks(v.size)
    size = M.sum(axis=1)
    theta = ((M * v).sum(axis=1) - 1.0) / size
    Y = np.where(M, v[None, :] - theta[:, None], 0.0)
    feasible = (Y >= -1e-15).all(axis=1)
    dist = ((Y - v) ** 2).sum(axis=1)
    dist[~feasible] = np.inf
    return np.maximum(Y[int(np.argmin(dist))], 0.0)


def brute_utility(profile, game: GameSpec) -> float:
    return objective_value(speeds(profile, game), game.gamma) / game.speed_scale


def brute_nash(game: GameSpec, tol: float = 1e-9):
    """(pure Nash set, efficient set) from a profile-by-profile loop."""
    m, n = game.n_cpus, game.n_agents
    util = {p: brute_utility(p, game) for p in itertools.product(range(m), repeat=n)}
    best = max(util.values())
    nash = set()
    for p, u in util.items():
        stable = True
        for i in range(n):
            for j in range(m):
                q = p[:i] + (j,) + p[i + 1 :]
                if util[q] > u + tol:
                    stable = False
        if stable:
            nash.add(p)
    efficient = {p for p, u in util.items() if u >= best - tol}
    return nash, efficient


def brute_expected_payoff(sigma, game: GameSpec, agent: int) -> np.ndarray:
    m, n = game.n_cpus, game.n_agents
    out = np.zeros(m)
    others = [s for s in range(n) if s != agent]
    for j in range(m):
        for rest in itertools.product(range(m), repeat=n - 1):
            prob = 1.0
            prof = [0] * n
            prof[agent] = j
            for s, a in zip(others, rest):
                prof[s] = a
                prob *= sigma[s][a]
            out[j] += prob * brute_utility(tuple(prof), game)
    return out


def brute_drift(x, game: GameSpec, lam: float) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    m, n = game.n_cpus, game.n_agents
    sigma = (1 - lam) * x + lam / m
    drift = np.zeros_like(x)
    for prof in itertools.product(range(m), repeat=n):
        prob = 1.0
        for s, a in enumerate(prof):
            prob *= sigma[s][a]
        u = brute_utility(prof, game)
        for i, a in enumerate(prof):
            e = np.zeros(m)
            e[a] = 1.0
            drift[i] += prob * u * (e - x[i])
    return drift
