"""Exhaustive ground truth for small assignment games.

Everything here enumerates the full table of pure profiles, so it is only
meant for desk-scale games (at most ``EXHAUSTIVE_LIMIT`` profiles).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, GameTooLargeError
from .game import EXHAUSTIVE_LIMIT, GameSpec, Profile, objective_table
from .simplex import perturb

NASH_TOL = 1e-9


@dataclass
class EquilibriumReport:
    """Pure Nash equilibria and efficient profiles of one game.

    Profiles are tuples of 0-based CPU indices. ``f_values`` maps every pure
    profile to its (unnormalized) objective value.
    """

    pure_nash: set[Profile]
    efficient: set[Profile]
    f_values: dict[Profile, float]
    tolerance: float
    strict_nash: set[Profile] = field(default_factory=set)

    def to_dict(self) -> dict:
        """JSON-ready form with 1-based CPU numbers, sorted for stable output."""

        def key(p: Profile) -> str:
            return ",".join(str(a + 1) for a in p)

        def plist(ps) -> list[list[int]]:
            return [[a + 1 for a in p] for p in sorted(ps)]

        return {
            "tolerance": self.tolerance,
            "n_profiles": len(self.f_values),
            "pure_nash": plist(self.pure_nash),
            "strict_nash": plist(self.strict_nash),
            "efficient": plist(self.efficient),
            "f_max": max(self.f_values.values()),
            "f_values": {key(p): self.f_values[p] for p in sorted(self.f_values)},
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)


@dataclass
class DriftReport:
    drift: np.ndarray  # one row per agent
    sup_norm: float


def _require_enumerable(n_profiles: int, what: str) -> None:
    if n_profiles > EXHAUSTIVE_LIMIT:
        raise GameTooLargeError(
            f"{what} needs {n_profiles} profiles, above the enumeration cap of "
            f"{EXHAUSTIVE_LIMIT}; estimate by sampling instead"
        )


def utility_table(game: GameSpec) -> np.ndarray:
    """Common utility for every pure profile, shaped ``(m,) * n``.

    Raises:
        GameTooLargeError: beyond the enumeration cap.
        ConfigurationError: if any utility is not positive.
    """
    _require_enumerable(game.n_profiles, "the utility table")
    U = objective_table(game) / game.speed_scale
    if U.min() <= 0.0:
        k = int(np.argmin(U))
        bad = tuple(int(a) for a in np.unravel_index(k, U.shape))
        raise ConfigurationError(f"utility {U.flat[k]!r} <= 0 at profile {bad}")
    return U


def _best_deviation(U: np.ndarray, exclude_self: bool) -> list[np.ndarray]:
    """Per agent, the best utility reachable by a unilateral switch, broadcast to U's shape."""
    out = []
    for i in range(U.ndim):
        if not exclude_self:
            out.append(np.max(U, axis=i, keepdims=True))
            continue
        m = U.shape[i]
        if m == 1:
            out.append(np.full_like(U, -np.inf))
            continue
        # best among the other CPUs: top-2 trick along axis i
        srt = np.sort(U, axis=i)
        top = np.take(srt, [m - 1], axis=i)
        second = np.take(srt, [m - 2], axis=i)
        out.append(np.where(U >= top, second, top))
    return out


def enumerate_pure_nash(game: GameSpec, tol: float = NASH_TOL) -> EquilibriumReport:
    """All pure Nash equilibria and efficient profiles, by brute force.

    A profile is Nash when no thread can raise the common utility by more
    than ``tol`` by moving alone to another CPU (ties count as equilibrium).
    It is efficient when its utility is within ``tol`` of the maximum.
    """
    _require_enumerable(game.n_profiles, "pure-Nash enumeration")
    F = objective_table(game)
    U = F / game.speed_scale
    nash = np.ones(U.shape, dtype=bool)
    for best in _best_deviation(U, exclude_self=False):
        nash &= U >= best - tol
    strict = np.ones(U.shape, dtype=bool)
    for best_other in _best_deviation(U, exclude_self=True):
        strict &= U > best_other + tol
    efficient = U >= U.max() - tol

    def profiles(mask) -> set[Profile]:
        return {tuple(int(a) for a in idx) for idx in np.argwhere(mask)}

    f_values = {
        tuple(int(a) for a in idx): float(F[idx]) for idx in np.ndindex(*F.shape)
    }
    return EquilibriumReport(
        pure_nash=profiles(nash),
        efficient=profiles(efficient),
        f_values=f_values,
        tolerance=tol,
        strict_nash=profiles(strict & nash),
    )


def _expected_payoffs(U: np.ndarray, sigma: np.ndarray, agent: int) -> np.ndarray:
    """Contract every axis except ``agent`` against the matching row of ``sigma``."""
    T = U
    # contract from the last axis down so the remaining axis indices stay valid
    for s in range(U.ndim - 1, -1, -1):
        if s == agent:
            continue
        T = np.tensordot(T, sigma[s], axes=([s], [0]))
    return np.asarray(T, dtype=np.float64)


def expected_payoff_vector(sigma_profile, game: GameSpec, agent: int) -> np.ndarray:
    """Expected utility of ``agent`` for each of its CPUs when the others play ``sigma_profile``.

    Entry ``j`` is the exact sum over opponents' pure profiles of the product
    of their probabilities times the utility of ``(j, opponents)``.
    """
    sigma = np.asarray(sigma_profile, dtype=np.float64)
    if sigma.shape != (game.n_agents, game.n_cpus):
        raise ValueError(f"expected strategies of shape {(game.n_agents, game.n_cpus)}, got {sigma.shape}")
    if not 0 <= agent < game.n_agents:
        raise ValueError(f"agent {agent} out of range")
    _require_enumerable(game.n_cpus ** (game.n_agents - 1), "the expected payoff vector")
    return _expected_payoffs(utility_table(game), sigma, agent)


def mean_field_drift(x_profile, game: GameSpec, lam: float, U: np.ndarray | None = None) -> DriftReport:
    """Expected one-step motion of the nominal strategies, per unit step size.

    With ``sigma = perturb(x, lam)`` and ``U_i`` the expected payoff vector
    of agent ``i`` under ``sigma``, the drift of agent ``i`` is
    ``sigma_i * U_i - (sigma_i . U_i) * x_i``, i.e. the exact expectation of
    ``u(alpha) * (e_{alpha_i} - x_i)``. A precomputed utility table may be
    passed as ``U`` to avoid rebuilding it.
    """
    x = np.asarray(x_profile, dtype=np.float64)
    if x.shape != (game.n_agents, game.n_cpus):
        raise ValueError(f"expected strategies of shape {(game.n_agents, game.n_cpus)}, got {x.shape}")
    _require_enumerable(game.n_profiles, "the mean-field drift")
    if U is None:
        U = utility_table(game)
    sigma = perturb(x, lam)
    drift = np.empty_like(x)
    for i in range(game.n_agents):
        Ui = _expected_payoffs(U, sigma, i)
        drift[i] = sigma[i] * Ui - float(sigma[i] @ Ui) * x[i]
    return DriftReport(drift=drift, sup_norm=float(np.max(np.abs(drift))))


def is_stationary(x_profile, game: GameSpec, lam: float, tol: float) -> bool:
    return mean_field_drift(x_profile, game, lam).sup_norm <= tol


def pure_profile_strategies(profile, n_cpus: int) -> np.ndarray:
    """Vertex strategies (one-hot rows) for a pure profile."""
    x = np.zeros((len(profile), n_cpus))
    x[np.arange(len(profile)), list(profile)] = 1.0
    return x
