"""Perturbed reinforcement learning for CPU placement.

Each thread keeps a nominal strategy ``x_i`` over the CPUs. Placements are
drawn from the perturbed strategy ``(1 - lam) * x_i + lam / m`` and, after a
period, every thread's nominal strategy moves toward the CPU it just used by
a fraction ``eps * u`` of the remaining distance, where ``u`` is the common
utility measured over that period.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import MeasurementError
from .game import GameSpec, Profile, objective_value
from .simplex import SUM_TOL, perturb, project_to_simplex, sample_rows


@dataclass(frozen=True)
class LearnerConfig:
    epsilon: float = 0.005
    lam: float = 0.005

    def __post_init__(self):
        if not 0.0 < self.epsilon <= 1.0:
            raise ValueError(f"epsilon must lie in (0, 1], got {self.epsilon!r}")
        if not 0.0 <= self.lam < 1.0:
            raise ValueError(f"lambda must lie in [0, 1), got {self.lam!r}")


@dataclass(frozen=True, eq=False)
class StrategyState:
    """Nominal strategies (one row per active thread) plus the step counter.

    Treat instances as values: every operation returns a new state and the
    ``nominal`` array is never modified in place.
    """

    nominal: np.ndarray
    config: LearnerConfig
    step_count: int = 0

    @property
    def n_agents(self) -> int:
        return self.nominal.shape[0]

    @property
    def n_actions(self) -> int:
        return self.nominal.shape[1]

    def __eq__(self, other):
        if not isinstance(other, StrategyState):
            return NotImplemented
        return (
            self.config == other.config
            and self.step_count == other.step_count
            and self.nominal.shape == other.nominal.shape
            and bool(np.array_equal(self.nominal, other.nominal))
        )


def init_state(n_agents: int, m_actions: int, config: LearnerConfig) -> StrategyState:
    """All threads start from the uniform strategy over ``m_actions`` CPUs."""
    if n_agents < 1 or m_actions < 1:
        raise ValueError(f"need n_agents >= 1 and m_actions >= 1, got ({n_agents}, {m_actions})")
    nominal = np.full((n_agents, m_actions), 1.0 / m_actions)
    nominal.flags.writeable = False
    return StrategyState(nominal, config, 0)


def empty_state(m_actions: int, config: LearnerConfig) -> StrategyState:
    """A state with no threads yet, for runs whose first arrival comes later."""
    if m_actions < 1:
        raise ValueError(f"need m_actions >= 1, got {m_actions}")
    nominal = np.empty((0, m_actions))
    nominal.flags.writeable = False
    return StrategyState(nominal, config, 0)


def add_agent(state: StrategyState, at: int | None = None) -> StrategyState:
    """Insert a newly arrived thread with a uniform strategy at row ``at`` (default: last).

    Other rows are copied unchanged.
    """
    m = state.n_actions
    at = state.n_agents if at is None else at
    nominal = np.insert(state.nominal, at, np.full(m, 1.0 / m), axis=0)
    nominal.flags.writeable = False
    return StrategyState(nominal, state.config, state.step_count)


def remove_agents(state: StrategyState, rows) -> StrategyState:
    """Drop the given rows (departed threads) without renormalizing anything else."""
    keep = np.setdiff1d(np.arange(state.n_agents), np.asarray(list(rows), dtype=np.intp))
    nominal = state.nominal[keep].copy()
    nominal.flags.writeable = False
    return StrategyState(nominal, state.config, state.step_count)


def perturbed_strategies(state: StrategyState) -> np.ndarray:
    return perturb(state.nominal, state.config.lam)


def select_actions(state: StrategyState, rng: np.random.Generator) -> Profile:
    """Sample one CPU per thread from its perturbed strategy.

    A single block of ``n`` uniforms is drawn and thread ``i`` consumes the
    ``i``-th, so each thread's draw comes from its own slot of the stream.
    """
    if state.n_agents == 0:
        return ()
    sigma = perturbed_strategies(state)
    draws = rng.random(state.n_agents)
    return tuple(int(a) for a in sample_rows(sigma, draws))


def reinforce(nominal: np.ndarray, profile, utility, epsilon: float) -> np.ndarray:
    """The update before projection: ``x + eps * u * (e_a - x)`` row-wise."""
    x = np.asarray(nominal, dtype=np.float64)
    step = epsilon * np.asarray(utility, dtype=np.float64)
    if step.ndim == 0:
        step = np.full(x.shape[0], step)
    rows = np.arange(x.shape[0])
    cols = np.asarray(profile, dtype=np.intp)
    y = x * (1.0 - step)[:, None]
    xa = x[rows, cols]
    # written as x_a + s * (1 - x_a) so the chosen entry can never round downward
    y[rows, cols] = xa + step * (1.0 - xa)
    return y


def update_nominal(state: StrategyState, profile, utilities) -> StrategyState:
    """Reinforce each thread's chosen CPU in proportion to its utility.

    Raises:
        ValueError: if a utility lies outside (0, 1] or the profile does not
            match the state.
    """
    n = state.n_agents
    u = np.asarray(utilities, dtype=np.float64)
    if len(profile) != n or u.shape != (n,):
        raise ValueError(f"expected {n} actions and utilities, got {len(profile)} and {u.shape}")
    if n == 0:
        return StrategyState(state.nominal, state.config, state.step_count + 1)
    if not (0.0 < u.min() and u.max() <= 1.0):
        raise ValueError(f"utilities must lie in (0, 1], got {u.tolist()}")
    if min(profile) < 0 or max(profile) >= state.n_actions:
        raise ValueError(f"profile {tuple(profile)} has a CPU outside 0..{state.n_actions - 1}")
    y = reinforce(state.nominal, profile, u, state.config.epsilon)
    # Convex combination of two simplex points; only rounding can push it off.
    # Rows are short, so a plain loop beats several numpy reductions here.
    if any(min(r) < 0.0 or abs(math.fsum(r) - 1.0) > SUM_TOL for r in y.tolist()):
        y = project_to_simplex(y)
    y.flags.writeable = False
    return StrategyState(y, state.config, state.step_count + 1)


def measured_utility(game: GameSpec, measured_speeds) -> float:
    """Common utility computed from measured speeds, saturated at 1.

    Noise can push a measurement above the normalization bound; such readings
    are clipped to 1 rather than rejected.

    Raises:
        MeasurementError: on a non-positive speed or a non-positive objective.
    """
    v = np.asarray(measured_speeds, dtype=np.float64)
    if v.shape != (game.n_agents,):
        raise MeasurementError(f"expected {game.n_agents} measurements, got shape {v.shape}")
    if not np.all(v > 0) or not np.all(np.isfinite(v)):
        raise MeasurementError(f"measured speeds must be positive and finite: {v.tolist()}")
    u = objective_value(v, game.gamma) / game.speed_scale
    if u <= 0.0:
        raise MeasurementError(f"measured objective {u * game.speed_scale!r} is not positive")
    return min(u, 1.0)


def rm_step(
    state: StrategyState,
    game: GameSpec,
    profile,
    measured_speeds,
    rng: np.random.Generator,
) -> tuple[StrategyState, Profile]:
    """One resource-manager period: learn from ``profile``'s measurements, then re-place.

    Returns the updated state and the placement for the next period.
    """
    u = measured_utility(game, measured_speeds)
    state = update_nominal(state, profile, np.full(state.n_agents, u))
    return state, select_actions(state, rng)
