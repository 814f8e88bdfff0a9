"""The thread-to-CPU assignment game.

A profile is a tuple of 0-based CPU indices, one per active thread. Speeds
come from a proportional-share contention model: the threads resident on a
CPU split its free capacity in proportion to their demand, and no thread
runs faster than its own demand. All threads share the same utility, the
normalized global objective, so the game is an identical-interest game.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigurationError

Profile = tuple[int, ...]

EXHAUSTIVE_LIMIT = 10**6
VALIDATION_SAMPLES = 10**4


@dataclass(frozen=True)
class Platform:
    """CPU capacities (work-units/sec) and the fraction of each CPU used by outside load."""

    cpu_capacities: tuple[float, ...]
    exogenous_loads: tuple[float, ...] = ()

    def __post_init__(self):
        caps = tuple(float(c) for c in self.cpu_capacities)
        loads = tuple(float(w) for w in self.exogenous_loads) or (0.0,) * len(caps)
        if not caps:
            raise ValueError("a platform needs at least one CPU")
        if len(loads) != len(caps):
            raise ValueError(f"{len(caps)} capacities but {len(loads)} exogenous loads")
        if any(not (c > 0 and math.isfinite(c)) for c in caps):
            raise ValueError(f"CPU capacities must be positive and finite: {caps}")
        if any(not 0.0 <= w < 1.0 for w in loads):
            raise ValueError(f"exogenous loads must lie in [0, 1): {loads}")
        object.__setattr__(self, "cpu_capacities", caps)
        object.__setattr__(self, "exogenous_loads", loads)

    @property
    def n_cpus(self) -> int:
        return len(self.cpu_capacities)

    @property
    def available(self) -> tuple[float, ...]:
        return tuple(c * (1.0 - w) for c, w in zip(self.cpu_capacities, self.exogenous_loads))


@dataclass(frozen=True)
class ThreadSpec:
    demand: float
    total_work: float = math.inf
    arrival_step: int = 1

    def __post_init__(self):
        if not (self.demand > 0 and math.isfinite(self.demand)):
            raise ValueError(f"thread demand must be positive, got {self.demand!r}")
        if not self.total_work > 0:
            raise ValueError(f"total_work must be positive, got {self.total_work!r}")
        if int(self.arrival_step) != self.arrival_step or self.arrival_step < 0:
            raise ValueError(f"arrival_step must be a nonnegative integer, got {self.arrival_step!r}")


@dataclass(frozen=True)
class GameSpec:
    """A frozen assignment game over the currently active threads.

    ``speed_scale`` divides the objective so that utilities land in (0, 1].
    Whether it actually bounds the objective is checked by :func:`validate_game`,
    not here, since that needs a sweep over profiles.
    """

    platform: Platform
    demands: tuple[float, ...]
    gamma: float = 0.0
    speed_scale: float = 1.0
    _available: tuple[float, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        demands = tuple(float(d) for d in self.demands)
        if not demands:
            raise ValueError("a game needs at least one thread")
        if any(not (d > 0 and math.isfinite(d)) for d in demands):
            raise ValueError(f"demands must be positive: {demands}")
        if not self.gamma >= 0:
            raise ValueError(f"gamma must be nonnegative, got {self.gamma!r}")
        if not (self.speed_scale > 0 and math.isfinite(self.speed_scale)):
            raise ValueError(f"speed_scale must be positive, got {self.speed_scale!r}")
        object.__setattr__(self, "demands", demands)
        object.__setattr__(self, "gamma", float(self.gamma))
        object.__setattr__(self, "speed_scale", float(self.speed_scale))
        object.__setattr__(self, "_available", self.platform.available)

    @property
    def n_agents(self) -> int:
        return len(self.demands)

    @property
    def n_cpus(self) -> int:
        return self.platform.n_cpus

    @property
    def n_profiles(self) -> int:
        return self.n_cpus**self.n_agents


def _check_profile(profile: Sequence[int], game: GameSpec) -> None:
    if len(profile) != game.n_agents:
        raise ValueError(f"profile has {len(profile)} entries for a game with {game.n_agents} threads")
    m = game.n_cpus
    for a in profile:
        if not 0 <= a < m:
            raise ValueError(f"CPU index {a} out of range for {m} CPUs")


def speeds(profile: Sequence[int], game: GameSpec) -> np.ndarray:
    """Processing speed of each thread under ``profile``.

    Thread ``i`` on CPU ``j`` runs at ``demand_i * min(1, a_j / D_j)`` where
    ``a_j`` is the free capacity of ``j`` and ``D_j`` the total demand resident
    on it. Slack left by a capped thread is not redistributed.
    """
    _check_profile(profile, game)
    load = [0.0] * game.n_cpus
    for d, j in zip(game.demands, profile):
        load[j] += d
    avail = game._available
    return np.array(
        [d * min(1.0, avail[j] / load[j]) for d, j in zip(game.demands, profile)],
        dtype=np.float64,
    )


def objective_value(speed_vector, gamma: float) -> float:
    """Mean speed minus ``gamma`` times the (population) variance of the speeds.

    Sums are exact (``math.fsum``) so the value does not depend on the order
    of the threads; with ``gamma == 0`` this is exactly the mean speed.
    """
    v = [float(s) for s in np.asarray(speed_vector, dtype=np.float64).ravel()]
    if not v:
        raise ValueError("objective of an empty speed vector")
    if gamma < 0:
        raise ValueError(f"gamma must be nonnegative, got {gamma!r}")
    n = len(v)
    mean = math.fsum(v) / n
    if gamma == 0:
        return mean
    var = math.fsum((s - mean) ** 2 for s in v) / n
    return mean - gamma * var


def common_utility(profile: Sequence[int], game: GameSpec) -> float:
    return objective_value(speeds(profile, game), game.gamma) / game.speed_scale


def utilities(profile: Sequence[int], game: GameSpec) -> np.ndarray:
    """Per-thread utilities; every thread gets the normalized global objective.

    Raises:
        ConfigurationError: if the common utility falls outside (0, 1].
    """
    u = common_utility(profile, game)
    if not 0.0 < u <= 1.0:
        raise ConfigurationError(
            f"utility {u!r} outside (0, 1] at profile {tuple(int(a) for a in profile)}"
        )
    return np.full(game.n_agents, u)


def profile_array(game: GameSpec) -> np.ndarray:
    """All pure profiles as rows, in lexicographic (row-major) order."""
    n, m = game.n_agents, game.n_cpus
    grids = np.indices((m,) * n).reshape(n, -1).T
    return grids.astype(np.intp)


def objective_rows(profiles: np.ndarray, game: GameSpec) -> np.ndarray:
    """Vectorized objective for an ``(N, n)`` array of profiles."""
    profiles = np.asarray(profiles, dtype=np.intp)
    N, n = profiles.shape
    d = np.asarray(game.demands)
    avail = np.asarray(game._available)
    load = np.zeros((N, game.n_cpus))
    rows = np.arange(N)
    for i in range(n):
        np.add.at(load, (rows, profiles[:, i]), d[i])
    share = np.minimum(1.0, np.divide(avail, load, out=np.ones_like(load), where=load > 0))
    v = d[None, :] * share[rows[:, None], profiles]
    mean = v.mean(axis=1)
    if game.gamma == 0:
        return mean
    return mean - game.gamma * ((v - mean[:, None]) ** 2).mean(axis=1)


def objective_table(game: GameSpec, chunk: int = 200_000) -> np.ndarray:
    """Objective over every pure profile, shaped ``(m,) * n`` so axis ``i`` is thread ``i``'s CPU."""
    n, m = game.n_agents, game.n_cpus
    total = m**n
    out = np.empty(total)
    for start in range(0, total, chunk):
        idx = np.arange(start, min(total, start + chunk))
        profs = np.stack(np.unravel_index(idx, (m,) * n), axis=1)
        out[start : start + idx.size] = objective_rows(profs, game)
    return out.reshape((m,) * n)


@dataclass
class GameValidation:
    """Outcome of :func:`validate_game`."""

    ok: bool
    exhaustive: bool
    profiles_checked: int
    f_max: float
    f_min: float
    speed_scale: float
    witness: Profile | None = None
    violations: list[Profile] = field(default_factory=list)
    messages: list[str] = field(default_factory=list)

    def summary(self) -> str:
        mode = "exhaustive" if self.exhaustive else "sampled"
        head = "ok" if self.ok else "VIOLATION"
        lines = [
            f"{head}: {self.profiles_checked} profiles ({mode}), "
            f"f in [{self.f_min:.6g}, {self.f_max:.6g}], speed_scale={self.speed_scale:g}"
        ]
        lines.extend(self.messages)
        return "\n".join(lines)


def validate_game(game: GameSpec, rng: np.random.Generator | None = None) -> GameValidation:
    """Check that every utility is positive and that ``speed_scale`` bounds the objective.

    Games with at most ``EXHAUSTIVE_LIMIT`` profiles are checked exhaustively;
    larger ones on ``VALIDATION_SAMPLES`` uniformly random profiles, with a
    caveat in ``messages``.
    """
    exhaustive = game.n_profiles <= EXHAUSTIVE_LIMIT
    if exhaustive:
        table = objective_table(game).ravel()
        profs = None
    else:
        rng = rng if rng is not None else np.random.default_rng(0)
        profs = rng.integers(0, game.n_cpus, size=(VALIDATION_SAMPLES, game.n_agents))
        table = objective_rows(profs, game)

    def profile_at(k: int) -> Profile:
        if profs is not None:
            return tuple(int(a) for a in profs[k])
        return tuple(int(a) for a in np.unravel_index(k, (game.n_cpus,) * game.n_agents))

    messages = []
    bad = np.flatnonzero(table <= 0.0)
    violations = [profile_at(k) for k in bad[:100]]
    witness = None
    if bad.size:
        k = int(bad[np.argmin(table[bad])])
        witness = profile_at(k)
        messages.append(
            f"objective {table[k]:.6g} <= 0 at profile {witness} ({bad.size} such profiles); "
            "gamma is too large for positive utilities"
        )
    f_max = float(table.max())
    if f_max > game.speed_scale:
        k = int(np.argmax(table))
        if witness is None:
            witness = profile_at(k)
        messages.append(
            f"speed_scale {game.speed_scale:g} is below the maximum objective {f_max:.6g} "
            f"reached at {profile_at(k)}"
        )
    if not exhaustive:
        messages.append(
            f"game has {game.n_profiles} profiles; only {table.size} random ones were checked"
        )
    return GameValidation(
        ok=not bad.size and f_max <= game.speed_scale,
        exhaustive=exhaustive,
        profiles_checked=int(table.size),
        f_max=f_max,
        f_min=float(table.min()),
        speed_scale=game.speed_scale,
        witness=witness,
        violations=violations,
        messages=messages,
    )


def iter_profiles(n_agents: int, n_cpus: int) -> Iterable[Profile]:
    return itertools.product(range(n_cpus), repeat=n_agents)
