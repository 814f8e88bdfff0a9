"""Discrete-time closed-loop simulation of the resource manager and its threads.

Steps are numbered from 1. During step ``k`` every active thread runs on the
CPU chosen for it, the manager reads (noisy) speed measurements at the end
of the period, learns from them and picks the placement for step ``k + 1``.
A thread's completion time is ``k * period_sec`` for the first step at which
its cumulative work reaches ``total_work``.

The measurement/placement boundary is :class:`Backend`; only the simulated
backend exists here, but the learning loop only talks to that interface.
"""

from __future__ import annotations

import bisect
import csv
import enum
import io
import math
import statistics
from dataclasses import dataclass, field, replace
from typing import Protocol, Sequence

import numpy as np

from .errors import MeasurementError
from .game import GameSpec, Platform, Profile, ThreadSpec, speeds
from .learner import (
    LearnerConfig,
    StrategyState,
    add_agent,
    empty_state,
    measured_utility,
    remove_agents,
    select_actions,
    update_nominal,
)
from .simplex import nearest_vertex_distance, perturb, sample_rows

NOISE_FLOOR = 0.01


@dataclass(frozen=True)
class Scenario:
    platform: Platform
    threads: tuple[ThreadSpec, ...]
    period_sec: float = 0.3
    horizon_steps: int = 5000
    noise_cv: float = 0.0
    gamma: float = 0.0
    epsilon: float = 0.005
    lam: float = 0.005
    speed_scale: float = 1.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "threads", tuple(self.threads))
        if not self.threads:
            raise ValueError("a scenario needs at least one thread")
        if not (self.period_sec > 0 and math.isfinite(self.period_sec)):
            raise ValueError(f"period_sec must be positive, got {self.period_sec!r}")
        if int(self.horizon_steps) != self.horizon_steps or self.horizon_steps < 1:
            raise ValueError(f"horizon_steps must be a positive integer, got {self.horizon_steps!r}")
        if not (self.noise_cv >= 0 and math.isfinite(self.noise_cv)):
            raise ValueError(f"noise_cv must be nonnegative, got {self.noise_cv!r}")
        # delegate the remaining checks to the types that own them
        LearnerConfig(self.epsilon, self.lam)
        GameSpec(self.platform, tuple(t.demand for t in self.threads), self.gamma, self.speed_scale)

    @property
    def n_threads(self) -> int:
        return len(self.threads)

    @property
    def n_cpus(self) -> int:
        return self.platform.n_cpus

    @property
    def learner_config(self) -> LearnerConfig:
        return LearnerConfig(self.epsilon, self.lam)

    def game(self, thread_ids: Sequence[int] | None = None) -> GameSpec:
        """The assignment game among ``thread_ids`` (default: every thread)."""
        ids = range(self.n_threads) if thread_ids is None else thread_ids
        return GameSpec(
            self.platform,
            tuple(self.threads[i].demand for i in ids),
            self.gamma,
            self.speed_scale,
        )

    def with_changes(self, **changes) -> "Scenario":
        return replace(self, **changes)


def reachable_thread_sets(scenario: Scenario, max_threads: int = 12) -> list[tuple[int, ...]]:
    """Active-thread sets that can occur during a run, ignoring the horizon.

    A set ``S`` can be active right after its last member arrives provided
    every other thread that has arrived by then is able to finish. For more
    than ``max_threads`` threads only the full set is returned.
    """
    n = scenario.n_threads
    if n > max_threads:
        return [tuple(range(n))]
    arrival = [max(1, t.arrival_step) for t in scenario.threads]
    finite = [math.isfinite(t.total_work) for t in scenario.threads]
    out = []
    for mask in range(1, 1 << n):
        members = [i for i in range(n) if mask >> i & 1]
        t = max(arrival[i] for i in members)
        if all(finite[j] for j in range(n) if not mask >> j & 1 and arrival[j] <= t):
            out.append(tuple(members))
    return out


@dataclass
class StepRecord:
    """One period of a run. ``active`` is sorted by thread id; ``profile`` and
    every per-thread array follow that order."""

    step: int
    active: tuple[int, ...]
    profile: Profile
    true_speeds: np.ndarray
    measured_speeds: np.ndarray
    utility: float
    strategies: np.ndarray  # nominal strategies after this step's update, one row per active thread


@dataclass
class Trace:
    period_sec: float
    n_threads: int
    n_cpus: int
    policy: str
    seed: int
    records: list[StepRecord] = field(default_factory=list)
    completion_step: dict[int, int] = field(default_factory=dict)
    skipped_updates: int = 0

    @property
    def all_completed(self) -> bool:
        return len(self.completion_step) == self.n_threads

    def completion_time(self, thread_id: int) -> float | None:
        k = self.completion_step.get(thread_id)
        return None if k is None else round(k * self.period_sec, 9)

    @property
    def makespan(self) -> float:
        if not self.all_completed:
            missing = sorted(set(range(self.n_threads)) - set(self.completion_step))
            raise ValueError(f"trace ({self.policy}, seed {self.seed}) has unfinished threads {missing}")
        return round(max(self.completion_step.values()) * self.period_sec, 9)

    def first_step_of(self, thread_id: int) -> int | None:
        for rec in self.records:
            if thread_id in rec.active:
                return rec.step
        return None


class Backend(Protocol):
    """Where placements are applied and speeds are read back."""

    def apply(self, active: Sequence[int], profile: Profile) -> None: ...

    def measure(self) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(true_speeds, measured_speeds)`` for the last applied placement."""
        ...


class SimulatedBackend:
    """Speeds from the contention model, measured with multiplicative Gaussian noise.

    A reading is ``v * max(eta, NOISE_FLOOR)`` with ``eta ~ N(1, noise_cv)``,
    which keeps every measurement strictly positive.
    """

    def __init__(self, scenario: Scenario, rng: np.random.Generator):
        self.scenario = scenario
        self.rng = rng
        self._games: dict[tuple[int, ...], GameSpec] = {}
        self._active: tuple[int, ...] = ()
        self._profile: Profile = ()

    def game(self, active: tuple[int, ...]) -> GameSpec:
        g = self._games.get(active)
        if g is None:
            g = self._games[active] = self.scenario.game(active)
        return g

    def apply(self, active, profile):
        self._active = tuple(active)
        self._profile = tuple(profile)

    def measure(self):
        true = speeds(self._profile, self.game(self._active))
        cv = self.scenario.noise_cv
        if cv == 0:
            return true, true.copy()
        eta = self.rng.normal(1.0, cv, size=true.size)
        return true, true * np.maximum(eta, NOISE_FLOOR)


class BaselinePolicy(str, enum.Enum):
    STATIC_RANDOM = "static-random"
    ROUND_ROBIN = "round-robin"
    GREEDY_LEAST_LOADED = "greedy-least-loaded"


class _LearningPlacer:
    name = "rl"

    def __init__(self, scenario: Scenario, rng: np.random.Generator):
        self.rng = rng
        self.state: StrategyState = empty_state(scenario.n_cpus, scenario.learner_config)

    def arrive(self, thread_id, active, profile) -> int:
        row = bisect.bisect(active, thread_id)
        self.state = add_agent(self.state, row)
        sigma = perturb(self.state.nominal[row : row + 1], self.state.config.lam)
        return int(sample_rows(sigma, self.rng.random(1))[0])

    def depart(self, rows):
        self.state = remove_agents(self.state, rows)

    def step(self, game: GameSpec, profile: Profile, measured: np.ndarray) -> tuple[Profile, float, bool]:
        try:
            u = measured_utility(game, measured)
        except MeasurementError:
            return select_actions(self.state, self.rng), math.nan, False
        self.state = update_nominal(self.state, profile, np.full(self.state.n_agents, u))
        return select_actions(self.state, self.rng), u, True

    def strategies(self) -> np.ndarray:
        return self.state.nominal


class _BaselinePlacer:
    def __init__(self, scenario: Scenario, policy: BaselinePolicy, rng: np.random.Generator):
        self.scenario = scenario
        self.policy = BaselinePolicy(policy)
        self.name = self.policy.value
        self.rng = rng
        self.m = scenario.n_cpus
        self._profile: Profile = ()

    def arrive(self, thread_id, active, profile) -> int:
        if self.policy is BaselinePolicy.STATIC_RANDOM:
            return int(self.rng.integers(self.m))
        if self.policy is BaselinePolicy.ROUND_ROBIN:
            return thread_id % self.m
        load = [0.0] * self.m
        for i, j in zip(active, profile):
            load[j] += self.scenario.threads[i].demand
        return int(np.argmin(load))

    def depart(self, rows):
        pass

    def step(self, game, profile, measured):
        self._profile = profile
        try:
            u = measured_utility(game, measured)
        except MeasurementError:
            u = math.nan
        return profile, u, True

    def strategies(self) -> np.ndarray:
        x = np.zeros((len(self._profile), self.m))
        x[np.arange(len(self._profile)), list(self._profile)] = 1.0
        return x


def _simulate(scenario: Scenario, placer, backend: Backend, seed: int) -> Trace:
    trace = Trace(scenario.period_sec, scenario.n_threads, scenario.n_cpus, placer.name, seed)
    pending = sorted(range(scenario.n_threads), key=lambda i: (max(1, scenario.threads[i].arrival_step), i))
    active: list[int] = []
    profile: list[int] = []
    work = [0.0] * scenario.n_threads
    period = scenario.period_sec
    games: dict[tuple[int, ...], GameSpec] = {}

    for k in range(1, scenario.horizon_steps + 1):
        while pending and max(1, scenario.threads[pending[0]].arrival_step) <= k:
            i = pending.pop(0)
            cpu = placer.arrive(i, tuple(active), tuple(profile))
            row = bisect.bisect(active, i)
            active.insert(row, i)
            profile.insert(row, cpu)
        if not active:
            if not pending:
                break
            continue

        act, prof = tuple(active), tuple(profile)
        backend.apply(act, prof)
        true, measured = backend.measure()
        game = games.get(act)
        if game is None:
            game = games[act] = scenario.game(act)
        nxt, u, learned = placer.step(game, prof, measured)
        if not learned:
            trace.skipped_updates += 1
        trace.records.append(StepRecord(k, act, prof, true, measured, u, placer.strategies()))

        done_rows = []
        for row, i in enumerate(act):
            work[i] += float(true[row]) * period
            if work[i] >= scenario.threads[i].total_work:
                trace.completion_step[i] = k
                done_rows.append(row)
        profile = list(nxt)
        if done_rows:
            placer.depart(done_rows)
            gone = set(done_rows)
            active = [i for r, i in enumerate(active) if r not in gone]
            profile = [a for r, a in enumerate(profile) if r not in gone]
        if not active and not pending:
            break
    return trace


def _streams(seed: int) -> tuple[np.random.Generator, np.random.Generator]:
    placement, noise = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(placement), np.random.default_rng(noise)


def run(scenario: Scenario, backend: Backend | None = None) -> Trace:
    """Run the learning resource manager over the scenario.

    Placement draws and measurement noise use independent streams derived
    from ``scenario.seed``, so a given scenario always yields the same trace.
    The run stops early once every thread has finished.
    """
    place_rng, noise_rng = _streams(scenario.seed)
    backend = backend if backend is not None else SimulatedBackend(scenario, noise_rng)
    return _simulate(scenario, _LearningPlacer(scenario, place_rng), backend, scenario.seed)


def run_baseline(scenario: Scenario, policy: BaselinePolicy | str, backend: Backend | None = None) -> Trace:
    """Same loop as :func:`run`, with placements from a fixed non-learning policy.

    ``static-random`` draws a uniform CPU when each thread arrives,
    ``round-robin`` puts thread ``i`` (0-based) on CPU ``i mod m``, and
    ``greedy-least-loaded`` puts each arriving thread on the CPU with the
    least resident demand. None of them ever migrates a thread.
    """
    place_rng, noise_rng = _streams(scenario.seed)
    backend = backend if backend is not None else SimulatedBackend(scenario, noise_rng)
    placer = _BaselinePlacer(scenario, BaselinePolicy(policy), place_rng)
    return _simulate(scenario, placer, backend, scenario.seed)


def time_fraction_near(trace: Trace, nash_set, delta: float, window: range) -> float:
    """Fraction of steps in ``window`` whose strategies lie within ``delta`` of a profile in ``nash_set``.

    Distance is :func:`rlpin.simplex.vertex_distance` (sup-norm, worst thread).
    """
    profiles = np.array(sorted(tuple(p) for p in nash_set), dtype=np.intp)
    if profiles.size == 0:
        raise ValueError("nash_set is empty")
    recs = [r for r in trace.records if r.step in window]
    if not recs:
        raise ValueError(f"no trace steps fall in window {window}")
    hits = 0
    for r in recs:
        if r.strategies.shape[0] != profiles.shape[1]:
            raise ValueError(
                f"step {r.step} has {r.strategies.shape[0]} active threads, "
                f"profiles have {profiles.shape[1]}"
            )
        if nearest_vertex_distance(r.strategies, profiles) < delta:
            hits += 1
    return hits / len(recs)


def last_fraction_window(trace: Trace, fraction: float = 0.2) -> range:
    """The final ``fraction`` of the recorded steps, as a step range."""
    last = trace.records[-1].step
    first = trace.records[0].step
    span = last - first + 1
    return range(last - max(1, int(round(span * fraction))) + 1, last + 1)


@dataclass
class CompletionStats:
    makespans: list[float]
    mean: float
    sd: float
    sd_defined: bool

    def to_dict(self) -> dict:
        return {"makespans": self.makespans, "mean": self.mean, "sd": self.sd, "sd_defined": self.sd_defined}


def summarize_makespans(makespans: Sequence[float]) -> CompletionStats:
    """Mean and sample standard deviation (n - 1 denominator); a single value gets sd 0, flagged."""
    values = [float(v) for v in makespans]
    if not values:
        raise ValueError("no makespans to summarize")
    mean = statistics.fmean(values)
    if len(values) == 1:
        return CompletionStats(values, mean, 0.0, False)
    return CompletionStats(values, mean, statistics.stdev(values), True)


def completion_stats(traces: Sequence[Trace]) -> CompletionStats:
    makespans = []
    for n, tr in enumerate(traces):
        if not tr.all_completed:
            raise ValueError(f"trace #{n} ({tr.policy}, seed {tr.seed}) did not complete every thread")
        makespans.append(tr.makespan)
    return summarize_makespans(makespans)


CSV_HEADER = (
    "step",
    "time_sec",
    "thread_id",
    "cpu",
    "true_speed",
    "measured_speed",
    "utility",
    "strategy_max",
    "strategy_argmax",
)


def write_trace_csv(trace: Trace, out) -> None:
    """One row per (step, active thread); thread ids and CPUs are written 1-based."""
    own = isinstance(out, (str, bytes)) or hasattr(out, "__fspath__")
    fh = open(out, "w", newline="") if own else out
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in trace.records:
            t = r.step * trace.period_sec
            smax = r.strategies.max(axis=1)
            sarg = r.strategies.argmax(axis=1)
            for row, i in enumerate(r.active):
                w.writerow(
                    (
                        r.step,
                        repr(t),
                        i + 1,
                        r.profile[row] + 1,
                        repr(float(r.true_speeds[row])),
                        repr(float(r.measured_speeds[row])),
                        repr(float(r.utility)),
                        repr(float(smax[row])),
                        int(sarg[row]) + 1,
                    )
                )
    finally:
        if own:
            fh.close()


def trace_to_csv(trace: Trace) -> str:
    buf = io.StringIO()
    write_trace_csv(trace, buf)
    return buf.getvalue()
