"""Command-line front end: ``rlpin run|nash|validate <scenario.json>``.

Scenario files are JSON documents::

    {
      "platform": {"capacities": [1, 1, 1], "loads": [0, 0, 0]},
      "threads": [{"demand": 1.0, "total_work": 300, "arrival_step": 1}, ...],
      "period_sec": 0.3, "horizon_steps": 10000, "noise_cv": 0.05,
      "gamma": 0.04, "epsilon": 0.005, "lambda": 0.005,
      "speed_scale": 1.0, "seed": 1
    }

``total_work`` may be ``null`` for a thread that never finishes. Bundled
scenarios (``experiment1.json``, ``experiment2.json``) can be named directly.
Output files number threads and CPUs from 1.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .errors import GameTooLargeError, ScenarioError
from .game import Platform, ThreadSpec, validate_game
from .oracle import enumerate_pure_nash
from .sim import (
    BaselinePolicy,
    Scenario,
    Trace,
    completion_stats,
    reachable_thread_sets,
    run,
    run_baseline,
    time_fraction_near,
    write_trace_csv,
)

log = logging.getLogger("rlpin")

TOP_LEVEL_KEYS = (
    "platform",
    "threads",
    "period_sec",
    "horizon_steps",
    "noise_cv",
    "gamma",
    "epsilon",
    "lambda",
    "speed_scale",
    "seed",
)


def _line_of(text: str, path: str) -> int | None:
    """Best-effort source line of ``path`` (e.g. ``threads[2].demand``) in ``text``.

    Finds the n-th occurrence of the last key, where n is the list index
    inside the path when the key belongs to a list element.
    """
    tail = path.rsplit(".", 1)[-1]
    key = tail.split("[", 1)[0]
    nth = 0
    if "[" in path and "[" not in tail:
        nth = int(path.rsplit("[", 1)[1].split("]", 1)[0])
    pos = -1
    for _ in range(nth + 1):
        pos = text.find(f'"{key}"', pos + 1)
        if pos < 0:
            return None
    return text.count("\n", 0, pos) + 1


def _number(doc: dict, key: str, path: str, *, integer: bool = False, allow_null: bool = False):
    if key not in doc:
        raise ScenarioError(path, "required field is missing")
    v = doc[key]
    if v is None and allow_null:
        return math.inf
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ScenarioError(path, f"expected {'an integer' if integer else 'a number'}, got {type(v).__name__}")
    if integer and not isinstance(v, int):
        if not float(v).is_integer():
            raise ScenarioError(path, f"expected an integer, got {v!r}")
        v = int(v)
    if not integer and not math.isfinite(v):
        raise ScenarioError(path, "must be finite")
    return v


def _check(cond: bool, path: str, constraint: str):
    if not cond:
        raise ScenarioError(path, constraint)


def scenario_from_dict(doc) -> Scenario:
    """Build a validated :class:`Scenario` from a decoded JSON document."""
    _check(isinstance(doc, dict), "<root>", "expected a JSON object")
    unknown = sorted(set(doc) - set(TOP_LEVEL_KEYS))
    _check(not unknown, unknown[0] if unknown else "", "unknown field")

    _check("platform" in doc, "platform", "required field is missing")
    plat = doc["platform"]
    _check(isinstance(plat, dict), "platform", "expected an object with capacities and loads")
    for key in ("capacities", "loads"):
        _check(key in plat, f"platform.{key}", "required field is missing")
        _check(isinstance(plat[key], list), f"platform.{key}", "expected a list of numbers")
    caps = [_number({"v": c}, "v", f"platform.capacities[{j}]") for j, c in enumerate(plat["capacities"])]
    loads = [_number({"v": w}, "v", f"platform.loads[{j}]") for j, w in enumerate(plat["loads"])]
    _check(len(caps) >= 1, "platform.capacities", "at least one CPU is required")
    _check(len(loads) == len(caps), "platform.loads", f"needs one entry per CPU ({len(caps)})")
    for j, c in enumerate(caps):
        _check(c > 0, f"platform.capacities[{j}]", "must be > 0")
    for j, w in enumerate(loads):
        _check(0 <= w < 1, f"platform.loads[{j}]", "must lie in [0, 1)")

    _check("threads" in doc, "threads", "required field is missing")
    _check(isinstance(doc["threads"], list) and doc["threads"], "threads", "expected a non-empty list")
    threads = []
    for i, t in enumerate(doc["threads"]):
        p = f"threads[{i}]"
        _check(isinstance(t, dict), p, "expected an object")
        demand = _number(t, "demand", f"{p}.demand")
        work = _number(t, "total_work", f"{p}.total_work", allow_null=True)
        arrival = _number(t, "arrival_step", f"{p}.arrival_step", integer=True)
        _check(demand > 0, f"{p}.demand", "must be > 0")
        _check(work > 0, f"{p}.total_work", "must be > 0 (or null for unbounded work)")
        _check(arrival >= 0, f"{p}.arrival_step", "must be >= 0")
        threads.append(ThreadSpec(float(demand), float(work), int(arrival)))

    period = _number(doc, "period_sec", "period_sec")
    horizon = _number(doc, "horizon_steps", "horizon_steps", integer=True)
    noise = _number(doc, "noise_cv", "noise_cv")
    gamma = _number(doc, "gamma", "gamma")
    eps = _number(doc, "epsilon", "epsilon")
    lam = _number(doc, "lambda", "lambda")
    scale = _number(doc, "speed_scale", "speed_scale")
    seed = _number(doc, "seed", "seed", integer=True)
    _check(period > 0, "period_sec", "must be > 0")
    _check(horizon >= 1, "horizon_steps", "must be >= 1")
    _check(noise >= 0, "noise_cv", "must be >= 0")
    _check(gamma >= 0, "gamma", "must be >= 0")
    _check(0 < eps <= 1, "epsilon", "must lie in (0, 1]")
    _check(0 <= lam < 1, "lambda", "must lie in [0, 1)")
    _check(scale > 0, "speed_scale", "must be > 0")
    _check(seed >= 0, "seed", "must be >= 0")

    return Scenario(
        platform=Platform(tuple(float(c) for c in caps), tuple(float(w) for w in loads)),
        threads=tuple(threads),
        period_sec=float(period),
        horizon_steps=int(horizon),
        noise_cv=float(noise),
        gamma=float(gamma),
        epsilon=float(eps),
        lam=float(lam),
        speed_scale=float(scale),
        seed=int(seed),
    )


def scenario_to_dict(scenario: Scenario) -> dict:
    """Canonical JSON-ready form; :func:`scenario_from_dict` inverts it exactly."""
    return {
        "platform": {
            "capacities": list(scenario.platform.cpu_capacities),
            "loads": list(scenario.platform.exogenous_loads),
        },
        "threads": [
            {
                "demand": t.demand,
                "total_work": None if math.isinf(t.total_work) else t.total_work,
                "arrival_step": t.arrival_step,
            }
            for t in scenario.threads
        ],
        "period_sec": scenario.period_sec,
        "horizon_steps": scenario.horizon_steps,
        "noise_cv": scenario.noise_cv,
        "gamma": scenario.gamma,
        "epsilon": scenario.epsilon,
        "lambda": scenario.lam,
        "speed_scale": scenario.speed_scale,
        "seed": scenario.seed,
    }


def check_scenario_games(scenario: Scenario) -> list[tuple[tuple[int, ...], object]]:
    """Validate the game of every reachable active-thread set; return the failures."""
    failures = []
    for ids, report in _validate_reachable(scenario):
        if not report.ok:
            failures.append((ids, report))
    return failures


def _validate_reachable(scenario: Scenario):
    # the objective is symmetric in thread labels, so equal demand multisets share a verdict
    seen = {}
    for ids in reachable_thread_sets(scenario):
        key = tuple(sorted(scenario.threads[i].demand for i in ids))
        if key not in seen:
            seen[key] = validate_game(scenario.game(ids))
        yield ids, seen[key]


def resolve_scenario_path(path) -> Path:
    p = Path(path)
    if p.exists():
        return p
    bundled = resources.files("rlpin") / "scenarios" / p.name
    if bundled.is_file():
        return Path(str(bundled))
    raise FileNotFoundError(f"scenario file not found: {path}")


def parse_scenario(path, *, check_games: bool = True) -> Scenario:
    """Read and validate a scenario file.

    Raises:
        ScenarioError: naming the offending field, the violated constraint
            and, where it can be located, the line in the file.
    """
    p = resolve_scenario_path(path)
    text = p.read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError("<document>", f"invalid JSON: {exc.msg}", exc.lineno) from None
    try:
        scenario = scenario_from_dict(doc)
    except ScenarioError as exc:
        raise ScenarioError(exc.field, exc.constraint, _line_of(text, exc.field)) from None
    if check_games:
        failures = check_scenario_games(scenario)
        if failures:
            ids, report = failures[0]
            field = "gamma" if report.f_min <= 0 else "speed_scale"
            threads = [i + 1 for i in ids]
            raise ScenarioError(
                field,
                f"game over threads {threads} fails validation: {'; '.join(report.messages)}",
                _line_of(text, field),
            )
    return scenario


@dataclass
class ExperimentConfig:
    scenario_path: str
    replicates: int = 1
    baseline: BaselinePolicy | None = None
    output_dir: str = "out"
    report_nash: bool = False
    delta: float = 0.1
    seed: int | None = None

    def __post_init__(self):
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        if self.report_nash and not self.delta > 0:
            raise ValueError("delta must be > 0 when reporting Nash metrics")
        if self.baseline is not None:
            self.baseline = BaselinePolicy(self.baseline)


def _full_set_window(trace: Trace, fraction: float = 0.2) -> range | None:
    """Last ``fraction`` of the steps during which every thread was active."""
    steps = [r.step for r in trace.records if len(r.active) == trace.n_threads]
    if not steps:
        return None
    first, last = steps[0], steps[-1]
    span = last - first + 1
    return range(last - max(1, int(round(span * fraction))) + 1, last + 1)


def _format_table(columns: dict[str, list[float]], stats: dict) -> str:
    names = list(columns)
    rows = max(len(v) for v in columns.values())
    width = max(14, *(len(n) + 2 for n in names))
    out = ["Run #".ljust(7) + "".join(n.rjust(width) for n in names)]
    out.append("-" * len(out[0]))
    for r in range(rows):
        cells = []
        for n in names:
            v = columns[n]
            cells.append((f"{v[r]:.1f} sec" if r < len(v) else "-").rjust(width))
        out.append(str(r + 1).ljust(7) + "".join(cells))
    out.append("-" * len(out[0]))
    out.append("aver.".ljust(7) + "".join(
        (f"{stats[n]['mean']:.2f} sec" if stats.get(n) else "n/a").rjust(width) for n in names))
    out.append("s.d.".ljust(7) + "".join(
        (f"{stats[n]['sd']:.2f} sec" if stats.get(n) else "n/a").rjust(width) for n in names))
    return "\n".join(out)


def run_experiment(config: ExperimentConfig, stream=None) -> int:
    """Run replicates (and matched baseline runs), write artifacts, print a summary table.

    Writes ``rl_runNN.csv`` per replicate, ``<baseline>_runNN.csv`` per
    baseline run, ``summary.json`` and, with ``report_nash``,
    ``equilibria.json``. Returns the process exit status: nonzero iff some
    error was signalled, in which case ``summary.json`` has status "partial".
    """
    stream = stream if stream is not None else sys.stdout
    errors: list[str] = []
    scenario = parse_scenario(config.scenario_path)
    if config.seed is not None:
        scenario = scenario.with_changes(seed=config.seed)
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)

    report = None
    nash_profiles = None
    if config.report_nash:
        try:
            report = enumerate_pure_nash(scenario.game())
            nash_profiles = report.pure_nash
        except GameTooLargeError as exc:
            errors.append(f"equilibrium report skipped: {exc}")
            log.warning("%s", exc)

    policies = ["rl"] + ([config.baseline.value] if config.baseline else [])
    traces: dict[str, list[Trace]] = {p: [] for p in policies}
    for r in range(config.replicates):
        sc = scenario.with_changes(seed=scenario.seed + r)
        for p in policies:
            tr = run(sc) if p == "rl" else run_baseline(sc, p)
            write_trace_csv(tr, out / f"{p}_run{r + 1:02d}.csv")
            traces[p].append(tr)

    summary: dict = {
        "scenario": scenario_to_dict(scenario),
        "replicates": config.replicates,
        "seeds": [scenario.seed + r for r in range(config.replicates)],
    }
    stats: dict[str, dict | None] = {}
    for p in policies:
        try:
            stats[p] = completion_stats(traces[p]).to_dict()
        except ValueError as exc:
            stats[p] = None
            errors.append(f"{p}: {exc}")
    summary["completion"] = stats
    summary["skipped_updates"] = {p: [t.skipped_updates for t in traces[p]] for p in policies}

    if config.report_nash and nash_profiles is not None:
        fractions = {}
        for p in policies:
            vals = []
            for tr in traces[p]:
                w = _full_set_window(tr)
                vals.append(None if w is None else time_fraction_near(tr, nash_profiles, config.delta, w))
            fractions[p] = vals
        summary["time_fraction_near"] = {"delta": config.delta, "window": "last 20% of full-set steps", **fractions}
        (out / "equilibria.json").write_text(report.to_json(indent=2, sort_keys=True) + "\n")

    summary["status"] = "partial" if errors else "complete"
    summary["errors"] = errors
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")

    columns = {p: [t.makespan if t.all_completed else float("nan") for t in traces[p]] for p in policies}
    print(_format_table(columns, stats), file=stream)
    for e in errors:
        print(f"error: {e}", file=stream)
    return 1 if errors else 0


def _cmd_run(args) -> int:
    cfg = ExperimentConfig(
        scenario_path=args.scenario,
        replicates=args.replicates,
        baseline=args.baseline,
        output_dir=args.out,
        report_nash=args.report_nash,
        delta=args.delta,
        seed=args.seed,
    )
    return run_experiment(cfg)


def _cmd_nash(args) -> int:
    scenario = parse_scenario(args.scenario, check_games=False)
    report = enumerate_pure_nash(scenario.game())
    text = report.to_json(indent=2, sort_keys=True) + "\n"
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "equilibria.json").write_text(text)
    d = report.to_dict()
    print(f"{d['n_profiles']} profiles, f_max={d['f_max']:.6g}")
    print(f"pure Nash ({len(d['pure_nash'])}): {d['pure_nash']}")
    print(f"efficient ({len(d['efficient'])}): {d['efficient']}")
    return 0


def _cmd_validate(args) -> int:
    scenario = parse_scenario(args.scenario, check_games=False)
    status = 0
    for ids, rep in _validate_reachable(scenario):
        if not rep.ok or args.verbose:
            print(f"threads {[i + 1 for i in ids]}: {rep.summary()}")
        if not rep.ok:
            status = 1
    print("scenario ok" if status == 0 else "scenario has invalid games")
    return status


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rlpin", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="simulate replicates and write traces and summaries")
    p.add_argument("scenario")
    p.add_argument("--replicates", type=int, default=1)
    p.add_argument("--baseline", choices=[b.value for b in BaselinePolicy])
    p.add_argument("--delta", type=float, default=0.1)
    p.add_argument("--report-nash", action="store_true", help="write equilibria.json and time-near-Nash metrics")
    p.add_argument("--out", default="out")
    p.add_argument("--seed", type=int, help="override the scenario seed")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("nash", help="enumerate pure Nash equilibria of the full-thread game")
    p.add_argument("scenario")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_nash)

    p = sub.add_parser("validate", help="check every reachable game for positive, normalized utilities")
    p.add_argument("scenario")
    p.add_argument("-v", "--verbose", action="store_true")
    p.set_defaults(func=_cmd_validate)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ScenarioError, FileNotFoundError, GameTooLargeError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
