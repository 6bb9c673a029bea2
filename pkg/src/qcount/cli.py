"""Command-line harness: single estimates, Monte Carlo validation, rotation
property sweeps and query-scaling studies.

Every trial draws from its own random stream derived from
``(master_seed, trial)``, so outputs are reproducible regardless of how many
workers run them.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import statistics
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Any, Iterable, Optional, Sequence

import numpy as np

from .accounting import theoretical_envelope
from .coin import MarkedSetProblem, stream
from .estimator import (
    AmplitudeProblem,
    EstimateResult,
    EstimatorConfig,
    approximate_count,
    estimate_amplitude,
)
from .rotation import (
    SHRINK,
    AngleInterval,
    check_lemma_preconditions,
    choose_r,
    r_bounds,
)

__all__ = [
    "CSV_FIELDS",
    "LEMMA_FIELDS",
    "SCALING_FIELDS",
    "RunSpec",
    "run_count",
    "run_amplitude",
    "run_lemma_check",
    "check_interval",
    "run_scaling_study",
    "fit_scaling",
    "read_rows",
    "write_rows",
    "load_config_file",
    "main",
]

CSV_FIELDS = (
    "trial", "n", "k_true", "epsilon", "delta", "seed", "backend", "k_hat",
    "theta_min", "theta_max", "t_step1", "iters_step2", "grover_apps",
    "oracle_queries", "coin_flips", "success", "conforming", "wall_ms",
)

LEMMA_FIELDS = (
    "row", "sweep", "check", "theta_min", "theta_max", "gamma", "r", "k",
    "theta", "value", "bound", "seed",
)

SCALING_FIELDS = (
    "cell", "n", "k", "epsilon", "delta", "trials", "seed",
    "median_queries", "q1_queries", "q3_queries",
    "median_step1", "median_step2",
)

# Columns that legitimately differ between otherwise identical runs.
VOLATILE_FIELDS = ("wall_ms",)

EXIT_OK, EXIT_USAGE, EXIT_VALIDATION = 0, 2, 3

LOW_BOUND, HIGH_BOUND = 0.47, 0.662


@dataclass
class RunSpec:
    command: str
    parameters: dict
    master_seed: int
    output_path: Optional[str] = None
    format: str = "csv"


# --------------------------------------------------------------------------
# trial execution


def _worker_count() -> int:
    env = os.environ.get("QCOUNT_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return os.cpu_count() or 1


def _pmap(fn, items: Sequence) -> list:
    """Map preserving input order, over a process pool when more than one worker is allowed."""
    workers = min(_worker_count(), len(items))
    if workers <= 1:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * workers))))


def _trial_seed(master_seed: int, trial: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(master_seed, spawn_key=(trial,))


def _result_row(
    result: EstimateResult,
    trial: int,
    n: Any,
    true_value: float,
    config: EstimatorConfig,
    seed: int,
    backend: str,
    wall_ms: float,
) -> dict:
    ledger = result.ledger
    return {
        "trial": trial,
        "n": n,
        "k_true": true_value,
        "epsilon": config.epsilon,
        "delta": config.delta,
        "seed": seed,
        "backend": backend,
        "k_hat": result.estimate,
        "theta_min": result.final_interval.theta_min,
        "theta_max": result.final_interval.theta_max,
        "t_step1": result.t_step1,
        "iters_step2": result.iterations_step2,
        "grover_apps": ledger.grover_applications,
        "oracle_queries": ledger.oracle_queries,
        "coin_flips": ledger.coin_flips,
        "success": result.succeeded(true_value, config.epsilon),
        "conforming": result.conforming,
        "wall_ms": round(wall_ms, 3),
    }


def _count_trial(args: tuple) -> dict:
    trial, n, k, config, seed, backend = args
    start = time.perf_counter()
    result = approximate_count(
        MarkedSetProblem.first_k(n, k), config, _trial_seed(seed, trial), backend
    )
    wall = (time.perf_counter() - start) * 1000
    return _result_row(result, trial, n, k, config, seed, backend, wall)


def _amplitude_trial(args: tuple) -> dict:
    trial, a, config, seed, backend = args
    start = time.perf_counter()
    result = estimate_amplitude(AmplitudeProblem(a), config, _trial_seed(seed, trial), backend)
    wall = (time.perf_counter() - start) * 1000
    return _result_row(result, trial, "", a, config, seed, backend, wall)


def run_count(
    n: int,
    k: int,
    epsilon: float = 0.1,
    delta: float = 0.05,
    seed: int = 0,
    backend: str = "analytic",
    trials: int = 1,
    config: Optional[EstimatorConfig] = None,
) -> list[dict]:
    """Run ``trials`` independent counting estimates; one row per trial."""
    if config is None:
        config = EstimatorConfig(epsilon=epsilon, delta=delta)
    if not 0 <= k <= n:
        raise ValueError(f"need 0 <= k <= n, got k={k}, n={n}")
    if backend == "statevector" and n > config.dense_cap:
        raise ValueError(f"statevector backend needs n <= {config.dense_cap}, got {n}")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    jobs = [(t, n, k, config, seed, backend) for t in range(trials)]
    return _pmap(_count_trial, jobs)


def run_amplitude(
    a: float,
    epsilon: float = 0.1,
    delta: float = 0.05,
    seed: int = 0,
    backend: str = "analytic",
    trials: int = 1,
    config: Optional[EstimatorConfig] = None,
) -> list[dict]:
    if config is None:
        config = EstimatorConfig(epsilon=epsilon, delta=delta)
    AmplitudeProblem(a)
    if trials < 1:
        raise ValueError("trials must be >= 1")
    jobs = [(t, a, config, seed, backend) for t in range(trials)]
    return _pmap(_amplitude_trial, jobs)


# --------------------------------------------------------------------------
# rotation property sweep


def check_interval(
    interval: AngleInterval,
    rng: np.random.Generator,
    extra_points: int = 4,
    low_bound: float = LOW_BOUND,
    high_bound: float = HIGH_BOUND,
) -> list[dict]:
    """Check one interval against the rotation guarantees.

    Raises ``ValueError`` when the interval itself is out of range; that is a
    bad input, not a violation. Returns one dict per violated check.
    """
    check_lemma_preconditions(interval)
    choice = choose_r(interval)
    r, k = choice.r, choice.k
    lo_t, hi_t = interval.theta_min, interval.theta_max
    gamma = interval.gamma
    base = {"theta_min": lo_t, "theta_max": hi_t, "gamma": gamma, "r": r, "k": k}
    found: list[dict] = []

    def violation(check: str, theta: float, value: float, bound: float) -> None:
        found.append({**base, "check": check, "theta": theta, "value": value, "bound": bound})

    if r % 2 != 1:
        violation("r_odd", lo_t, r, 1)
    if abs(r * lo_t - 2 * math.pi * k) > lo_t:
        violation("r_theta_min_near_2pi_k", lo_t, abs(r * lo_t - 2 * math.pi * k), lo_t)

    for theta in (lo_t, interval.midpoint, hi_t):
        lower, upper = r_bounds(interval, theta)
        if r < lower:
            violation("r_lower_bound", theta, r, lower)
        if r > upper:
            violation("r_upper_bound", theta, r, upper)

    factor = 1.0 + SHRINK * gamma
    tails_range = (lo_t, hi_t / factor)
    heads_range = (factor * lo_t, hi_t)
    for (a, b), check in ((tails_range, "tails_side"), (heads_range, "heads_side")):
        points = [a, b, 0.5 * (a + b), *rng.uniform(a, b, extra_points)]
        for theta in points:
            p = math.sin(r * theta) ** 2
            if check == "tails_side" and p > low_bound:
                violation(check, theta, p, low_bound)
            if check == "heads_side" and p < high_bound:
                violation(check, theta, p, high_bound)
    return found


def random_valid_interval(rng: np.random.Generator) -> AngleInterval:
    """``gamma`` uniform on (0.01, 0.2], ``theta_max`` uniform on (0, pi/1000]."""
    gamma = 0.2 - rng.uniform(0.0, 0.19)
    theta_max = (math.pi / 1000) * (1.0 - rng.uniform())
    return AngleInterval(theta_max / (1.0 + gamma), theta_max)


def run_lemma_check(
    sweeps: int,
    seed: int = 0,
    low_bound: float = LOW_BOUND,
    high_bound: float = HIGH_BOUND,
) -> tuple[dict, list[dict]]:
    """Sweep random valid intervals; return a summary and the violation rows."""
    if sweeps < 1:
        raise ValueError("sweeps must be >= 1")
    rng = stream(seed, 0)
    rows: list[dict] = []
    by_check: dict[str, int] = {}
    for sweep in range(sweeps):
        interval = random_valid_interval(rng)
        for v in check_interval(interval, rng, low_bound=low_bound, high_bound=high_bound):
            by_check[v["check"]] = by_check.get(v["check"], 0) + 1
            rows.append({"row": "violation", "sweep": sweep, "seed": seed, **v})
    summary = {
        "row": "summary",
        "sweeps": sweeps,
        "seed": seed,
        "violations": len(rows),
        "violating_sweeps": len({r["sweep"] for r in rows}),
        "by_check": by_check,
        "low_bound": low_bound,
        "high_bound": high_bound,
    }
    return summary, rows


# --------------------------------------------------------------------------
# scaling study


def _scaling_cell(args: tuple) -> tuple[int, int, int]:
    n, k, config, seed, trial = args
    result = approximate_count(MarkedSetProblem.first_k(n, k), config, _trial_seed(seed, trial))
    led = result.ledger
    return led.oracle_queries, led.step1_queries, led.step2_queries


def _slope(xs: Sequence[float], ys: Sequence[float]) -> float:
    return float(np.polyfit(np.log(xs), np.log(ys), 1)[0])


def _axis_slope(cells: list[dict], key, fixed) -> Optional[float]:
    """Slope along ``key`` for the largest group of cells sharing ``fixed``."""
    groups: dict[tuple, list[dict]] = {}
    for c in cells:
        groups.setdefault(fixed(c), []).append(c)
    best = max(groups.values(), key=lambda g: len({key(c) for c in g}), default=[])
    if len({key(c) for c in best}) < 2:
        return None
    return _slope([key(c) for c in best], [c["median_queries"] for c in best])


def fit_scaling(cells: list[dict], trial_queries: dict[int, list[int]]) -> Optional[dict]:
    """Fit log-log slopes along the ``1/eps`` and ``sqrt(N/K)`` axes and the envelope constant."""
    if len(cells) < 2:
        return None
    slope_eps = _axis_slope(
        cells, key=lambda c: 1.0 / c["epsilon"], fixed=lambda c: (c["n"], c["k"], c["delta"])
    )
    slope_sqrt = _axis_slope(
        cells,
        key=lambda c: math.sqrt(c["n"] / c["k"]),
        fixed=lambda c: (c["epsilon"], c["delta"]),
    )
    c_fit = max(
        q / theoretical_envelope(c["n"], c["k"], c["epsilon"], c["delta"], 1.0)
        for c in cells
        for q in trial_queries[c["cell"]]
    )
    return {"slope_inv_eps": slope_eps, "slope_sqrt_n_over_k": slope_sqrt, "envelope_c": c_fit}


def run_scaling_study(
    grid: Iterable[tuple[int, int, float, float]],
    trials_per_cell: int,
    seed: int = 0,
    config: Optional[EstimatorConfig] = None,
) -> tuple[list[dict], Optional[dict]]:
    """Median/quartile oracle queries per ``(n, k, eps, delta)`` cell, plus a fit.

    Step 1 uses the same per-trial stream in every cell, so step-1 cost is
    shared across the epsilon axis.
    """
    grid = list(grid)
    if not grid:
        raise ValueError("grid must be nonempty")
    if trials_per_cell < 1:
        raise ValueError("trials_per_cell must be >= 1")
    base = config or EstimatorConfig()
    cells: list[dict] = []
    trial_queries: dict[int, list[int]] = {}
    for idx, (n, k, eps, delta) in enumerate(grid):
        if k < 1:
            raise ValueError("scaling cells need k >= 1")
        cfg = _with_accuracy(base, eps, delta)
        out = _pmap(_scaling_cell, [(n, k, cfg, seed, t) for t in range(trials_per_cell)])
        total = [o[0] for o in out]
        q1, med, q3 = (float(v) for v in np.percentile(total, [25, 50, 75]))
        cells.append({
            "cell": idx, "n": n, "k": k, "epsilon": eps, "delta": delta,
            "trials": trials_per_cell, "seed": seed,
            "median_queries": med, "q1_queries": q1, "q3_queries": q3,
            "median_step1": float(statistics.median(o[1] for o in out)),
            "median_step2": float(statistics.median(o[2] for o in out)),
        })
        trial_queries[idx] = total
    return cells, fit_scaling(cells, trial_queries)


def _with_accuracy(config: EstimatorConfig, epsilon: float, delta: float) -> EstimatorConfig:
    return replace(config, epsilon=epsilon, delta=delta)


# --------------------------------------------------------------------------
# serialisation


def _fmt(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, dict):
        return json.dumps(value, sort_keys=True)
    return str(value)


def write_rows(rows: list[dict], fieldnames: Sequence[str], out, fmt: str = "csv") -> None:
    if fmt == "csv":
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(fieldnames)
        for row in rows:
            writer.writerow([_fmt(row.get(f, "")) for f in fieldnames])
    elif fmt == "jsonl":
        for row in rows:
            out.write(json.dumps({f: row.get(f) for f in fieldnames}) + "\n")
    else:
        raise ValueError(f"unknown format {fmt!r}")


def _parse_cell(text: str) -> Any:
    if text == "":
        return ""
    if text in ("true", "false"):
        return text == "true"
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def read_rows(text: str, fmt: str = "csv") -> list[dict]:
    """Parse rows written by :func:`write_rows` back into typed dicts."""
    if fmt == "jsonl":
        return [json.loads(line) for line in text.splitlines() if line.strip()]
    reader = csv.DictReader(io.StringIO(text))
    return [{k: _parse_cell(v) for k, v in row.items()} for row in reader]


# --------------------------------------------------------------------------
# argument parsing


def load_config_file(path: str) -> dict[str, str]:
    """Read ``key = value`` lines; ``#`` starts a comment. Keys mirror flag names."""
    values: dict[str, str] = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key = value")
            key, value = (part.strip() for part in line.split("=", 1))
            values[key.lstrip("-").replace("-", "_")] = value
    return values


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _float_list(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _int_list(text: str) -> list[int]:
    return [int(float(x)) for x in text.split(",") if x.strip()]


def _add_common(p: argparse.ArgumentParser, trials: bool = True) -> None:
    p.add_argument("--eps", type=float, default=0.1, help="relative error target")
    p.add_argument("--delta", type=float, default=0.05, help="failure probability budget")
    p.add_argument("--seed", type=int, default=0, help="master seed")
    p.add_argument("--backend", choices=("analytic", "statevector"), default="analytic")
    if trials:
        p.add_argument("--trials", type=_positive_int, default=1)
    p.add_argument(
        "--fast-constants",
        action="store_true",
        help="scale sample counts down 100x (marks rows non-conforming)",
    )
    p.add_argument("--dense-cap", type=int, default=4096)
    _add_output(p)


def _add_output(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key = value file of flag defaults")
    p.add_argument("--output", "-o", help="output file (default: stdout)")
    p.add_argument("--format", choices=("csv", "jsonl"), default="csv")


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    parser = argparse.ArgumentParser(
        prog="qcount",
        description="Grover-only approximate counting and amplitude estimation harness.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    subs: dict[str, argparse.ArgumentParser] = {}

    p = sub.add_parser("count", help="estimate the number of marked items")
    p.add_argument("--n", type=int, default=2**20, help="number of items")
    p.add_argument("--k", type=int, default=1024, help="true number of marked items")
    _add_common(p)
    subs["count"] = p

    p = sub.add_parser("amplitude", help="estimate an amplitude a in (0, 1)")
    p.add_argument("--a", type=float, default=0.5)
    _add_common(p)
    subs["amplitude"] = p

    p = sub.add_parser("validate", help="Monte Carlo check of the failure rate against delta")
    p.add_argument("--mode", choices=("count", "amplitude"), default="count")
    p.add_argument("--n", type=int, default=2**20)
    p.add_argument("--k", type=int, default=1024)
    p.add_argument("--a", type=float, default=0.5)
    _add_common(p)
    p.set_defaults(trials=200)
    subs["validate"] = p

    p = sub.add_parser("lemma-check", help="random sweep of the rotation-count guarantees")
    p.add_argument("--sweeps", type=_positive_int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--low-bound", type=float, default=LOW_BOUND)
    p.add_argument("--high-bound", type=float, default=HIGH_BOUND)
    _add_output(p)
    subs["lemma-check"] = p

    p = sub.add_parser("scaling-study", help="median query counts over an (eps, k) grid")
    p.add_argument("--n", type=int, default=2**20)
    p.add_argument("--k-grid", type=_int_list, default=[1024], help="comma-separated K values")
    p.add_argument("--eps-grid", type=_float_list, default=[0.1], help="comma-separated eps values")
    p.add_argument("--delta", type=float, default=0.05)
    p.add_argument("--trials-per-cell", type=_positive_int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--fast-constants", action="store_true")
    p.add_argument(
        "--axes",
        action="store_true",
        help="run the k axis at the first eps and the eps axis at the first k "
        "instead of the full cross product",
    )
    _add_output(p)
    subs["scaling-study"] = p
    return parser, subs


_BOOL_FLAGS = {"fast_constants", "axes"}


def _parse(argv: Optional[Sequence[str]]) -> argparse.Namespace:
    parser, subs = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        try:
            values = load_config_file(args.config)
        except (OSError, ValueError) as exc:
            parser.error(str(exc))
        sub = subs[args.command]
        known = {a.dest for a in sub._actions}
        unknown = sorted(set(values) - known)
        if unknown:
            sub.error(f"unknown config keys: {', '.join(unknown)}")
        converted: dict[str, Any] = {}
        for key, value in values.items():
            if key in _BOOL_FLAGS:
                converted[key] = value.lower() in ("1", "true", "yes", "on")
            else:
                converted[key] = value
        sub.set_defaults(**converted)
        args = parser.parse_args(argv)
    args._parser = subs[args.command]
    return args


def _config_from_args(args: argparse.Namespace) -> EstimatorConfig:
    config = EstimatorConfig(epsilon=args.eps, delta=args.delta, dense_cap=args.dense_cap)
    return config.fast() if args.fast_constants else config


def _open_output(path: Optional[str]):
    if path:
        return open(path, "w", newline="")
    return sys.stdout


def _emit(rows: list[dict], fields: Sequence[str], args: argparse.Namespace) -> None:
    out = _open_output(args.output)
    try:
        write_rows(rows, fields, out, args.format)
    finally:
        if out is not sys.stdout:
            out.close()


def _check_accuracy(args: argparse.Namespace) -> None:
    p = args._parser
    if not args.eps > 0:
        p.error(f"--eps must be > 0, got {args.eps}")
    if not 0 < args.delta < 1:
        p.error(f"--delta must lie in (0, 1), got {args.delta}")


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _parse(argv)
    p = args._parser

    try:
        if args.command in ("count", "amplitude", "validate"):
            _check_accuracy(args)
            config = _config_from_args(args)
            mode = args.mode if args.command == "validate" else args.command
            if mode == "count":
                if args.n < 1 or not 0 <= args.k <= args.n:
                    p.error(f"need n >= 1 and 0 <= k <= n, got n={args.n}, k={args.k}")
                rows = run_count(
                    args.n, args.k, seed=args.seed, backend=args.backend,
                    trials=args.trials, config=config,
                )
            else:
                if not 0 < args.a < 1:
                    p.error(f"--a must lie in (0, 1), got {args.a}")
                rows = run_amplitude(
                    args.a, seed=args.seed, backend=args.backend,
                    trials=args.trials, config=config,
                )
            _emit(rows, CSV_FIELDS, args)
            if args.command == "validate":
                failures = sum(not r["success"] for r in rows)
                rate = failures / len(rows)
                verdict = "PASS" if rate <= args.delta else "FAIL"
                print(
                    f"{verdict}: {failures}/{len(rows)} failures "
                    f"(rate {rate:.4f}, delta {args.delta})",
                    file=sys.stderr,
                )
                if rate > args.delta:
                    return EXIT_VALIDATION
            return EXIT_OK

        if args.command == "lemma-check":
            summary, rows = run_lemma_check(args.sweeps, args.seed, args.low_bound, args.high_bound)
            _emit([summary] + rows, LEMMA_FIELDS + ("violations", "by_check"), args)
            print(json.dumps(summary, sort_keys=True), file=sys.stderr)
            return EXIT_OK

        if args.command == "scaling-study":
            if not 0 < args.delta < 1 or any(e <= 0 for e in args.eps_grid):
                p.error("need eps > 0 and 0 < delta < 1")
            config = EstimatorConfig().fast() if args.fast_constants else EstimatorConfig()
            if args.axes:
                k0, e0 = args.k_grid[0], args.eps_grid[0]
                pairs = [(k, e0) for k in args.k_grid] + [(k0, e) for e in args.eps_grid[1:]]
            else:
                pairs = [(k, e) for k in args.k_grid for e in args.eps_grid]
            grid = [(args.n, k, e, args.delta) for k, e in pairs]
            cells, fit = run_scaling_study(grid, args.trials_per_cell, args.seed, config)
            _emit(cells, SCALING_FIELDS, args)
            if fit is not None:
                print(json.dumps(fit, sort_keys=True), file=sys.stderr)
            return EXIT_OK
    except (ValueError, OverflowError) as exc:
        print(f"qcount {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
