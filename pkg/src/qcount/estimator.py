"""Approximate counting and amplitude estimation from Grover coin flips alone.

The procedure has two stages.

1. Rough bracketing: for ``t = 0, 1, 2, ...`` flip the coin with ``r`` the
   largest odd integer below ``(12/11)^t`` until at least a third of the flips
   come up heads. The exit ``t`` pins ``theta`` within a factor ``(12/11)^2``.
2. Refinement: repeatedly pick ``r`` with :func:`qcount.rotation.choose_r`,
   take a majority vote and shrink the bracket ratio by 0.9 until
   ``theta_max <= (1 + eps/5) theta_min``.

The estimate is read off ``theta_max``. A classical sampling baseline is
included for comparison.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from fractions import Fraction
from typing import NamedTuple, Optional

from .accounting import IterationRecord, QueryLedger
from .coin import (
    DEFAULT_DENSE_CAP,
    CoinBackend,
    GroverAngle,
    MarkedSetProblem,
    SeedLike,
    flip_batch,
    grover_angle,
    stream,
)
from .rotation import R_MAX, AngleInterval, decision_round

__all__ = [
    "EstimatorConfig",
    "AmplitudeProblem",
    "EstimateResult",
    "Step1Outcome",
    "CLASSICAL_SAMPLE_CONSTANT",
    "pad_problem",
    "step1_sample_count",
    "step2_sample_count",
    "step1_rotation",
    "step1_cap",
    "step1_rough_bounds",
    "step2_refine",
    "approximate_count",
    "estimate_amplitude",
    "classical_baseline_count",
]

# Rescales both sample multipliers under --fast-constants.
FAST_SAMPLE_SCALE = 0.01


@dataclass(frozen=True)
class EstimatorConfig:
    """Accuracy targets plus every constant of the procedure.

    The defaults are the published constants. Changing any of them (other
    than ``epsilon``, ``delta`` and ``dense_cap``) makes the run
    non-conforming.
    """

    epsilon: float = 0.1
    delta: float = 0.05
    step1_sample_multiplier: float = 1e5
    step1_log_arg: float = 120.0
    step2_sample_multiplier: float = 1000.0
    step2_log_base_arg: float = 100.0
    growth_ratio: float = 12 / 11
    init_coeff: float = 5 / 8
    shrink: float = 0.9
    step1_threshold: Fraction = Fraction(1, 3)
    padding_factor: int = 10**6
    dense_cap: int = DEFAULT_DENSE_CAP

    def __post_init__(self) -> None:
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")
        if not 0 < self.delta < 1:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")
        if self.growth_ratio <= 1 or not 0 < self.shrink < 1:
            raise ValueError("need growth_ratio > 1 and 0 < shrink < 1")
        if self.step1_sample_multiplier <= 0 or self.step2_sample_multiplier <= 0:
            raise ValueError("sample multipliers must be positive")
        if self.padding_factor < 1:
            raise ValueError("padding_factor must be >= 1")
        object.__setattr__(self, "step1_threshold", Fraction(self.step1_threshold))

    @property
    def conforming(self) -> bool:
        defaults = EstimatorConfig()
        free = {"epsilon", "delta", "dense_cap"}
        return all(
            getattr(self, f.name) == getattr(defaults, f.name)
            for f in fields(self)
            if f.name not in free
        )

    def fast(self, scale: float = FAST_SAMPLE_SCALE) -> "EstimatorConfig":
        """Copy with both sample multipliers scaled by ``scale`` (for smoke tests)."""
        return replace(
            self,
            step1_sample_multiplier=self.step1_sample_multiplier * scale,
            step2_sample_multiplier=self.step2_sample_multiplier * scale,
        )


@dataclass(frozen=True)
class AmplitudeProblem:
    """Amplitude ``a`` of the good component prepared by the unitary ``U``."""

    a: float

    def __post_init__(self) -> None:
        if not 0.0 < self.a < 1.0:
            raise ValueError(f"amplitude must lie in (0, 1), got {self.a}")

    @property
    def angle(self) -> GroverAngle:
        # The extra ancilla rotation scales the good amplitude by 1/1000.
        return GroverAngle(math.asin(self.a / 1000.0))


@dataclass
class EstimateResult:
    """Outcome of one estimator run.

    ``estimate`` is the count estimate for counting runs and the amplitude
    estimate for amplitude runs. ``n_items`` is the padded universe size
    (zero for amplitude runs).
    """

    estimate: float
    final_interval: AngleInterval
    t_step1: int
    iterations_step2: int
    ledger: QueryLedger
    trace: list[IterationRecord] = field(default_factory=list)
    conforming: bool = True
    zero_detected: bool = False
    n_items: int = 0
    kind: str = "count"

    @property
    def k_hat(self) -> float:
        return self.estimate

    @property
    def estimate_rounded(self) -> int:
        return int(round(self.estimate))

    def succeeded(self, true_value: float, epsilon: float) -> bool:
        """True when the estimate lies strictly within a factor ``1 +/- epsilon``."""
        if true_value == 0:
            return self.estimate == 0
        return (1 - epsilon) * true_value < self.estimate < (1 + epsilon) * true_value


class Step1Outcome(NamedTuple):
    interval: AngleInterval
    t: int
    zero_candidate: bool


def pad_problem(problem: MarkedSetProblem, factor: int) -> MarkedSetProblem:
    """Enlarge the universe ``factor``-fold with unmarked items (virtually)."""
    if factor < 1:
        raise ValueError(f"padding factor must be >= 1, got {factor}")
    n_padded = problem.n_items * factor
    if n_padded > R_MAX:
        raise OverflowError(f"padded size {n_padded} exceeds the 63-bit range")
    if factor == 1:
        return problem
    return MarkedSetProblem(n_padded, problem.marked)


def step1_sample_count(config: EstimatorConfig) -> int:
    return math.ceil(config.step1_sample_multiplier * math.log(config.step1_log_arg / config.delta))


def step2_sample_count(config: EstimatorConfig, t: int) -> int:
    log_arg = math.log(config.step2_log_base_arg / (config.delta * config.epsilon))
    log_arg += t * math.log(config.shrink)
    return max(1, math.ceil(config.step2_sample_multiplier * log_arg))


def step1_rotation(t: int, growth_ratio: float = 12 / 11) -> int:
    """Largest odd integer not exceeding ``growth_ratio ** t``."""
    top = math.floor(growth_ratio**t)
    if top > R_MAX:
        raise OverflowError(f"step-1 rotation count at t={t} exceeds the 63-bit range")
    return top if top % 2 else top - 1


def step1_cap(n_items: int, config: EstimatorConfig) -> int:
    """Last step-1 iteration tried before declaring a zero candidate."""
    smallest = grover_angle(1, n_items).theta
    return math.ceil(math.log(config.init_coeff / smallest) / math.log(config.growth_ratio)) + 1


def _initial_interval(t: int, config: EstimatorConfig) -> AngleInterval:
    down = 1.0 / config.growth_ratio
    return AngleInterval(
        config.init_coeff * down ** (t + 1), config.init_coeff * down ** (t - 1)
    )


def step1_rough_bounds(
    backend: CoinBackend,
    config: EstimatorConfig,
    ledger: Optional[QueryLedger] = None,
    trace: Optional[list] = None,
    t_cap: Optional[int] = None,
) -> Step1Outcome:
    """Exponential search for a constant-factor bracket around ``theta``.

    Without ``t_cap`` the loop runs until heads appear or ``r`` leaves the
    63-bit range (which raises ``OverflowError``).
    """
    m = step1_sample_count(config)
    num, den = config.step1_threshold.numerator, config.step1_threshold.denominator
    t = 0
    while t_cap is None or t <= t_cap:
        r = step1_rotation(t, config.growth_ratio)
        heads = flip_batch(backend, r, m, ledger, "step1")
        if trace is not None:
            trace.append(IterationRecord("step1", t, r, m, heads))
        if heads * den >= m * num:
            return Step1Outcome(_initial_interval(t, config), t, False)
        t += 1
    return Step1Outcome(_initial_interval(t_cap, config), t_cap, True)


def step2_refine(
    backend: CoinBackend,
    interval: AngleInterval,
    config: EstimatorConfig,
    ledger: Optional[QueryLedger] = None,
    trace: Optional[list] = None,
    zero_threshold: Optional[float] = None,
) -> tuple[AngleInterval, int, bool]:
    """Shrink the bracket until its ratio is at most ``1 + eps/5``.

    Returns ``(interval, iterations, zero_detected)``. With ``zero_threshold``
    set, the loop stops as soon as ``theta_max`` falls to or below it, which
    can only happen (barring failure) when nothing is marked.
    """
    target = 1.0 + config.epsilon / 5.0
    t = 0
    while True:
        if zero_threshold is not None and interval.theta_max <= zero_threshold:
            return interval, t, True
        m = step2_sample_count(config, t)
        interval, choice, heads = decision_round(interval, backend, m, ledger, "step2")
        if trace is not None:
            trace.append(
                IterationRecord(
                    "step2", t, choice.r, m, heads, interval.theta_min, interval.theta_max
                )
            )
        t += 1
        if interval.theta_max <= target * interval.theta_min:
            return interval, t, False


def approximate_count(
    problem: MarkedSetProblem,
    config: EstimatorConfig = EstimatorConfig(),
    seed: SeedLike = 0,
    backend: str = "analytic",
) -> EstimateResult:
    """Estimate ``K = |marked|`` to relative error ``epsilon`` w.p. ``>= 1 - delta``.

    Step 1 draws from sub-stream 0 of ``seed`` and step 2 from sub-stream 1,
    so step 1 behaves identically for every ``epsilon``.
    """
    padded = pad_problem(problem, config.padding_factor)
    n = padded.n_items
    coin = CoinBackend(backend, padded, stream(seed, 0), config.dense_cap)
    ledger = QueryLedger()
    trace: list[IterationRecord] = []
    zero_threshold = grover_angle(1, n).theta

    rough = step1_rough_bounds(coin, config, ledger, trace, t_cap=step1_cap(n, config))
    coin.rng = stream(seed, 1)
    interval, iters, zero = step2_refine(
        coin, rough.interval, config, ledger, trace, zero_threshold=zero_threshold
    )
    estimate = 0.0 if zero else n * math.sin(interval.theta_max) ** 2
    return EstimateResult(
        estimate=estimate,
        final_interval=interval,
        t_step1=rough.t,
        iterations_step2=iters,
        ledger=ledger,
        trace=trace,
        conforming=config.conforming,
        zero_detected=zero,
        n_items=n,
        kind="count",
    )


def estimate_amplitude(
    problem: AmplitudeProblem,
    config: EstimatorConfig = EstimatorConfig(),
    seed: SeedLike = 0,
    backend: str = "analytic",
) -> EstimateResult:
    """Estimate ``a`` to relative error ``epsilon`` w.p. ``>= 1 - delta``.

    Each Grover step applies ``U`` once and ``U^dagger`` once, so the ledger
    reports two unitary applications per step.
    """
    coin = CoinBackend(backend, problem.angle, stream(seed, 0), config.dense_cap)
    ledger = QueryLedger(oracle_per_grover=2)
    trace: list[IterationRecord] = []

    rough = step1_rough_bounds(coin, config, ledger, trace)
    coin.rng = stream(seed, 1)
    interval, iters, _ = step2_refine(coin, rough.interval, config, ledger, trace)
    return EstimateResult(
        estimate=1000.0 * math.sin(interval.theta_max),
        final_interval=interval,
        t_step1=rough.t,
        iterations_step2=iters,
        ledger=ledger,
        trace=trace,
        conforming=config.conforming,
        n_items=0,
        kind="amplitude",
    )


# Multiplier on (N / K_rough) * ln(1/delta) / eps^2 for the classical second
# phase; large enough to absorb an unlucky early stop of the doubling search.
CLASSICAL_SAMPLE_CONSTANT = 64.0


def classical_baseline_count(
    problem: MarkedSetProblem,
    epsilon: float,
    delta: float,
    seed: SeedLike = 0,
    c: float = CLASSICAL_SAMPLE_CONSTANT,
) -> EstimateResult:
    """Classical two-phase estimate of ``K`` from uniform random index queries.

    Doubling search: query ``2^t`` random items for ``t = 0, 1, ...`` until one
    is marked. Then query ``ceil(c * 2^t * ln(1/delta) / eps^2)`` more and
    scale the hit fraction by ``N``. One query per draw.
    """
    if not epsilon > 0 or not 0 < delta < 1:
        raise ValueError("need epsilon > 0 and 0 < delta < 1")
    n, k = problem.n_items, problem.k
    p = k / n
    rough_rng, fine_rng = stream(seed, 0), stream(seed, 1)
    ledger = QueryLedger()
    t_cap = math.ceil(math.log2(n * math.log(1.0 / delta))) + 1

    t = 0
    while True:
        batch = 2**t
        ledger.oracle_queries += batch
        ledger.coin_flips += batch
        if rough_rng.binomial(batch, p) > 0:
            break
        if t >= t_cap:
            theta = AngleInterval(0.0, 0.0)
            return EstimateResult(0.0, theta, t, 0, ledger, zero_detected=True, n_items=n)
        t += 1

    m = math.ceil(c * 2**t * math.log(1.0 / delta) / epsilon**2)
    hits = int(fine_rng.binomial(m, p))
    ledger.oracle_queries += m
    ledger.coin_flips += m
    estimate = n * hits / m
    theta = grover_angle(min(hits, m), m).theta
    return EstimateResult(
        estimate=estimate,
        final_interval=AngleInterval(theta, theta),
        t_step1=t,
        iterations_step2=1,
        ledger=ledger,
        n_items=n,
        kind="classical",
    )
