"""Exit criteria, run at the published constants.

Each test records one PASS/FAIL line, printed in the terminal summary.
"""

import math
from dataclasses import replace

import numpy as np
import pytest

from conftest import ENVELOPE_C, N_DESK, record_criterion
from qcount.accounting import theoretical_envelope
from qcount.cli import random_valid_interval, run_scaling_study
from qcount.coin import MarkedSetProblem, statevector_grover_state, statevector_heads_prob, stream
from qcount.estimator import (
    AmplitudeProblem,
    EstimatorConfig,
    approximate_count,
    estimate_amplitude,
)
from qcount.rotation import choose_r, r_bounds

DELTA = 0.05
TRIALS = 200


@pytest.mark.parametrize("k", [64, 1024, 4096])
@pytest.mark.parametrize("eps", [0.1, 0.2])
def test_counting_success_rate(k, eps):
    config = EstimatorConfig(epsilon=eps, delta=DELTA)
    assert config.conforming
    problem = MarkedSetProblem.first_k(N_DESK, k)
    ok = sum(approximate_count(problem, config, seed).succeeded(k, eps) for seed in range(TRIALS))
    rate = ok / TRIALS
    passed = rate >= 1 - DELTA
    record_criterion(
        f"counting N=2^20 K={k} eps={eps}", passed, f"success {ok}/{TRIALS} (need >= {1 - DELTA})"
    )
    assert passed


@pytest.mark.parametrize("a", [0.001, 0.1, 0.5, 0.9])
@pytest.mark.parametrize("eps", [0.1, 0.2])
def test_amplitude_success_rate(a, eps):
    config = EstimatorConfig(epsilon=eps, delta=DELTA)
    ok = sum(
        estimate_amplitude(AmplitudeProblem(a), config, seed).succeeded(a, eps)
        for seed in range(TRIALS)
    )
    passed = ok / TRIALS >= 1 - DELTA
    record_criterion(f"amplitude a={a} eps={eps}", passed, f"success {ok}/{TRIALS}")
    assert passed


def _lemma_sweep(n=10_000, seed=2024, points=6):
    rng = stream(seed, 0)
    counts = {"a_odd": 0, "b_bounds": 0, "b_bounds_theta_min": 0, "c_tails": 0, "d_heads": 0}
    worst_tails, worst_heads = 0.0, 1.0
    for _ in range(n):
        interval = random_valid_interval(rng)
        r = choose_r(interval).r
        gamma = interval.gamma
        counts["a_odd"] += r % 2 != 1
        for theta in (interval.theta_min, interval.midpoint, interval.theta_max):
            lower, upper = r_bounds(interval, theta)
            if not lower <= r <= upper:
                counts["b_bounds"] += 1
                counts["b_bounds_theta_min"] += theta == interval.theta_min
        f = 1 + 0.9 * gamma
        for lo, hi, key in (
            (interval.theta_min, interval.theta_max / f, "c_tails"),
            (f * interval.theta_min, interval.theta_max, "d_heads"),
        ):
            for theta in np.concatenate([[lo, hi], rng.uniform(lo, hi, points)]):
                p = math.sin(r * theta) ** 2
                if key == "c_tails":
                    worst_tails = max(worst_tails, p)
                    counts[key] += p > 0.47
                else:
                    worst_heads = min(worst_heads, p)
                    counts[key] += p < 0.662
    return counts, worst_tails, worst_heads


@pytest.fixture(scope="module")
def lemma_sweep():
    return _lemma_sweep()


def test_lemma_r_odd(lemma_sweep):
    counts, _, _ = lemma_sweep
    record_criterion("rotation (a) r odd", counts["a_odd"] == 0, f"{counts['a_odd']} violations / 10^4")
    assert counts["a_odd"] == 0


def test_lemma_r_bounds(lemma_sweep):
    counts, _, _ = lemma_sweep
    passed = counts["b_bounds"] == 0
    record_criterion(
        "rotation (b) r bounds at theta_min, midpoint, theta_max",
        passed,
        f"{counts['b_bounds']} violations ({counts['b_bounds_theta_min']} at theta_min)",
    )
    assert passed


def test_lemma_tails_side(lemma_sweep):
    counts, worst, _ = lemma_sweep
    passed = counts["c_tails"] == 0
    record_criterion("rotation (c) sin^2 <= 0.47", passed, f"{counts['c_tails']} violations, max {worst:.4f}")
    assert passed


def test_lemma_heads_side(lemma_sweep):
    counts, _, worst = lemma_sweep
    passed = counts["d_heads"] == 0
    record_criterion("rotation (d) sin^2 >= 0.662", passed, f"{counts['d_heads']} violations, min {worst:.4f}")
    assert passed


def test_oracle_equivalence():
    worst_prob = worst_amp = 0.0
    for n in (4, 8, 16, 64, 256):
        for k in range(1, n):
            problem = MarkedSetProblem.first_k(n, k)
            theta = math.asin(math.sqrt(k / n))
            marked = np.arange(n) < k
            for r in range(1, 100, 2):
                state = statevector_grover_state(problem, (r - 1) // 2)
                expected = np.where(
                    marked, math.sin(r * theta) / math.sqrt(k), math.cos(r * theta) / math.sqrt(n - k)
                )
                worst_amp = max(worst_amp, float(np.max(np.abs(state - expected))))
                p = statevector_heads_prob(problem, r)
                worst_prob = max(worst_prob, abs(p - math.sin(r * theta) ** 2))
    passed = worst_prob <= 1e-9 and worst_amp <= 1e-9
    record_criterion(
        "oracle equivalence", passed, f"max |dp| = {worst_prob:.2e}, max |d amp| = {worst_amp:.2e}"
    )
    assert passed


@pytest.fixture(scope="module")
def scaling():
    eps_axis = [(N_DESK, 1024, e, DELTA) for e in (0.2, 0.1, 0.05, 0.025)]
    k_axis = [(N_DESK, k, 0.1, DELTA) for k in (64, 256, 1024, 4096)]
    eps_cells, eps_fit = run_scaling_study(eps_axis, 20, seed=0)
    k_cells, k_fit = run_scaling_study(k_axis, 20, seed=0)
    return eps_cells, eps_fit, k_cells, k_fit


def test_query_scaling_inverse_eps(scaling):
    eps_cells, eps_fit, _, _ = scaling
    slope = eps_fit["slope_inv_eps"]
    step2 = np.polyfit(
        np.log([1 / c["epsilon"] for c in eps_cells]),
        np.log([c["median_step2"] for c in eps_cells]),
        1,
    )[0]
    passed = abs(slope - 1.0) <= 0.15
    record_criterion(
        "query slope vs 1/eps", passed, f"total {slope:.3f} (need 1.0 +/- 0.15); step-2 only {step2:.3f}"
    )
    assert passed


def test_query_scaling_sqrt_n_over_k(scaling):
    _, _, _, k_fit = scaling
    slope = k_fit["slope_sqrt_n_over_k"]
    passed = abs(slope - 1.0) <= 0.15
    record_criterion("query slope vs sqrt(N/K)", passed, f"{slope:.3f} (need 1.0 +/- 0.15)")
    assert passed


def test_query_envelope_regression_guard(scaling):
    eps_cells, _, k_cells, _ = scaling
    worst = max(
        c["median_queries"] / theoretical_envelope(c["n"], c["k"], c["epsilon"], c["delta"], 1.0)
        for c in eps_cells + k_cells
        if c["epsilon"] == 0.1 and c["k"] == 1024
    )
    passed = worst <= ENVELOPE_C
    record_criterion("envelope constant guard", passed, f"median/shape {worst:.4e} <= c={ENVELOPE_C:.3e}")
    assert passed


def test_step1_cost_independent_of_eps():
    problem = MarkedSetProblem.first_k(N_DESK, 1024)
    mismatched = 0
    for seed in range(20):
        costs = {
            approximate_count(problem, EstimatorConfig(epsilon=e), seed).ledger.step1_queries
            for e in (0.05, 0.1, 0.2)
        }
        mismatched += len(costs) != 1
    record_criterion("step-1 eps independence", mismatched == 0, f"{mismatched}/20 seeds differ")
    assert mismatched == 0


def test_exit_condition_algebra():
    violations = checked = 0
    for eps in np.linspace(0.005, 0.5, 100):
        for theta in np.geomspace(1e-9, math.pi / 1000, 100):
            n_sin2 = math.sin(theta) ** 2  # K/N
            ratio = 1 + eps / 5
            for pos in np.linspace(0.0, 1.0, 11):
                lo = theta / ratio**pos
                hi = lo * ratio
                assert lo <= theta * (1 + 1e-15) and hi >= theta * (1 - 1e-15)
                est = math.sin(hi) ** 2
                violations += not ((1 - eps) * n_sin2 < est < (1 + eps) * n_sin2)
                checked += 1
    record_criterion("exit-condition algebra", violations == 0, f"{violations}/{checked} grid points violate")
    assert violations == 0


def test_determinism():
    problem = MarkedSetProblem.first_k(N_DESK, 64)
    config = EstimatorConfig(epsilon=0.1)
    same = all(
        approximate_count(problem, config, seed) == approximate_count(problem, config, seed)
        for seed in range(10)
    )
    amp = estimate_amplitude(AmplitudeProblem(0.3), config, 9)
    same = same and amp == estimate_amplitude(AmplitudeProblem(0.3), config, 9)
    record_criterion("determinism", same, "identical trace, estimate and ledger on rerun")
    assert same
