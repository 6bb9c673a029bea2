"""Grover-only approximate counting and amplitude estimation, simulated."""

from .accounting import IterationRecord, QueryLedger, record_flip_batch, theoretical_envelope
from .coin import (
    CoinBackend,
    GroverAngle,
    MarkedSetProblem,
    analytic_heads_prob,
    flip_batch,
    grover_angle,
    make_backend,
    statevector_grover_state,
    statevector_heads_prob,
    stream,
)
from .estimator import (
    AmplitudeProblem,
    EstimateResult,
    EstimatorConfig,
    approximate_count,
    classical_baseline_count,
    estimate_amplitude,
    pad_problem,
    step1_rough_bounds,
    step2_refine,
)
from .rotation import AngleInterval, RotationChoice, choose_r, decision_round, r_bounds, update_interval

__version__ = "0.1.0"
