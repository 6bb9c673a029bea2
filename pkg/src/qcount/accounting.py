"""Query bookkeeping for estimator runs.

A :class:`QueryLedger` counts Grover applications, oracle (unitary)
applications and coin flips, split by phase. An :class:`IterationRecord`
captures one batch of flips together with the interval that resulted.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional

__all__ = [
    "PHASES",
    "COUNTER_MAX",
    "QueryLedger",
    "IterationRecord",
    "record_flip_batch",
    "theoretical_envelope",
]

PHASES = ("step1", "step2")

# Counters are exported as signed 64-bit integers.
COUNTER_MAX = 2**63 - 1


@dataclass
class QueryLedger:
    """Running cost totals for one estimator run.

    ``oracle_per_grover`` is 1 for counting (one oracle call per Grover
    iteration) and 2 for amplitude estimation (one ``U`` plus one ``U^dagger``).
    """

    grover_applications: int = 0
    oracle_queries: int = 0
    coin_flips: int = 0
    step1_queries: int = 0
    step2_queries: int = 0
    oracle_per_grover: int = 1

    def as_dict(self) -> dict:
        return asdict(self)

    def copy(self) -> "QueryLedger":
        return QueryLedger(**asdict(self))


def _checked_add(current: int, delta: int, name: str) -> int:
    total = current + delta
    if total > COUNTER_MAX:
        raise OverflowError(f"ledger counter {name!r} exceeds 64-bit range")
    return total


def record_flip_batch(ledger: QueryLedger, r: int, m: int, phase: str) -> QueryLedger:
    """Charge ``m`` flips of the coin prepared with ``(r - 1) / 2`` Grover steps.

    The ledger is updated in place and returned for chaining.

    >>> record_flip_batch(QueryLedger(), r=5, m=10, phase="step1").grover_applications
    20
    """
    if r < 1 or r % 2 == 0:
        raise ValueError(f"r must be a positive odd integer, got {r}")
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    if phase not in PHASES:
        raise ValueError(f"unknown phase {phase!r}; expected one of {PHASES}")

    applications = m * ((r - 1) // 2)
    ledger.grover_applications = _checked_add(
        ledger.grover_applications, applications, "grover_applications"
    )
    ledger.oracle_queries = _checked_add(
        ledger.oracle_queries, applications * ledger.oracle_per_grover, "oracle_queries"
    )
    ledger.coin_flips = _checked_add(ledger.coin_flips, m, "coin_flips")
    bucket = f"{phase}_queries"
    setattr(ledger, bucket, _checked_add(getattr(ledger, bucket), applications, bucket))
    return ledger


@dataclass(frozen=True)
class IterationRecord:
    """One flip batch: which phase, which iteration, which ``r``, what came up."""

    phase: str
    t: int
    r: int
    samples: int
    heads: int
    theta_min_after: Optional[float] = None
    theta_max_after: Optional[float] = None

    def __post_init__(self) -> None:
        if self.phase not in PHASES:
            raise ValueError(f"unknown phase {self.phase!r}")
        if self.r < 1 or self.r % 2 == 0:
            raise ValueError(f"r must be odd and positive, got {self.r}")
        if not 0 <= self.heads <= self.samples:
            raise ValueError("heads must lie in [0, samples]")


def theoretical_envelope(n: float, k: float, epsilon: float, delta: float, c: float) -> float:
    """Return ``c * sqrt(n/k) * (1/epsilon) * ln(1/delta)``.

    ``c`` is an empirically fitted constant; see the scaling study.
    """
    if k < 1:
        raise ValueError("envelope is only defined for k >= 1")
    if epsilon <= 0 or not 0 < delta < 1:
        raise ValueError("need epsilon > 0 and 0 < delta < 1")
    return c * math.sqrt(n / k) / epsilon * math.log(1.0 / delta)
