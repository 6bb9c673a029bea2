"""Choosing the rotation count that separates the two ends of an angle bracket.

Given ``theta_min <= theta <= theta_max`` with ratio ``1 + gamma``,
:func:`choose_r` returns an odd ``r`` such that ``r * theta_min`` lands near
a multiple of ``2*pi`` while ``r * theta_max`` lands near a quarter turn past
it. A coin with heads probability ``sin^2(r * theta)`` then mostly says tails
near ``theta_min`` and mostly heads near ``theta_max``; a majority vote lets
:func:`update_interval` shrink ``gamma`` by a factor 0.9.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

from .accounting import QueryLedger
from .coin import CoinBackend, flip_batch

__all__ = [
    "MAX_THETA",
    "MAX_GAMMA",
    "SHRINK",
    "R_MAX",
    "AngleInterval",
    "RotationChoice",
    "check_lemma_preconditions",
    "round_half_up",
    "nearest_odd",
    "choose_r",
    "r_bounds",
    "update_interval",
    "decision_round",
]

MAX_THETA = math.pi / 1000
MAX_GAMMA = 0.2
SHRINK = 0.9
R_MAX = 2**63 - 1

# Relative slack when comparing the computed gamma against 1/5.
_REL_TOL = 1e-12
# Absolute slack for detecting a rounding tie in k. Forming dtheta by
# subtraction loses a few ulps, so an exact tie like 2.5 can arrive as
# 2.4999999999999990.
_TIE_TOL = 1e-9


@dataclass(frozen=True)
class AngleInterval:
    """Bracket ``[theta_min, theta_max]`` around the unknown Grover angle."""

    theta_min: float
    theta_max: float

    def __post_init__(self) -> None:
        if not (0.0 <= self.theta_min <= self.theta_max):
            raise ValueError(
                f"need 0 <= theta_min <= theta_max, got [{self.theta_min}, {self.theta_max}]"
            )

    @property
    def gamma(self) -> float:
        return self.theta_max / self.theta_min - 1.0

    @property
    def delta_theta(self) -> float:
        return self.theta_max - self.theta_min

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.theta_min + self.theta_max)

    def contains(self, theta: float) -> bool:
        return self.theta_min <= theta <= self.theta_max


@dataclass(frozen=True)
class RotationChoice:
    r: int
    k: int
    delta_theta: float


def check_lemma_preconditions(interval: AngleInterval) -> None:
    """Raise ``ValueError`` unless ``0 < theta_min < theta_max <= pi/1000`` and ``gamma <= 1/5``."""
    if not interval.theta_min > 0.0:
        raise ValueError("theta_min must be strictly positive")
    if not interval.theta_max > interval.theta_min:
        raise ValueError("theta_max must exceed theta_min")
    if interval.theta_max > MAX_THETA:
        raise ValueError(f"theta_max={interval.theta_max} exceeds pi/1000")
    if interval.gamma > MAX_GAMMA * (1.0 + _REL_TOL):
        raise ValueError(f"gamma={interval.gamma} exceeds 1/5")


def round_half_up(x: float, tie_tol: float = 0.0) -> int:
    """Nearest integer; values within ``tie_tol`` of a half-integer round up."""
    return math.floor(x + 0.5 + tie_tol)


def nearest_odd(x: float) -> int:
    """Nearest odd integer; at an even ``x`` the larger neighbour wins."""
    # Odd integers are 2m+1 with m = round((x-1)/2).
    return 2 * round_half_up((x - 1.0) / 2.0) + 1


def choose_r(interval: AngleInterval) -> RotationChoice:
    """Odd rotation count built from ``k = round(theta_min / (4 dtheta))``."""
    check_lemma_preconditions(interval)
    dtheta = interval.delta_theta
    k = round_half_up(interval.theta_min / (4.0 * dtheta), _TIE_TOL)
    r = nearest_odd(2.0 * math.pi * k / interval.theta_min)
    if r > R_MAX:
        raise OverflowError(f"rotation count {r} exceeds the 63-bit range")
    return RotationChoice(r=r, k=k, delta_theta=dtheta)


def r_bounds(interval: AngleInterval, theta: float) -> tuple[float, float]:
    """Lower and upper bounds on ``r`` evaluated at an angle inside the interval."""
    if not interval.contains(theta):
        raise ValueError(f"theta={theta} lies outside the interval")
    gamma = interval.gamma
    scale = math.pi / (gamma * theta)
    return scale * (0.5 - gamma) - 1.0, scale * (0.5 + gamma) + 1.0


def update_interval(interval: AngleInterval, heads_majority: bool) -> AngleInterval:
    """Move one endpoint so that the ratio parameter shrinks to ``0.9 * gamma``."""
    factor = 1.0 + SHRINK * interval.gamma
    if heads_majority:
        return AngleInterval(interval.theta_max / factor, interval.theta_max)
    return AngleInterval(interval.theta_min, factor * interval.theta_min)


def decision_round(
    interval: AngleInterval,
    backend: CoinBackend,
    m: int,
    ledger: Optional[QueryLedger] = None,
    phase: str = "step2",
) -> tuple[AngleInterval, RotationChoice, int]:
    """Flip ``m`` coins at the chosen ``r`` and update on a majority vote.

    Exactly half heads counts as a heads majority. Returns the new interval,
    the rotation choice and the heads count.
    """
    choice = choose_r(interval)
    heads = flip_batch(backend, choice.r, m, ledger, phase)
    return update_interval(interval, 2 * heads >= m), choice, heads
