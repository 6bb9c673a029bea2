"""The Grover coin.

Preparing ``G^((r-1)/2)|psi>`` and measuring yields a marked item with
probability ``sin^2(r * theta)``, where ``theta = arcsin(sqrt(K/N))``. This
module supplies that coin in two flavours:

- ``analytic``: evaluates ``sin^2(r * theta)`` directly.
- ``statevector``: simulates the Grover iteration itself, densely for small
  ``N`` and in the exact two-dimensional marked/unmarked subspace otherwise.

Randomness comes from numpy ``Generator`` objects backed by PCG64; independent
streams are derived from a master seed with :func:`stream`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from numpy.typing import NDArray

from .accounting import QueryLedger, record_flip_batch

__all__ = [
    "DEFAULT_DENSE_CAP",
    "GroverAngle",
    "MarkedSetProblem",
    "CoinBackend",
    "stream",
    "grover_angle",
    "analytic_heads_prob",
    "statevector_grover_state",
    "statevector_heads_prob",
    "subspace_heads_prob",
    "make_backend",
    "flip_batch",
]

DEFAULT_DENSE_CAP = 4096

SeedLike = Union[int, np.random.SeedSequence]


def stream(seed: SeedLike, *path: int) -> np.random.Generator:
    """Return a PCG64 generator for the sub-stream ``path`` of ``seed``.

    Streams with different paths are statistically independent; the same
    ``(seed, path)`` always reproduces the same draws.
    """
    if isinstance(seed, np.random.SeedSequence):
        base = seed
        seq = np.random.SeedSequence(
            base.entropy, spawn_key=tuple(base.spawn_key) + tuple(path)
        )
    else:
        seq = np.random.SeedSequence(int(seed), spawn_key=tuple(path))
    return np.random.Generator(np.random.PCG64(seq))


@dataclass(frozen=True)
class GroverAngle:
    """Grover angle in radians.

    ``theta == 0`` is the sentinel produced for an empty marked set; it is
    only meaningful to the zero-detection path.
    """

    theta: float

    def __post_init__(self) -> None:
        if not (0.0 <= self.theta <= math.pi / 2) or math.isnan(self.theta):
            raise ValueError(f"Grover angle must lie in [0, pi/2], got {self.theta!r}")

    @property
    def is_zero(self) -> bool:
        return self.theta == 0.0


@dataclass(frozen=True)
class MarkedSetProblem:
    """``n_items`` items, of which the indices in ``marked`` are marked.

    Padding is virtual: enlarging ``n_items`` never materialises the extra
    items, they are simply never in ``marked``.
    """

    n_items: int
    marked: frozenset

    def __post_init__(self) -> None:
        if self.n_items < 1:
            raise ValueError(f"n_items must be >= 1, got {self.n_items}")
        object.__setattr__(self, "marked", frozenset(self.marked))
        if any(i < 0 or i >= self.n_items for i in self.marked):
            raise ValueError("marked indices must lie in [0, n_items)")

    @classmethod
    def first_k(cls, n_items: int, k: int) -> "MarkedSetProblem":
        """Problem whose marked set is ``{0, ..., k-1}``."""
        if not 0 <= k <= n_items:
            raise ValueError(f"need 0 <= k <= n_items, got k={k}, n_items={n_items}")
        return cls(n_items, frozenset(range(k)))

    @property
    def k(self) -> int:
        return len(self.marked)

    def is_marked(self, index: int) -> bool:
        return 0 <= index < self.n_items and index in self.marked


def grover_angle(k: int, n: int) -> GroverAngle:
    """``arcsin(sqrt(k/n))``; ``k == 0`` gives the zero sentinel."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if not 0 <= k <= n:
        raise ValueError(f"need 0 <= k <= n, got k={k}, n={n}")
    if k == n:
        return GroverAngle(math.pi / 2)
    # sqrt(k)/sqrt(n) avoids forming k/n, which can lose range for huge n.
    return GroverAngle(math.asin(math.sqrt(k) / math.sqrt(n)))


def _check_odd(r: int) -> None:
    if isinstance(r, bool) or int(r) != r or r < 1 or r % 2 == 0:
        raise ValueError(f"r must be a positive odd integer, got {r!r}")


def analytic_heads_prob(r: int, angle: GroverAngle) -> float:
    """Heads probability ``sin^2(r * theta)`` of the Grover coin."""
    _check_odd(r)
    s = math.sin(r * angle.theta)
    return min(1.0, s * s)


def _check_dense(problem: MarkedSetProblem, dense_cap: int) -> None:
    k, n = problem.k, problem.n_items
    if k == 0 or k == n:
        raise ValueError("statevector simulation needs 1 <= K < N")
    if n > dense_cap:
        raise ValueError(f"N={n} exceeds the dense simulation cap {dense_cap}")


def statevector_grover_state(
    problem: MarkedSetProblem, j: int, dense_cap: int = DEFAULT_DENSE_CAP
) -> NDArray[np.float64]:
    """State after ``j`` Grover iterations on the uniform superposition.

    Each iteration flips the sign of marked amplitudes and then reflects
    about the uniform state with ``2|psi><psi| - I``.
    """
    _check_dense(problem, dense_cap)
    if j < 0:
        raise ValueError(f"j must be >= 0, got {j}")
    n = problem.n_items
    marked = np.zeros(n, dtype=bool)
    marked[list(problem.marked)] = True

    state = np.full(n, 1.0 / math.sqrt(n))
    for _ in range(j):
        state[marked] *= -1.0
        # 2<psi|v>psi - v with psi uniform is 2*mean(v) - v.
        state = 2.0 * state.mean() - state
    return state


def statevector_heads_prob(
    problem: MarkedSetProblem, r: int, dense_cap: int = DEFAULT_DENSE_CAP
) -> float:
    """Probability of measuring a marked item after ``(r-1)/2`` dense iterations."""
    _check_odd(r)
    state = statevector_grover_state(problem, (r - 1) // 2, dense_cap)
    amps = state[list(problem.marked)]
    return float(np.dot(amps, amps))


def _subspace_grover(sin_theta: float) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Start vector and Grover matrix in the (marked, unmarked) basis."""
    cos_theta = math.sqrt(max(0.0, 1.0 - sin_theta * sin_theta))
    psi = np.array([sin_theta, cos_theta])
    oracle = np.diag([-1.0, 1.0])
    reflect = 2.0 * np.outer(psi, psi) - np.eye(2)
    return psi, reflect @ oracle


def subspace_heads_prob(sin_theta: float, r: int) -> float:
    """Heads probability simulated in the two-dimensional invariant subspace.

    ``sin_theta`` is the overlap of the start state with the good subspace
    (``sqrt(K/N)`` for counting, ``a/1000`` for amplitude estimation).
    """
    _check_odd(r)
    if not 0.0 <= sin_theta <= 1.0:
        raise ValueError(f"sin_theta must lie in [0, 1], got {sin_theta}")
    psi, g = _subspace_grover(sin_theta)
    state = np.linalg.matrix_power(g, (r - 1) // 2) @ psi
    return float(min(1.0, state[0] ** 2))


class CoinBackend:
    """Bernoulli source with heads probability ``sin^2(r * theta)``.

    The hidden angle is kept private: estimators interact only through
    :func:`flip_batch`. Everything except ``rng`` is fixed after construction,
    so one backend must not be flipped from several threads at once.
    """

    KINDS = ("analytic", "statevector")

    def __init__(
        self,
        kind: str,
        source: Union[MarkedSetProblem, GroverAngle],
        rng: np.random.Generator,
        dense_cap: int = DEFAULT_DENSE_CAP,
    ) -> None:
        if kind not in self.KINDS:
            raise ValueError(f"unknown backend kind {kind!r}; expected one of {self.KINDS}")
        if not isinstance(source, (MarkedSetProblem, GroverAngle)):
            raise TypeError("source must be a MarkedSetProblem or GroverAngle")
        self.kind = kind
        self.rng = rng
        self.dense_cap = dense_cap
        self._source = source
        if isinstance(source, MarkedSetProblem):
            self._angle = grover_angle(source.k, source.n_items)
            self._sin_theta = math.sqrt(source.k) / math.sqrt(source.n_items)
        else:
            self._angle = source
            self._sin_theta = math.sin(source.theta)

    def heads_prob(self, r: int) -> float:
        _check_odd(r)
        if self._angle.is_zero:
            return 0.0
        if self.kind == "analytic":
            return analytic_heads_prob(r, self._angle)
        src = self._source
        if (
            isinstance(src, MarkedSetProblem)
            and src.n_items <= self.dense_cap
            and 0 < src.k < src.n_items
        ):
            return statevector_heads_prob(src, r, self.dense_cap)
        return subspace_heads_prob(self._sin_theta, r)


def make_backend(
    kind: str,
    source: Union[MarkedSetProblem, GroverAngle],
    seed: SeedLike = 0,
    dense_cap: int = DEFAULT_DENSE_CAP,
) -> CoinBackend:
    return CoinBackend(kind, source, stream(seed), dense_cap)


def flip_batch(
    backend: CoinBackend,
    r: int,
    m: int,
    ledger: Optional[QueryLedger] = None,
    phase: str = "step1",
) -> int:
    """Flip the coin ``m`` times at iteration count ``r`` and return the heads.

    The ``m`` independent Bernoulli draws are taken as one binomial draw,
    which has the same distribution. If ``ledger`` is given it is charged
    ``(r - 1) / 2`` Grover applications per flip.
    """
    _check_odd(r)
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    p = backend.heads_prob(r)
    heads = int(backend.rng.binomial(m, p))
    if ledger is not None:
        record_flip_batch(ledger, r, m, phase)
    return heads
