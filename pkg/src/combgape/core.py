"""Problem data model and the gap / confidence-radius arithmetic.

Everything downstream (the identification loop, the audits and the hardness
analysis) goes through the functions here, so the summation order is fixed:
plain ascending arm index, accumulated left to right in float64.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from numpy.typing import ArrayLike, NDArray

DEDUPE_TOL = 1e-9


class PreconditionError(ValueError):
    """Raised when an operation is called outside its documented domain."""


class DegenerateInstance(ValueError):
    """The best action is not unique, so identification is ill-posed."""


def _frozen(a: ArrayLike, dtype=np.float64) -> NDArray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ActionClass:
    """K candidate actions in R^d, one per row."""

    actions: NDArray[np.float64]

    def __post_init__(self) -> None:
        arr = _frozen(self.actions)
        if arr.ndim != 2:
            raise ValueError("actions must be a 2-d K x d matrix")
        K, d = arr.shape
        if K < 2 or d < 2:
            raise ValueError(f"need K >= 2 and d >= 2, got K={K}, d={d}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("actions must be finite")
        dup = first_duplicate_pair(arr, DEDUPE_TOL)
        if dup is not None:
            raise ValueError(f"actions {dup[0]} and {dup[1]} coincide within {DEDUPE_TOL}")
        object.__setattr__(self, "actions", arr)

    @property
    def K(self) -> int:
        return self.actions.shape[0]

    @property
    def d(self) -> int:
        return self.actions.shape[1]

    def __len__(self) -> int:
        return self.K

    def __getitem__(self, k: int) -> NDArray[np.float64]:
        return self.actions[k]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ActionClass):
            return NotImplemented
        return self.actions.shape == other.actions.shape and bool(
            np.array_equal(self.actions, other.actions)
        )

    __hash__ = None  # type: ignore[assignment]


def first_duplicate_pair(actions: NDArray, tol: float = DEDUPE_TOL) -> tuple[int, int] | None:
    """Return the first (k, l), k < l, whose rows agree within ``tol`` everywhere."""
    K = actions.shape[0]
    for k in range(K - 1):
        close = np.all(np.abs(actions[k + 1 :] - actions[k]) <= tol, axis=1)
        if close.any():
            return k, k + 1 + int(np.argmax(close))
    return None


@dataclass(frozen=True, eq=False)
class ArmHistory:
    """Per-arm pull counts, running sums and empirical means.

    ``t`` is the total number of pulls recorded so far. Updates return a new
    history; the arrays of an instance are never mutated.
    """

    counts: NDArray[np.int64]
    sums: NDArray[np.float64]
    t: int = 0
    means: NDArray[np.float64] = field(init=False)

    def __post_init__(self) -> None:
        counts = _frozen(self.counts, np.int64)
        sums = _frozen(self.sums)
        if counts.shape != sums.shape or counts.ndim != 1:
            raise ValueError("counts and sums must be 1-d and of equal length")
        if np.any(counts < 0):
            raise ValueError("counts must be nonnegative")
        means = np.zeros_like(sums)
        np.divide(sums, counts, out=means, where=counts > 0)
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "sums", sums)
        object.__setattr__(self, "means", _frozen(means))

    @classmethod
    def empty(cls, d: int) -> ArmHistory:
        return cls(np.zeros(d, np.int64), np.zeros(d), 0)

    @property
    def d(self) -> int:
        return self.counts.shape[0]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ArmHistory):
            return NotImplemented
        return (
            self.t == other.t
            and np.array_equal(self.counts, other.counts)
            and np.array_equal(self.sums, other.sums)
        )

    __hash__ = None  # type: ignore[assignment]


def update_history(history: ArmHistory, arm: int, reward: float) -> ArmHistory:
    """Record one observation of ``reward`` on ``arm``."""
    if not 0 <= arm < history.d:
        raise IndexError(f"arm {arm} out of range for d={history.d}")
    if not math.isfinite(reward):
        raise ValueError("reward must be finite")
    counts = history.counts.copy()
    sums = history.sums.copy()
    counts[arm] += 1
    sums[arm] += reward
    return ArmHistory(counts, sums, history.t + 1)


@dataclass(frozen=True)
class BanditInstance:
    """True means, sub-Gaussian scale, reward noise model and seed."""

    mu: NDArray[np.float64]
    R: float = 1.0
    noise: object = None  # environments.NoiseSpec; None means Gaussian with sigma = R
    seed: int = 0

    def __post_init__(self) -> None:
        mu = _frozen(self.mu)
        if mu.ndim != 1 or not np.all(np.isfinite(mu)):
            raise ValueError("mu must be a finite 1-d vector")
        if not self.R > 0:
            raise ValueError("R must be positive")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        object.__setattr__(self, "mu", mu)

    @property
    def d(self) -> int:
        return self.mu.shape[0]

    def with_seed(self, seed: int) -> BanditInstance:
        return replace(self, seed=seed)


@dataclass(frozen=True)
class GapBound:
    delta_hat: float
    beta: float
    upper: float


def _check_pair(actions: ActionClass, k: int, l: int) -> None:
    for idx in (k, l):
        if not 0 <= idx < actions.K:
            raise IndexError(f"action index {idx} out of range for K={actions.K}")


def estimated_gap(actions: ActionClass, k: int, l: int, means: ArrayLike) -> float:
    """Empirical gap ``means . (pi^k - pi^l)``.

    Terms are accumulated in ascending arm order and each term is an exact
    negation of its (l, k) counterpart, so the result is exactly antisymmetric.
    """
    _check_pair(actions, k, l)
    means = np.asarray(means, dtype=np.float64)
    if means.shape != (actions.d,):
        raise ValueError(f"means must have length {actions.d}")
    if k == l:
        return 0.0
    a, b = actions[k], actions[l]
    total = 0.0
    for s in range(actions.d):
        diff = a[s] - b[s]
        total += float(means[s] * diff)
    return total


def _log_term(K: int, t: int, delta: float) -> float:
    return math.log(2.0 * K * K * float(t) * float(t) / delta)


def confidence_radius(
    actions: ActionClass,
    k: int,
    l: int,
    counts: ArrayLike,
    t: int,
    delta: float,
    R: float,
) -> float:
    """Half-width of the confidence interval on the gap between actions k and l.

    ``R * sqrt(0.5 * sum_s (pi^k_s - pi^l_s)^2 / T_s * log(2 K^2 t^2 / delta))``
    """
    _check_pair(actions, k, l)
    if t < 1:
        raise PreconditionError("t must be >= 1")
    if not 0.0 < delta < 1.0:
        raise PreconditionError("delta must lie in (0, 1)")
    if not R > 0:
        raise PreconditionError("R must be positive")
    counts = np.asarray(counts)
    if counts.shape != (actions.d,):
        raise ValueError(f"counts must have length {actions.d}")
    if k == l:
        return 0.0
    a, b = actions[k], actions[l]
    acc = 0.0
    for s in range(actions.d):
        diff = a[s] - b[s]
        if diff == 0.0:
            continue
        if counts[s] < 1:
            raise PreconditionError(f"arm {s} differs between actions {k} and {l} but has never been pulled")
        acc += float(diff * diff) / float(counts[s])
    return R * math.sqrt(0.5 * acc * _log_term(actions.K, t, delta))


def gap_bound(
    actions: ActionClass,
    k: int,
    l: int,
    history: ArmHistory,
    delta: float,
    R: float,
) -> GapBound:
    """Upper confidence bound on the gap of k over l at the history's round."""
    if k == l:
        _check_pair(actions, k, l)
        return GapBound(0.0, 0.0, 0.0)
    dh = estimated_gap(actions, k, l, history.means)
    beta = confidence_radius(actions, k, l, history.counts, max(history.t, 1), delta, R)
    return GapBound(dh, beta, dh + beta)
