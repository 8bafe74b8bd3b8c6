"""Seeded reward generation, ground truth and the confidence-event audit."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .core import ActionClass, BanditInstance, DegenerateInstance, estimated_gap, confidence_radius

TIE_TOL = 1e-9


class NoiseKind(str, enum.Enum):
    GAUSSIAN_UNIT = "gaussian_unit"
    GAUSSIAN_SCALED = "gaussian_scaled"
    DISABLED = "disabled"


@dataclass(frozen=True)
class NoiseSpec:
    """Reward noise model.

    ``GAUSSIAN_UNIT`` uses a standard deviation equal to the instance's
    sub-Gaussian scale ``R``; ``GAUSSIAN_SCALED`` carries its own ``sigma``.
    ``DISABLED`` returns the mean exactly and exists for testing.
    """

    kind: NoiseKind = NoiseKind.GAUSSIAN_UNIT
    sigma: float | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", NoiseKind(self.kind))
        if self.kind is NoiseKind.GAUSSIAN_SCALED:
            if self.sigma is None or not self.sigma > 0:
                raise ValueError("GAUSSIAN_SCALED noise needs sigma > 0")
        elif self.sigma is not None:
            raise ValueError(f"{self.kind.value} noise takes no sigma")

    @classmethod
    def unit(cls) -> NoiseSpec:
        return cls(NoiseKind.GAUSSIAN_UNIT)

    @classmethod
    def scaled(cls, sigma: float) -> NoiseSpec:
        return cls(NoiseKind.GAUSSIAN_SCALED, sigma)

    @classmethod
    def disabled(cls) -> NoiseSpec:
        return cls(NoiseKind.DISABLED)

    def std(self, R: float) -> float:
        if self.kind is NoiseKind.GAUSSIAN_UNIT:
            return R
        if self.kind is NoiseKind.GAUSSIAN_SCALED:
            return float(self.sigma)
        return 0.0


def noise_of(instance: BanditInstance) -> NoiseSpec:
    return instance.noise if instance.noise is not None else NoiseSpec.unit()


def derive_seed(base_seed: int, *path: int) -> int:
    """Map ``(base_seed, *path)`` to an independent 64-bit seed.

    Uses numpy's SeedSequence hashing, so the result depends only on the
    arguments and never on the order in which trials execute.
    """
    ss = np.random.SeedSequence(int(base_seed), spawn_key=tuple(int(p) for p in path))
    return int(ss.generate_state(1, np.uint64)[0])


class RewardStream:
    """Per-arm Gaussian noise streams for one trial.

    Arm ``s`` owns its own generator, so the k-th observation of arm ``s``
    is the same for every sampling strategy given the seed.
    """

    BLOCK = 1024

    def __init__(self, instance: BanditInstance):
        self.mu = instance.mu
        self.std = noise_of(instance).std(instance.R)
        children = np.random.SeedSequence(int(instance.seed)).spawn(instance.d)
        self._gens = [np.random.default_rng(c) for c in children]
        self._buf: list[NDArray | None] = [None] * instance.d
        self._pos = [self.BLOCK] * instance.d

    def standard_normal(self, arm: int) -> float:
        pos = self._pos[arm]
        if pos == self.BLOCK:
            self._buf[arm] = self._gens[arm].standard_normal(self.BLOCK)
            pos = 0
        self._pos[arm] = pos + 1
        return float(self._buf[arm][pos])

    def pull(self, arm: int) -> float:
        if self.std == 0.0:
            return float(self.mu[arm])
        return float(self.mu[arm]) + self.std * self.standard_normal(arm)


def sample_reward(instance: BanditInstance, arm: int, stream: RewardStream) -> float:
    """One reward from ``arm``; ``stream`` advances in place."""
    if not 0 <= arm < instance.d:
        raise IndexError(f"arm {arm} out of range for d={instance.d}")
    return stream.pull(arm)


def best_action(actions: ActionClass, mu: ArrayLike, tol: float = TIE_TOL) -> int:
    """Index of the action maximizing ``mu . pi``.

    Raises DegenerateInstance when the runner-up is within ``tol``.
    """
    mu = np.asarray(mu, dtype=np.float64)
    if mu.shape != (actions.d,):
        raise ValueError(f"mu must have length {actions.d}")
    vals = np.array([math.fsum(mu * row) for row in actions.actions])
    order = np.argsort(-vals, kind="stable")
    top, runner = int(order[0]), int(order[1])
    if vals[top] - vals[runner] <= tol:
        raise DegenerateInstance(
            f"actions {top} and {runner} tie within {tol} (values {vals[top]!r}, {vals[runner]!r})"
        )
    return top


def true_gap(actions: ActionClass, k: int, l: int, mu: ArrayLike) -> float:
    return estimated_gap(actions, k, l, mu)


def geometric_checkpoints(d: int, tau: int) -> list[int]:
    """Rounds ``d, 2d, 4d, ...`` below ``tau``, followed by ``tau``."""
    out = []
    c = d
    while c < tau:
        out.append(c)
        c *= 2
    out.append(tau)
    return out


@dataclass(frozen=True)
class Violation:
    t: int
    k: int
    l: int
    error: float
    beta: float


@dataclass(frozen=True)
class AuditReport:
    event_E_held: bool
    first_violation: Violation | None
    checkpoints_audited: int


@dataclass(frozen=True)
class Snapshot:
    """Pull counts and running sums after ``t`` total pulls."""

    t: int
    counts: NDArray[np.int64]
    sums: NDArray[np.float64]

    @property
    def means(self) -> NDArray[np.float64]:
        return self.sums / np.maximum(self.counts, 1)


def _pair_violation(actions: ActionClass, snap: Snapshot, mu: NDArray, delta: float, R: float):
    """First (k, l) with |true gap - estimated gap| > beta at this snapshot."""
    A = actions.actions
    means = snap.means
    K = A.shape[0]
    log_term = math.log(2.0 * K * K * float(snap.t) ** 2 / delta)
    inv = 1.0 / snap.counts.astype(np.float64)
    err_vals = A @ (mu - means)
    for k in range(K):
        D = A[k] - A
        beta = R * np.sqrt(0.5 * ((D * D) @ inv) * log_term)
        err = np.abs(err_vals[k] - err_vals)
        # vectorized screen with slack, then an exact recheck with the scalar formulas
        for l in np.nonzero(err > beta - 1e-9 * (1.0 + beta))[0]:
            l = int(l)
            if l == k:
                continue
            e = abs(estimated_gap(actions, k, l, mu) - estimated_gap(actions, k, l, means))
            b = confidence_radius(actions, k, l, snap.counts, snap.t, delta, R)
            if e > b:
                return Violation(snap.t, k, l, e, b)
    return None


def audit_event_E(
    snapshots: Iterable[Snapshot],
    actions: ActionClass,
    mu: ArrayLike,
    delta: float,
    R: float,
    checkpoints: Sequence[int] | None = None,
) -> AuditReport:
    """Check |true gap - estimated gap| <= beta for every ordered pair.

    ``snapshots`` supplies counts and sums at audited rounds; when
    ``checkpoints`` is given only those rounds are examined.
    """
    mu = np.asarray(mu, dtype=np.float64)
    wanted = None if checkpoints is None else set(int(c) for c in checkpoints)
    n = 0
    for snap in snapshots:
        if wanted is not None and snap.t not in wanted:
            continue
        n += 1
        v = _pair_violation(actions, snap, mu, delta, R)
        if v is not None:
            return AuditReport(False, v, n)
    return AuditReport(True, None, n)
