"""Gap-based best-action identification over an explicit action class.

``run`` pulls every arm once and then repeats:

1. ``i`` = empirically best action, ``j`` = challenger with the largest upper
   confidence bound ``B`` on its gap over ``i``;
2. stop and answer ``i`` once ``B <= 0``;
3. otherwise pull the arm that shrinks the confidence radius of the
   ``(i, j)`` gap the most.

The public ``select_*`` functions are direct, per-call evaluations. ``run``
keeps running dot products and variance sums up to date incrementally (O(K)
per pull rather than O(K d)), refreshes them exactly whenever the leader
changes and periodically otherwise, and re-derives the stopping decision with
``select_ambiguous_action`` before it stops.
"""

from __future__ import annotations

import enum
import hashlib
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .core import ActionClass, ArmHistory, BanditInstance, PreconditionError
from .environments import RewardStream, Snapshot, geometric_checkpoints

DIFF_TOL = 1e-12
DEFAULT_BUDGET = 10_000_000
REFRESH_EVERY = 1024


class StrategyKind(str, enum.Enum):
    GAP_WEIGHTED = "gap_weighted"
    NAIVE = "naive"


class Termination(str, enum.Enum):
    STOPPED = "stopped"
    BUDGET_EXHAUSTED = "budget_exhausted"


@dataclass(frozen=True)
class AmbiguousPair:
    i: int
    j: int
    B: float


def _validate(delta: float, R: float) -> None:
    if not 0.0 < delta < 1.0:
        raise PreconditionError("delta must lie in (0, 1)")
    if not R > 0:
        raise PreconditionError("R must be positive")


def _ascending_dot(A: NDArray, x: NDArray) -> NDArray:
    # row-wise A @ x accumulated in ascending column order
    acc = np.zeros(A.shape[0])
    for s in range(A.shape[1]):
        acc += A[:, s] * x[s]
    return acc


def select_ambiguous_action(actions: ActionClass, history: ArmHistory, delta: float, R: float) -> AmbiguousPair:
    """Empirical leader ``i``, most ambiguous challenger ``j != i`` and ``B``.

    Arithmetic matches ``estimated_gap`` and ``confidence_radius`` term for
    term, so ``B`` equals ``gap_bound(j, i).upper`` exactly.
    """
    _validate(delta, R)
    if np.any(history.counts < 1):
        raise PreconditionError("every arm must be pulled before selecting a pair")
    A = actions.actions
    K, d = A.shape
    t = max(history.t, 1)
    i = int(np.argmax(_ascending_dot(A, history.means)))
    gap = np.zeros(K)
    var = np.zeros(K)
    for s in range(d):
        diff = A[:, s] - A[i, s]
        gap += history.means[s] * diff
        var += (diff * diff) / float(history.counts[s])
    log_term = math.log(2.0 * K * K * float(t) * float(t) / delta)
    ucb = gap + R * np.sqrt(0.5 * var * log_term)
    ucb[i] = -np.inf
    j = int(np.argmax(ucb))
    return AmbiguousPair(i, j, float(ucb[j]))


def _gap_weighted_arm(diff: NDArray, counts: NDArray) -> int:
    T = counts.astype(np.float64)
    return int(np.argmax((diff * diff) / (T * (T + 1.0))))


def _naive_arm(diff: NDArray, counts: NDArray) -> int:
    differs = np.abs(diff) > DIFF_TOL
    masked = np.where(differs, counts, np.iinfo(np.int64).max)
    return int(np.argmin(masked))


def _pair_diff(actions: ActionClass, i: int, j: int) -> NDArray:
    if i == j:
        raise PreconditionError("i and j must be different actions")
    return actions[i] - actions[j]


def select_arm_gap_weighted(actions: ActionClass, i: int, j: int, counts: ArrayLike) -> int:
    """Arm maximizing ``(pi^i_s - pi^j_s)^2 / (T_s (T_s + 1))``; lowest index on ties.

    Equivalent to the arm whose extra pull minimizes
    ``sum_s (pi^i_s - pi^j_s)^2 / (T_s + [s = u])``.
    """
    counts = np.asarray(counts)
    if np.any(counts < 1):
        raise PreconditionError("counts must be >= 1")
    return _gap_weighted_arm(_pair_diff(actions, i, j), counts)


def select_arm_naive(actions: ActionClass, i: int, j: int, counts: ArrayLike) -> int:
    """Least-pulled arm among the coordinates where the two actions differ."""
    return _naive_arm(_pair_diff(actions, i, j), np.asarray(counts))


_SELECTORS = {
    StrategyKind.GAP_WEIGHTED: _gap_weighted_arm,
    StrategyKind.NAIVE: _naive_arm,
}


@dataclass(frozen=True, eq=False)
class Trace:
    """Per-step decisions: round ``t`` (pulls so far), pair, ``B`` and the pull."""

    t: NDArray[np.int64]
    i: NDArray[np.int64]
    j: NDArray[np.int64]
    B: NDArray[np.float64]
    p: NDArray[np.int64]
    reward: NDArray[np.float64]

    def __len__(self) -> int:
        return int(self.t.size)

    def arrays(self) -> tuple[NDArray, ...]:
        return self.t, self.i, self.j, self.B, self.p, self.reward


@dataclass(frozen=True, eq=False)
class RunRecord:
    tau: int
    a_out: int
    counts: NDArray[np.int64]
    trace: Trace
    terminated_by: Termination
    final_B: float
    strategy: StrategyKind
    full_trace: bool
    init_rewards: NDArray[np.float64]
    snapshots: tuple[Snapshot, ...] = field(default_factory=tuple)

    @property
    def stopped(self) -> bool:
        return self.terminated_by is Termination.STOPPED

    def final_history(self) -> ArmHistory:
        snap = self.snapshots[-1]
        return ArmHistory(snap.counts, snap.sums, snap.t)

    def snapshots_at(self, rounds) -> list[Snapshot]:
        """Counts and sums at the given rounds, rebuilt from a full trace."""
        if not self.full_trace:
            raise PreconditionError("rebuilding snapshots needs a full trace")
        wanted = sorted(set(int(r) for r in rounds))
        d = self.counts.size
        counts = np.ones(d, dtype=np.int64)
        sums = self.init_rewards.astype(np.float64).copy()
        out = []
        step = 0
        ps, rs = self.trace.p, self.trace.reward
        t = d
        for r in wanted:
            if r < d or r > self.tau:
                raise ValueError(f"round {r} outside [{d}, {self.tau}]")
            while t < r:
                counts[ps[step]] += 1
                sums[ps[step]] += rs[step]
                step += 1
                t += 1
            out.append(Snapshot(t, counts.copy(), sums.copy()))
        return out

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(f"{self.tau}|{self.a_out}|{self.terminated_by.value}|{self.strategy.value}|".encode())
        h.update(np.float64(self.final_B).tobytes())
        h.update(self.counts.tobytes())
        h.update(self.init_rewards.tobytes())
        for arr in self.trace.arrays():
            h.update(arr.tobytes())
        for snap in self.snapshots:
            h.update(np.int64(snap.t).tobytes() + snap.counts.tobytes() + snap.sums.tobytes())
        return h.hexdigest()


class _Engine:
    """Mutable per-run state with incrementally maintained sums."""

    def __init__(self, actions: ActionClass, R: float, delta: float):
        self.actions = actions
        self.A = actions.actions
        self.AT = np.ascontiguousarray(self.A.T)
        self.K, self.d = self.A.shape
        self.R = R
        self.delta = delta
        self.counts = np.zeros(self.d, dtype=np.int64)
        self.sums = np.zeros(self.d)
        self.means = np.zeros(self.d)
        self.t = 0
        self.leader = -1
        self.since_refresh = 0

    def observe(self, arm: int, reward: float) -> None:
        self.counts[arm] += 1
        self.sums[arm] += reward
        self.t += 1

    def history(self) -> ArmHistory:
        return ArmHistory(self.counts, self.sums, self.t)

    def refresh(self) -> None:
        self.means = self.sums / self.counts
        self.vals = self.A @ self.means
        self.inv = 1.0 / self.counts.astype(np.float64)
        self._set_leader(int(np.argmax(self.vals)))
        self.since_refresh = 0

    def _set_leader(self, i: int) -> None:
        self.leader = i
        self.DT = self.AT - self.AT[:, i : i + 1]
        self.var = (self.DT * self.DT).T @ self.inv

    def pair(self) -> AmbiguousPair:
        i = int(np.argmax(self.vals))
        if i != self.leader:
            self._set_leader(i)
        log_term = math.log(2.0 * self.K * self.K * float(self.t) ** 2 / self.delta)
        ucb = (self.vals - self.vals[i]) + self.R * np.sqrt(0.5 * np.maximum(self.var, 0.0) * log_term)
        ucb[i] = -np.inf
        j = int(np.argmax(ucb))
        return AmbiguousPair(i, j, float(ucb[j]))

    def pulled(self, arm: int, reward: float) -> None:
        old_mean, old_inv = self.means[arm], self.inv[arm]
        self.observe(arm, reward)
        self.since_refresh += 1
        if self.since_refresh >= REFRESH_EVERY:
            self.refresh()
            return
        self.means[arm] = self.sums[arm] / self.counts[arm]
        self.inv[arm] = 1.0 / float(self.counts[arm])
        self.vals += self.AT[arm] * (self.means[arm] - old_mean)
        col = self.DT[arm]
        self.var += col * col * (self.inv[arm] - old_inv)


def run(
    instance: BanditInstance,
    actions: ActionClass,
    delta: float,
    strategy: StrategyKind | str = StrategyKind.GAP_WEIGHTED,
    budget_cap: int = DEFAULT_BUDGET,
    full_trace: bool = True,
) -> RunRecord:
    """Identify the best action of ``actions`` under ``instance``'s rewards.

    With ``full_trace=False`` only decisions at the checkpoint rounds
    ``d, 2d, 4d, ...`` are kept in the trace.
    """
    strategy = StrategyKind(strategy)
    _validate(delta, instance.R)
    d = actions.d
    if instance.d != d:
        raise ValueError(f"instance has {instance.d} arms, actions have {d}")
    if budget_cap < d:
        raise PreconditionError("budget_cap must be at least d")
    choose = _SELECTORS[strategy]
    stream = RewardStream(instance)
    eng = _Engine(actions, instance.R, delta)

    init_rewards = np.empty(d)
    for s in range(d):
        init_rewards[s] = stream.pull(s)
        eng.observe(s, init_rewards[s])
    eng.refresh()

    rows: tuple[list, ...] = ([], [], [], [], [], [])
    snapshots: list[Snapshot] = []
    next_cp = d

    def snapshot() -> None:
        snapshots.append(Snapshot(eng.t, eng.counts.copy(), eng.sums.copy()))

    while True:
        at_checkpoint = eng.t == next_cp
        if at_checkpoint:
            snapshot()
            next_cp *= 2
        if eng.t >= budget_cap:
            pair = select_ambiguous_action(actions, eng.history(), delta, instance.R)
            status = Termination.BUDGET_EXHAUSTED
            break
        pair = eng.pair()
        if pair.B <= 0.0:
            # confirm against the direct evaluation before committing to stop
            pair = select_ambiguous_action(actions, eng.history(), delta, instance.R)
            if pair.B <= 0.0:
                status = Termination.STOPPED
                break
        p = choose(actions[pair.i] - actions[pair.j], eng.counts)
        reward = stream.pull(p)
        if full_trace or at_checkpoint:
            for col, val in zip(rows, (eng.t, pair.i, pair.j, pair.B, p, reward)):
                col.append(val)
        eng.pulled(p, reward)

    if not snapshots or snapshots[-1].t != eng.t:
        snapshot()
    trace = Trace(
        np.array(rows[0], dtype=np.int64),
        np.array(rows[1], dtype=np.int64),
        np.array(rows[2], dtype=np.int64),
        np.array(rows[3], dtype=np.float64),
        np.array(rows[4], dtype=np.int64),
        np.array(rows[5], dtype=np.float64),
    )
    return RunRecord(
        tau=eng.t,
        a_out=pair.i,
        counts=eng.counts.copy(),
        trace=trace,
        terminated_by=status,
        final_B=pair.B,
        strategy=strategy,
        full_trace=full_trace,
        init_rewards=init_rewards,
        snapshots=tuple(snapshots),
    )


def checkpoint_rounds(record: RunRecord) -> list[int]:
    return geometric_checkpoints(record.counts.size, record.tau)
