"""Instance-hardness constants and the per-pull threshold audit.

For a best action ``pi*`` the quantities are

* per-arm gap ``Delta_(s) = min_{pi : pi_s != pi*_s} mu.(pi* - pi) / |pi*_s - pi_s|``
  (``+inf`` when every action agrees with ``pi*`` on arm ``s``);
* ``V_s = max_{pi : pi_s != pi*_s, pi'} |pi_s - pi'_s| * ||pi - pi'||_1 / |pi*_s - pi_s|^2``;
* ``A = max_{pi, pi', s, u : pi_s != pi'_s} |pi_u - pi'_u| / |pi_s - pi'_s|``.

All are exact scans over the action class, O(K^2 d) with numpy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .algorithm import DIFF_TOL, RunRecord
from .core import ActionClass, PreconditionError
from .environments import best_action


@dataclass(frozen=True, eq=False)
class HardnessProfile:
    a_star: int
    delta_s: NDArray[np.float64]
    v_s: NDArray[np.float64]
    amplification: float
    lb_sum: float
    thm2_sum: float

    @property
    def d(self) -> int:
        return self.delta_s.size

    def as_dict(self) -> dict:
        return {
            "a_star": self.a_star,
            "delta_s": [float(x) for x in self.delta_s],
            "v_s": [float(x) for x in self.v_s],
            "amplification": self.amplification,
            "lb_sum": self.lb_sum,
            "thm2_sum": self.thm2_sum,
        }


def _check_star(actions: ActionClass, mu: NDArray, a_star: int) -> None:
    true_star = best_action(actions, mu)
    if a_star != true_star:
        raise PreconditionError(f"a_star={a_star} is not the best action ({true_star})")


def _per_arm_gaps(actions: ActionClass, mu: NDArray, a_star: int) -> NDArray:
    A = actions.actions
    star = A[a_star]
    gaps = (star - A) @ mu
    absdiff = np.abs(star - A)
    differs = absdiff > DIFF_TOL
    ratio = np.full(A.shape, np.inf)
    np.divide(gaps[:, None], absdiff, out=ratio, where=differs)
    return ratio.min(axis=0)


def per_arm_gap(actions: ActionClass, mu: ArrayLike, a_star: int, s: int) -> float:
    """Smallest normalized advantage of ``pi*`` over actions differing on arm ``s``."""
    mu = np.asarray(mu, dtype=np.float64)
    _check_star(actions, mu, a_star)
    if not 0 <= s < actions.d:
        raise IndexError(f"arm {s} out of range")
    return float(_per_arm_gaps(actions, mu, a_star)[s])


def _v_all(actions: ActionClass, a_star: int) -> NDArray:
    A = actions.actions
    star = A[a_star]
    stardiff = np.abs(star - A)
    out = np.zeros(actions.d)
    for k in range(actions.K):
        M = np.abs(A[k] - A)
        inner = (M * M.sum(axis=1)[:, None]).max(axis=0)
        sd = stardiff[k]
        differs = sd > DIFF_TOL
        if differs.any():
            vals = inner[differs] / (sd[differs] * sd[differs])
            out[differs] = np.maximum(out[differs], vals)
    return out


def v_constant(actions: ActionClass, a_star: int, s: int) -> float:
    """Action-geometry factor ``V_s`` (0 when no action differs from ``pi*`` on ``s``)."""
    if not 0 <= s < actions.d:
        raise IndexError(f"arm {s} out of range")
    return float(_v_all(actions, a_star)[s])


def amplification_constant(actions: ActionClass) -> float:
    """Largest cross-coordinate difference ratio over all action pairs."""
    A = actions.actions
    best = 0.0
    for k in range(actions.K - 1):
        M = np.abs(A[k + 1 :] - A[k])
        nz = np.where(M > DIFF_TOL, M, np.inf).min(axis=1)
        ok = np.isfinite(nz)
        if ok.any():
            best = max(best, float((M.max(axis=1)[ok] / nz[ok]).max()))
    return best


def hardness_profile(actions: ActionClass, mu: ArrayLike) -> HardnessProfile:
    mu = np.asarray(mu, dtype=np.float64)
    a_star = best_action(actions, mu)
    delta_s = _per_arm_gaps(actions, mu, a_star)
    v_s = _v_all(actions, a_star)
    finite = np.isfinite(delta_s)
    lb_sum = float(np.sum(1.0 / delta_s[finite] ** 2))
    thm2_sum = float(np.sum(v_s[finite] / delta_s[finite] ** 2))
    return HardnessProfile(a_star, delta_s, v_s, amplification_constant(actions), lb_sum, thm2_sum)


def lemma2_threshold(V_p: float, delta_p: float, R: float, K: int, delta: float, t: int, A: float) -> float:
    """Pull count at which arm ``p`` can no longer be selected at round ``t``."""
    if t < 1:
        raise PreconditionError("t must be >= 1")
    if math.isinf(delta_p):
        return math.inf
    return R * R * 8.0 * V_p / (delta_p * delta_p) * math.log(2.0 * K * K * float(t) ** 2 / delta) + A


@dataclass(frozen=True)
class PullViolation:
    t: int
    p: int
    count: int
    threshold: float


def audit_lemma2(record: RunRecord, profile: HardnessProfile, R: float, K: int, delta: float) -> list[PullViolation]:
    """Pulls made while the arm's count already met its threshold.

    Counts are rebuilt from the trace, so it must be a full trace.
    """
    if not record.full_trace:
        raise PreconditionError("audit_lemma2 needs a full (non-downsampled) trace")
    d = profile.d
    counts = np.ones(d, dtype=np.int64)
    out = []
    for t, p in zip(record.trace.t.tolist(), record.trace.p.tolist()):
        thr = lemma2_threshold(profile.v_s[p], profile.delta_s[p], R, K, delta, t, profile.amplification)
        if counts[p] >= thr:
            out.append(PullViolation(t, p, int(counts[p]), thr))
        counts[p] += 1
    return out


def theorem2_bound(profile: HardnessProfile, R: float, K: int, delta: float, C: float) -> float:
    """High-probability bound on the stopping time for a caller-supplied ``C``."""
    if not C > 0:
        raise ValueError("C must be positive")
    if not math.isfinite(profile.thm2_sum):
        raise ValueError("thm2_sum must be finite")
    return 8.0 * R * R * profile.thm2_sum * math.log(2.0 * K * K * C * C / delta) + profile.amplification * profile.d
