"""Hardness constants, the per-pull threshold audit and the stopping-time bound."""

from __future__ import annotations

import math

import mpmath as mp
import numpy as np
import pytest
from scipy.stats import spearmanr

from _reference import hardness_brute
from combgape import (
    ActionClass,
    BanditInstance,
    DegenerateInstance,
    NoiseSpec,
    PreconditionError,
    StrategyKind,
    Termination,
    run,
)
from combgape.algorithm import RunRecord, Trace
from combgape.analysis import (
    HardnessProfile,
    amplification_constant,
    audit_lemma2,
    hardness_profile,
    lemma2_threshold,
    per_arm_gap,
    theorem2_bound,
    v_constant,
)
from combgape.oracles import generate_knapsack_experiment


class TestPerArmGap:
    def test_standard_basis(self):
        actions = ActionClass(np.eye(2))
        assert per_arm_gap(actions, [1.0, 0.5], 0, 0) == 0.5
        assert per_arm_gap(actions, [1.0, 0.5], 0, 1) == 0.5

    def test_shared_coordinate(self):
        actions = ActionClass(np.array([[1.0, 0.0, 3.0], [0.0, 1.0, 3.0]]))
        assert per_arm_gap(actions, [2.0, 1.0, 5.0], 0, 2) == math.inf

    def test_wrong_star(self):
        with pytest.raises(PreconditionError):
            per_arm_gap(ActionClass(np.eye(2)), [1.0, 0.5], 1, 0)

    def test_tie(self):
        with pytest.raises(DegenerateInstance):
            hardness_profile(ActionClass(np.eye(2)), [1.0, 1.0])


class TestVConstant:
    @pytest.mark.parametrize("d", range(2, 11))
    def test_standard_basis(self, d):
        actions = ActionClass(np.eye(d))
        mu = np.linspace(1.0, 0.1, d)
        prof = hardness_profile(actions, mu)
        np.testing.assert_array_equal(prof.v_s, 2.0)
        assert prof.amplification == 1.0
        assert v_constant(actions, prof.a_star, d - 1) == 2.0

    def test_no_differing_action(self):
        actions = ActionClass(np.array([[1.0, 0.0, 3.0], [0.0, 1.0, 3.0]]))
        assert v_constant(actions, 0, 2) == 0.0


class TestAmplification:
    def test_illustrative_pair(self):
        actions = ActionClass(np.array([[100.0, 0.0, 0.1], [0.0, 100.0, 0.2]]))
        assert amplification_constant(actions) == pytest.approx(1000.0, rel=1e-12)

    def test_single_coordinate_pair(self):
        actions = ActionClass(np.array([[1.0, 2.0, 3.0], [1.0, 2.0, 7.0]]))
        assert amplification_constant(actions) == 1.0


class TestAgainstBruteForce:
    def test_random_instances(self):
        rng = np.random.default_rng(404)
        for trial in range(50):
            K, d = int(rng.integers(2, 30)), int(rng.integers(2, 12))
            if trial % 2:
                A = rng.integers(0, 4, size=(K, d)).astype(float)
            else:
                A = rng.normal(size=(K, d)).round(2)
            A = np.unique(A, axis=0)
            if A.shape[0] < 2:
                continue
            actions = ActionClass(A)
            mu = rng.normal(size=d)
            prof = hardness_profile(actions, mu)
            star, gaps, vs, amp = hardness_brute(A, mu)
            assert prof.a_star == star
            fin = np.isfinite(gaps)
            np.testing.assert_array_equal(np.isfinite(prof.delta_s), fin)
            np.testing.assert_allclose(prof.delta_s[fin], gaps[fin], rtol=0, atol=1e-12)
            np.testing.assert_allclose(prof.v_s, vs, rtol=1e-12, atol=1e-12)
            assert prof.amplification == pytest.approx(amp, rel=1e-12)
            assert np.all(prof.delta_s[fin] > 0)

    def test_scale_covariance(self):
        rng = np.random.default_rng(5)
        gen = generate_knapsack_experiment(6, rng)
        base = hardness_profile(gen.actions, gen.mu)
        for c in (0.1, 3.0, 250.0):
            prof = hardness_profile(gen.actions, c * gen.mu)
            assert prof.a_star == base.a_star
            np.testing.assert_allclose(prof.delta_s, c * base.delta_s, rtol=1e-12)
            np.testing.assert_array_equal(prof.v_s, base.v_s)
            assert prof.amplification == base.amplification

    def test_sums(self):
        actions = ActionClass(np.array([[1.0, 0.0, 5.0], [0.0, 1.0, 5.0], [0.0, 0.0, 5.0]]))
        prof = hardness_profile(actions, [1.0, 0.6, 2.0])
        # per-arm gaps 0.4 and 0.4, third arm shared by all actions
        np.testing.assert_allclose(prof.delta_s[:2], [0.4, 0.4])
        assert prof.delta_s[2] == math.inf
        assert prof.lb_sum == pytest.approx(2 / 0.16)
        assert prof.thm2_sum == pytest.approx(float(np.sum(prof.v_s[:2])) / 0.16)


class TestLemma2Threshold:
    def test_frozen_value(self):
        thr = lemma2_threshold(2.0, 0.5, 1.0, 2, 0.1, 100, 1.0)
        ref = 64 * mp.log(800000) + 1
        assert thr == pytest.approx(float(ref), rel=1e-14)
        assert thr == pytest.approx(870.9115, abs=5e-5)

    def test_infinite_gap(self):
        assert lemma2_threshold(2.0, math.inf, 1.0, 2, 0.1, 100, 1.0) == math.inf

    def test_doubling_t(self):
        a = lemma2_threshold(3.0, 0.7, 1.5, 4, 0.05, 50, 2.0)
        b = lemma2_threshold(3.0, 0.7, 1.5, 4, 0.05, 100, 2.0)
        assert b - a == pytest.approx(16 * 1.5**2 * 3.0 / 0.49 * math.log(2), rel=1e-12)

    def test_monotone_in_t(self):
        vals = [lemma2_threshold(2.0, 0.3, 1.0, 10, 0.1, t, 1.0) for t in range(1, 200)]
        assert all(b > a for a, b in zip(vals, vals[1:]))

    def test_t_positive(self):
        with pytest.raises(PreconditionError):
            lemma2_threshold(2.0, 0.3, 1.0, 10, 0.1, 0, 1.0)


class TestAuditLemma2:
    def test_noise_free_run(self):
        gen = generate_knapsack_experiment(5, np.random.default_rng(77))
        prof = hardness_profile(gen.actions, gen.mu)
        rec = run(BanditInstance(gen.mu, noise=NoiseSpec.disabled()), gen.actions, 0.1)
        assert audit_lemma2(rec, prof, 1.0, gen.actions.K, 0.1) == []

    def test_injected_pull(self):
        """Arm 0 is pulled until its count first meets the threshold: one violation."""
        actions = ActionClass(np.eye(2))
        prof = hardness_profile(actions, [1.0, 0.5])
        k = 0
        while 1 + k < lemma2_threshold(2.0, 0.5, 1.0, 2, 0.1, 2 + k, 1.0):
            k += 1
        ts = np.arange(2, 3 + k)
        zeros = np.zeros(ts.size)
        trace = Trace(ts, np.zeros_like(ts), np.ones_like(ts), zeros, np.zeros_like(ts), zeros)
        rec = RunRecord(
            tau=int(ts[-1]) + 1,
            a_out=0,
            counts=np.array([k + 2, 1]),
            trace=trace,
            terminated_by=Termination.STOPPED,
            final_B=-1.0,
            strategy=StrategyKind.GAP_WEIGHTED,
            full_trace=True,
            init_rewards=np.zeros(2),
        )
        viol = audit_lemma2(rec, prof, 1.0, 2, 0.1)
        assert len(viol) == 1
        assert (viol[0].t, viol[0].p, viol[0].count) == (2 + k, 0, 1 + k)
        assert viol[0].count >= viol[0].threshold

    def test_needs_full_trace(self):
        gen = generate_knapsack_experiment(5, np.random.default_rng(77))
        prof = hardness_profile(gen.actions, gen.mu)
        rec = run(BanditInstance(gen.mu, seed=1), gen.actions, 0.1, full_trace=False)
        with pytest.raises(PreconditionError):
            audit_lemma2(rec, prof, 1.0, gen.actions.K, 0.1)


class TestTheorem2Bound:
    def test_zero_sum(self):
        prof = HardnessProfile(0, np.array([math.inf, math.inf]), np.zeros(2), 1.5, 0.0, 0.0)
        assert theorem2_bound(prof, 1.0, 2, 0.1, 1.0) == 3.0

    def test_ordinary_mab_specialization(self):
        d = 4
        actions = ActionClass(np.eye(d))
        mu = np.array([1.0, 0.8, 0.5, 0.1])
        prof = hardness_profile(actions, mu)
        C = 1.0 / (d * math.sqrt(2.0))  # makes 2 K^2 C^2 = 1
        bound = theorem2_bound(prof, 1.3, d, 0.05, C)
        gaps = prof.delta_s
        expected = 16 * 1.3**2 * np.sum(1.0 / gaps**2) * math.log(1 / 0.05) + d
        assert bound == pytest.approx(expected, rel=1e-12)

    def test_high_precision(self):
        prof = HardnessProfile(0, np.array([0.3, 0.7]), np.array([3.0, 2.0]), 2.5, 0.0, 3 / 0.09 + 2 / 0.49)
        ref = 8 * mp.mpf(2) ** 2 * (mp.mpf(3) / mp.mpf("0.09") + mp.mpf(2) / mp.mpf("0.49")) * mp.log(
            2 * 25 * mp.mpf(40) ** 2 / mp.mpf("0.01")
        ) + mp.mpf("2.5") * 2
        assert theorem2_bound(prof, 2.0, 5, 0.01, 40.0) == pytest.approx(float(ref), rel=1e-12)

    @pytest.mark.parametrize("C", [0.0, -1.0])
    def test_positive_c(self, C):
        prof = HardnessProfile(0, np.array([0.3, 0.7]), np.array([3.0, 2.0]), 2.5, 0.0, 1.0)
        with pytest.raises(ValueError):
            theorem2_bound(prof, 1.0, 2, 0.1, C)


def test_monotonicity_probe():
    """Mean stopping time rises as the top gap shrinks (rank correlation > 0)."""
    actions = ActionClass(np.eye(3))
    hardness, mean_tau = [], []
    for gap in (0.8, 0.6, 0.45, 0.35, 0.25):
        mu = np.array([1.0, 1.0 - gap, 0.2])
        hardness.append(hardness_profile(actions, mu).thm2_sum)
        taus = [run(BanditInstance(mu, seed=s), actions, 0.1).tau for s in range(30)]
        mean_tau.append(np.mean(taus))
    rho = spearmanr(hardness, mean_tau).statistic
    assert rho > 0
