import math

import numpy as np
import pytest

from conftest import random_unit_rows
from stylealign.losses import (
    LossInputError,
    soft_cross_entropy,
    soft_targets,
    stage1_loss,
    stage2_loss,
    t2a_targets,
)


def naive_stage1(S, T, tau):
    """Per-element re-computation of the symmetric InfoNCE value."""
    n = S.shape[0]
    total = 0.0
    for i in range(n):
        num = math.exp(np.dot(S[i], T[i]) / tau)
        den_a = sum(math.exp(np.dot(S[i], T[j]) / tau) for j in range(n))
        den_t = sum(math.exp(np.dot(T[i], S[j]) / tau) for j in range(n))
        total += math.log(num / den_a) + math.log(num / den_t)
    return -total / (2 * n)


class TestStage1:
    def test_single_pair_is_zero(self, rng):
        S = random_unit_rows(rng, 1, 4)
        T = random_unit_rows(rng, 1, 4)
        assert stage1_loss(S, T, 1.0).value == pytest.approx(0.0, abs=1e-12)

    def test_orthonormal_matched_closed_form(self):
        S = np.eye(2)
        T = np.eye(2)
        expected = math.log(1 + math.exp(-1))
        assert stage1_loss(S, T, 1.0).value == pytest.approx(expected, abs=1e-9)

    def test_matches_naive_oracle(self, rng):
        S = random_unit_rows(rng, 6, 8)
        T = random_unit_rows(rng, 6, 8)
        out = stage1_loss(S, T, 0.3)
        assert out.value == pytest.approx(naive_stage1(S, T, 0.3), rel=1e-12)

    def test_gradients_match_finite_differences(self, rng):
        S = random_unit_rows(rng, 6, 8)
        T = random_unit_rows(rng, 6, 8)
        tau = 0.5
        out = stage1_loss(S, T, tau)
        h = 1e-6
        # embedding gradients: perturb without re-normalizing (the loss is
        # defined on raw rows; normalization is upstream of this function)
        for M, G in ((S, out.d_speech), (T, out.d_text)):
            flat, gflat = M.reshape(-1), G.reshape(-1)
            for i in range(0, flat.size, 7):
                orig = flat[i]
                flat[i] = orig + h
                lp = _value_no_check(S, T, tau)
                flat[i] = orig - h
                lm = _value_no_check(S, T, tau)
                flat[i] = orig
                fd = (lp - lm) / (2 * h)
                assert abs(gflat[i] - fd) / max(abs(gflat[i]), abs(fd), 1e-5) < 1e-4
        log_tau = math.log(tau)
        lp = _value_no_check(S, T, math.exp(log_tau + h))
        lm = _value_no_check(S, T, math.exp(log_tau - h))
        fd = (lp - lm) / (2 * h)
        assert abs(out.d_log_tau - fd) / max(abs(out.d_log_tau), abs(fd), 1e-5) < 1e-4

    def test_rejects_non_unit_rows(self, rng):
        S = 2.0 * random_unit_rows(rng, 3, 4)
        with pytest.raises(LossInputError):
            stage1_loss(S, random_unit_rows(rng, 3, 4), 1.0)

    def test_rejects_nonpositive_tau(self, rng):
        S = random_unit_rows(rng, 3, 4)
        with pytest.raises(LossInputError):
            stage1_loss(S, S, 0.0)

    def test_value_nonnegative(self, rng):
        for seed in range(10):
            r = np.random.default_rng(seed)
            S = random_unit_rows(r, 5, 6)
            T = random_unit_rows(r, 5, 6)
            assert stage1_loss(S, T, 0.7).value >= 0

    def test_permutation_equivariance(self, rng):
        S = random_unit_rows(rng, 7, 5)
        T = random_unit_rows(rng, 7, 5)
        perm = rng.permutation(7)
        a = stage1_loss(S, T, 0.4).value
        b = stage1_loss(S[perm], T[perm], 0.4).value
        assert a == pytest.approx(b, rel=1e-12)

    def test_high_temperature_limit(self, rng):
        n = 6
        S = random_unit_rows(rng, n, 8)
        T = random_unit_rows(rng, n, 8)
        assert stage1_loss(S, T, 1e6).value == pytest.approx(math.log(n), abs=1e-3)


def _value_no_check(S, T, tau):
    n = S.shape[0]
    Z = S @ T.T / tau
    lsm_r = Z - np.log(np.exp(Z - Z.max(1, keepdims=True)).sum(1, keepdims=True)) - Z.max(1, keepdims=True)
    Zt = Z.T
    lsm_c = Zt - np.log(np.exp(Zt - Zt.max(1, keepdims=True)).sum(1, keepdims=True)) - Zt.max(1, keepdims=True)
    return 0.5 * (-np.mean(np.diag(lsm_r)) - np.mean(np.diag(lsm_c)))


def _stage2_value_no_check(S, T, tau, lam):
    n = S.shape[0]
    Z = S @ T.T / tau
    D = soft_targets(n, lam)
    Dp = t2a_targets(n)

    def ce(logits, targets):
        sm = logits - logits.max(1, keepdims=True)
        lsm = sm - np.log(np.exp(sm).sum(1, keepdims=True))
        return float(-(targets * lsm).sum(1).mean())

    return 0.5 * (ce(Z, D) + ce(Z.T, Dp))


class TestTargets:
    def test_soft_targets_n2_half(self):
        D = soft_targets(2, 0.5)
        assert np.array_equal(D, [[0.5, 0, 0.5, 0], [0, 0.5, 0, 0.5]])

    def test_lambda_one_left_identity(self):
        D = soft_targets(3, 1.0)
        assert np.array_equal(D[:, :3], np.eye(3))
        assert np.all(D[:, 3:] == 0)

    @pytest.mark.parametrize("n", range(1, 17))
    def test_rows_sum_to_one_exactly(self, n):
        for lam in (0.0, 0.3, 0.5, 1.0):
            assert np.all(soft_targets(n, lam).sum(axis=1) == 1.0)
        assert np.all(t2a_targets(n).sum(axis=1) == 1.0)
        assert np.all(t2a_targets(n).sum(axis=0) == 2.0)

    def test_t2a_structure(self):
        D = t2a_targets(2)
        assert np.array_equal(D, [[1, 0], [0, 1], [1, 0], [0, 1]])
        assert np.array_equal(t2a_targets(1), [[1.0], [1.0]])

    def test_lambda_out_of_range(self):
        with pytest.raises(LossInputError):
            soft_targets(2, 1.5)


class TestSoftCrossEntropy:
    def test_uniform_logits(self, rng):
        logits = np.full((3, 5), 2.7)
        targets = rng.dirichlet(np.ones(5), size=3)
        assert soft_cross_entropy(logits, targets) == pytest.approx(math.log(5))

    def test_large_margin_goes_to_zero(self):
        logits = np.array([[10.0, 0.0, 0.0]])
        targets = np.array([[1.0, 0.0, 0.0]])
        assert soft_cross_entropy(logits, targets) < 1e-4

    def test_gibbs_inequality(self, rng):
        for _ in range(20):
            logits = rng.normal(size=(4, 6))
            targets = rng.dirichlet(np.ones(6), size=4)
            h = float(-(targets * np.log(targets)).sum(1).mean())
            assert soft_cross_entropy(logits, targets) >= h - 1e-12

    def test_rejects_non_stochastic_targets(self):
        with pytest.raises(LossInputError):
            soft_cross_entropy(np.zeros((1, 3)), np.array([[0.5, 0.2, 0.2]]))


class TestStage2:
    def test_duplicate_positive_closed_form(self):
        S = np.array([[1.0, 0.0]])
        T = np.array([[1.0, 0.0], [1.0, 0.0]])  # t == t-hat == s
        out = stage2_loss(S, T, 1.0, 0.5)
        assert out.extras["a2t"] == pytest.approx(math.log(2), abs=1e-9)
        assert out.extras["t2a"] == pytest.approx(0.0, abs=1e-9)
        assert out.value == pytest.approx(0.5 * math.log(2), abs=1e-9)

    def test_swap_symmetry_at_half(self, rng):
        n = 4
        S = random_unit_rows(rng, n, 6)
        Ta = random_unit_rows(rng, n, 6)
        Tb = random_unit_rows(rng, n, 6)
        a = stage2_loss(S, np.vstack([Ta, Tb]), 0.8, 0.5).value
        b = stage2_loss(S, np.vstack([Tb, Ta]), 0.8, 0.5).value
        assert a == pytest.approx(b, rel=1e-12)

    def test_matches_naive_value(self, rng):
        n = 5
        S = random_unit_rows(rng, n, 8)
        T = random_unit_rows(rng, 2 * n, 8)
        out = stage2_loss(S, T, 0.4, 0.3)
        assert out.value == pytest.approx(_stage2_value_no_check(S, T, 0.4, 0.3), rel=1e-12)

    def test_gradients_match_finite_differences(self, rng):
        n = 5
        S = random_unit_rows(rng, n, 8)
        T = random_unit_rows(rng, 2 * n, 8)
        tau, lam = 0.6, 0.3
        out = stage2_loss(S, T, tau, lam)
        h = 1e-6
        for M, G in ((S, out.d_speech), (T, out.d_text)):
            flat, gflat = M.reshape(-1), G.reshape(-1)
            for i in range(0, flat.size, 5):
                orig = flat[i]
                flat[i] = orig + h
                lp = _stage2_value_no_check(S, T, tau, lam)
                flat[i] = orig - h
                lm = _stage2_value_no_check(S, T, tau, lam)
                flat[i] = orig
                fd = (lp - lm) / (2 * h)
                assert abs(gflat[i] - fd) / max(abs(gflat[i]), abs(fd), 1e-5) < 1e-4
        log_tau = math.log(tau)
        lp = _stage2_value_no_check(S, T, math.exp(log_tau + h), lam)
        lm = _stage2_value_no_check(S, T, math.exp(log_tau - h), lam)
        fd = (lp - lm) / (2 * h)
        assert abs(out.d_log_tau - fd) / max(abs(out.d_log_tau), abs(fd), 1e-5) < 1e-4

    def test_entropy_floor(self, rng):
        for lam in (0.2, 0.5, 0.8):
            floor = -lam * math.log(lam) - (1 - lam) * math.log(1 - lam)
            for seed in range(5):
                r = np.random.default_rng(seed)
                S = random_unit_rows(r, 4, 6)
                T = random_unit_rows(r, 8, 6)
                assert stage2_loss(S, T, 0.7, lam).extras["a2t"] >= floor - 1e-12

    def test_permutation_equivariance(self, rng):
        n = 6
        S = random_unit_rows(rng, n, 5)
        Ta = random_unit_rows(rng, n, 5)
        Tb = random_unit_rows(rng, n, 5)
        perm = rng.permutation(n)
        a = stage2_loss(S, np.vstack([Ta, Tb]), 0.5, 0.4).value
        b = stage2_loss(S[perm], np.vstack([Ta[perm], Tb[perm]]), 0.5, 0.4).value
        assert a == pytest.approx(b, rel=1e-12)

    def test_high_temperature_limit(self, rng):
        n = 5
        S = random_unit_rows(rng, n, 8)
        T = random_unit_rows(rng, 2 * n, 8)
        out = stage2_loss(S, T, 1e6, 0.5)
        assert out.extras["a2t"] == pytest.approx(math.log(2 * n), abs=1e-3)

    def test_lambda_one_reduces_to_stage1_a2t_on_first_block(self, rng):
        n = 6
        S = random_unit_rows(rng, n, 7)
        T1 = random_unit_rows(rng, n, 7)
        tau = 0.9
        # audio-to-text half of stage 1 == CE with one-hot targets on the
        # first caption block when the duplicate columns are dropped
        Z = S @ T1.T / tau
        assert stage1_loss(S, T1, tau).extras["a2t"] == pytest.approx(
            soft_cross_entropy(Z, np.eye(n)), rel=1e-12
        )

    def test_shape_mismatch(self, rng):
        S = random_unit_rows(rng, 3, 4)
        with pytest.raises(LossInputError):
            stage2_loss(S, random_unit_rows(rng, 5, 4), 1.0, 0.5)
