import copy

import numpy as np
import pytest

from conftest import jittered_model
from stylealign import data, training
from stylealign.model import (
    CheckpointError,
    Model,
    ModelError,
    ProjectionHead,
    init_model,
    load_checkpoint,
    model_backward,
    project,
    save_checkpoint,
)


def identity_head(d):
    return ProjectionHead(
        W1=np.eye(d), b1=np.zeros(d), W2=np.eye(d), b2=np.zeros(d)
    )


class TestInit:
    def test_same_seed_bit_identical(self):
        a = init_model(5, 7, d=4, seed=3)
        b = init_model(5, 7, d=4, seed=3)
        for pa, pb in zip(
            training.model_params(a).values(), training.model_params(b).values()
        ):
            assert np.array_equal(pa, pb)

    def test_param_count(self):
        m = init_model(8, 8, d=16, hidden=32, seed=0)
        assert m.speech_head.n_params() == 8 * 32 + 32 + 32 * 16 + 16

    def test_default_log_tau(self):
        m = init_model(4, 4, d=4, seed=0)
        assert m.tau == pytest.approx(1 / 0.07)

    def test_invalid_dims(self):
        with pytest.raises(ModelError):
            init_model(0, 4, d=4, seed=0)


class TestProject:
    def test_identity_head_normalizes(self):
        head = identity_head(2)
        out = project(head, np.array([[3.0, 4.0]]))
        assert np.allclose(out, [[0.6, 0.8]])

    def test_unit_norm_postcondition(self, rng):
        m = jittered_model(7, 7, d=3, hidden=4, seed=1)
        X = rng.normal(size=(20, 7))
        out = project(m.speech_head, X)
        assert np.max(np.abs(np.linalg.norm(out, axis=1) - 1.0)) <= 1e-6

    def test_matches_naive_oracle(self, rng):
        m = jittered_model(7, 7, d=3, hidden=4, seed=2)
        head = m.speech_head
        X = rng.normal(size=(5, 7))
        out = project(head, X)
        # straight-line recomputation, element by element
        for i in range(5):
            h = np.array([max(0.0, sum(X[i][k] * head.W1[k][j] for k in range(7)) + head.b1[j])
                          for j in range(4)])
            v = np.array([sum(h[j] * head.W2[j][o] for j in range(4)) + head.b2[o]
                          for o in range(3)])
            u = v / np.linalg.norm(v)
            assert np.allclose(out[i], u, rtol=1e-6)

    def test_scale_invariance(self, rng):
        m = jittered_model(6, 6, d=4, hidden=5, seed=3)
        head = m.speech_head
        X = rng.normal(size=(8, 6))
        base = project(head, X)
        scaled = ProjectionHead(W1=head.W1, b1=head.b1, W2=3.5 * head.W2, b2=3.5 * head.b2)
        assert np.allclose(project(scaled, X), base, atol=1e-12)

    def test_non_finite_input_rejected(self):
        head = identity_head(2)
        with pytest.raises(ModelError):
            project(head, np.array([[np.nan, 1.0]]))


class TestBackward:
    def test_normalization_jacobian_hand_case(self):
        # v = [3,4], u = [0.6,0.8], ||v|| = 5; upstream [1,0]
        # (I - uu^T)/||v|| @ [1,0] = [ (1-0.36)/5, -0.48/5 ] = [0.128, -0.096]
        head = identity_head(2)
        X = np.array([[3.0, 4.0]])
        _, dX = model_backward(head, X, np.array([[1.0, 0.0]]))
        assert np.allclose(dX, [[0.128, -0.096]])

    def test_zero_upstream(self, rng):
        m = jittered_model(5, 5, d=3, hidden=4, seed=4)
        grads, dX = model_backward(m.speech_head, rng.normal(size=(6, 5)), np.zeros((6, 3)))
        assert np.allclose(dX, 0)
        assert all(np.allclose(g, 0) for g in grads.values())

    def test_matches_finite_differences(self, rng):
        m = jittered_model(5, 5, d=3, hidden=4, seed=5)
        head = m.speech_head
        X = rng.normal(size=(4, 5))
        upstream = rng.normal(size=(4, 3))
        grads, dX = model_backward(head, X, upstream)
        h = 1e-5

        def loss():
            return float(np.sum(upstream * project(head, X)))

        for name in ("W1", "b1", "W2", "b2"):
            p = getattr(head, name).reshape(-1)
            g = grads[name].reshape(-1)
            for i in range(p.size):
                orig = p[i]
                p[i] = orig + h
                lp = loss()
                p[i] = orig - h
                lm = loss()
                p[i] = orig
                fd = (lp - lm) / (2 * h)
                assert abs(g[i] - fd) / max(abs(g[i]), abs(fd), 1e-5) < 1e-4
        Xf = X.reshape(-1)
        dXf = dX.reshape(-1)
        for i in range(Xf.size):
            orig = Xf[i]
            Xf[i] = orig + h
            lp = loss()
            Xf[i] = orig - h
            lm = loss()
            Xf[i] = orig
            fd = (lp - lm) / (2 * h)
            assert abs(dXf[i] - fd) / max(abs(dXf[i]), abs(fd), 1e-5) < 1e-4

    def test_shape_mismatch(self):
        head = identity_head(2)
        with pytest.raises(ModelError):
            model_backward(head, np.ones((2, 2)), np.ones((3, 2)))


class TestFiniteDiffCheck:
    def make_batch(self, rng, task, n, d_in):
        kw = dict(
            clip_ids=tuple(str(i) for i in range(n)),
            speech=rng.normal(size=(n, d_in)),
            text_a=rng.normal(size=(n, d_in)),
            speech_rows=tuple(range(n)),
            text_a_rows=tuple(range(n)),
        )
        if task == data.STAGE1:
            return data.Batch(task=task, text_b=None, text_b_rows=None, **kw)
        return data.Batch(
            task=task, text_b=rng.normal(size=(n, d_in)), text_b_rows=tuple(range(n)), **kw
        )

    def test_stage1(self, rng):
        m = jittered_model(8, 8, d=4, hidden=6, seed=3)
        batch = self.make_batch(rng, data.STAGE1, 4, 8)
        assert training.finite_diff_check(m, batch, h=1e-5) < 1e-4

    def test_stage2(self, rng):
        m = jittered_model(8, 8, d=4, hidden=6, seed=3)
        batch = self.make_batch(rng, data.TASK1, 4, 8)
        assert training.finite_diff_check(m, batch, h=1e-5, lam=0.5) < 1e-4

    def test_zero_step_rejected(self, rng):
        m = jittered_model(8, 8, d=4, hidden=6, seed=3)
        batch = self.make_batch(rng, data.STAGE1, 4, 8)
        with pytest.raises(training.TrainingError):
            training.finite_diff_check(m, batch, h=0.0)


class TestCheckpoint:
    def test_save_load_bit_exact(self, tmp_path):
        m = jittered_model(5, 7, d=4, hidden=6, seed=9)
        m.log_tau = 1.234567890123
        save_checkpoint(m, tmp_path / "m.ckpt")
        loaded = load_checkpoint(tmp_path / "m.ckpt")
        for a, b in zip(
            training.model_params(m).values(), training.model_params(loaded).values()
        ):
            assert np.array_equal(a, b)
        assert loaded.log_tau == m.log_tau

    def test_dim_mismatch_names_dims(self, tmp_path):
        m = init_model(5, 7, d=4, seed=0)
        save_checkpoint(m, tmp_path / "m.ckpt")
        with pytest.raises(CheckpointError, match=r"\(6, 7\).*\(5, 7\)"):
            load_checkpoint(tmp_path / "m.ckpt", expect_dims=(6, 7))

    def test_not_a_checkpoint(self, tmp_path):
        (tmp_path / "junk").write_bytes(b"nope")
        with pytest.raises(CheckpointError):
            load_checkpoint(tmp_path / "junk")

    def test_resume_equals_straight_run(self, small_dataset):
        cfg_full = training.StageCfg(steps=20, batch_size=8, learning_rate=1e-3, seed=4)
        m_a = init_model(12, 10, d=6, seed=1)
        m_a, _, _ = training.run_stage1(m_a, small_dataset, cfg_full)

        m_b = init_model(12, 10, d=6, seed=1)
        m_b, _, st = training.run_stage1(m_b, small_dataset, cfg_full, stop_step=10)
        m_b, _, _ = training.run_stage1(m_b, small_dataset, cfg_full, opt_state=st, start_step=10)
        for a, b in zip(
            training.model_params(m_a).values(), training.model_params(m_b).values()
        ):
            assert np.array_equal(a, b)
        assert m_a.log_tau == m_b.log_tau
