import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from peginhole.lstm_q import (QNetwork, TrainingError, backward_update, batch_update, greedy_action, td_target)


def reference_q(net: QNetwork, seq) -> np.ndarray:
    """Plain per-step LSTM written out gate by gate, independent of the batched code."""
    def sig(z):
        return 1.0 / (1.0 + math.exp(-z))

    def cell(W, b, H, x, h, c):
        z = W @ np.concatenate([x, h]) + b
        i = np.array([sig(v) for v in z[0:H]])
        f = np.array([sig(v) for v in z[H:2 * H]])
        o = np.array([sig(v) for v in z[2 * H:3 * H]])
        g = np.array([math.tanh(v) for v in z[3 * H:4 * H]])
        c = f * c + i * g
        h = o * np.array([math.tanh(v) for v in c])
        return h, c

    h1 = np.zeros(net.h1)
    c1 = np.zeros(net.h1)
    h2 = np.zeros(net.h2)
    c2 = np.zeros(net.h2)
    for x in np.asarray(seq, float):
        h1, c1 = cell(net.W1, net.b1, net.h1, x / net.input_scale, h1, c1)
        h2, c2 = cell(net.W2, net.b2, net.h2, h1, h2, c2)
    return net.Wq @ h2 + net.bq


def tiny(seed, n_actions=4, h=2):
    rng = np.random.default_rng(seed)
    net = QNetwork(7, h, h, n_actions, input_scale=np.ones(7))
    net.theta[:] = rng.normal(0.0, 0.5, net.n_params)
    return net, rng


class TestForward:
    def test_zero_weights_give_head_bias(self):
        net = QNetwork(7, 20, 15, 4)
        net.bq[:] = [0.1, -0.2, 0.3, 0.4]
        q, _ = net.forward(np.random.default_rng(0).normal(size=(5, 7)))
        np.testing.assert_array_equal(q, net.bq)

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_reference(self, seed):
        net, rng = tiny(seed)
        seq = rng.normal(size=(3, 7))
        np.testing.assert_allclose(net.forward(seq)[0], reference_q(net, seq), atol=1e-12, rtol=0)

    def test_full_size_matches_reference(self):
        net = QNetwork(rng=np.random.default_rng(3))
        seq = np.random.default_rng(4).normal(size=(8, 7)) * [5, 5, 20, 0.05, 0.05, 3, 3]
        np.testing.assert_allclose(net.forward(seq)[0], reference_q(net, seq), atol=1e-12, rtol=0)

    def test_deterministic_and_pure(self):
        net, rng = tiny(1)
        seq = rng.normal(size=(4, 7))
        before = net.theta.copy()
        a = net.forward(seq)[0]
        b = net.forward(seq)[0]
        assert a.tobytes() == b.tobytes()
        assert net.theta.tobytes() == before.tobytes()

    def test_dimension_mismatch(self):
        net, _ = tiny(0)
        with pytest.raises(ValueError):
            net.forward(np.zeros((3, 6)))
        with pytest.raises(ValueError):
            net.forward(np.zeros((0, 7)))

    def test_left_padding_equals_shorter_sequence(self):
        net, rng = tiny(2)
        X = rng.normal(size=(1, 6, 7))
        mask = np.array([[0, 0, 0, 1, 1, 1.0]])
        q_pad = net.q_batch(X, mask)[0, -1]
        q_short = net.forward(X[0, 3:])[0]
        np.testing.assert_array_equal(q_pad, q_short)

    def test_recurrent_state_shapes(self):
        net = QNetwork(rng=np.random.default_rng(0))
        _, state = net.forward(np.zeros((2, 7)))
        assert state.h1.shape == (20,) and state.c2.shape == (15,)

    def test_init_ranges(self):
        net = QNetwork(rng=np.random.default_rng(0))
        assert np.abs(net.W1).max() <= 1 / math.sqrt(27)
        assert np.all(net.b1[20:40] == 1.0) and np.all(net.b2[15:30] == 1.0)
        assert np.all(net.bq == 0.0)


class TestGradient:
    @pytest.mark.parametrize("seed", range(4))
    def test_finite_differences_every_parameter(self, seed):
        net, rng = tiny(seed)
        X = rng.normal(size=(1, 3, 7))
        a = int(rng.integers(4))
        g = net.grad_q(X, None, 2, [a], [1.0])
        eps = 1e-5
        num = np.empty_like(g)
        for k in range(net.n_params):
            old = net.theta[k]
            net.theta[k] = old + eps
            qp = net.forward(X[0])[0][a]
            net.theta[k] = old - eps
            qm = net.forward(X[0])[0][a]
            net.theta[k] = old
            num[k] = (qp - qm) / (2 * eps)
        rel = np.abs(g - num) / np.maximum(np.abs(g) + np.abs(num), 1e-8)
        assert rel.max() < 1e-4
        for name, view in net.views(g).items():
            assert np.any(view != 0.0), f"{name} gets no gradient"

    def test_masked_batch_gradient(self):
        net, rng = tiny(7)
        X = rng.normal(size=(3, 4, 7))
        mask = np.array([[0, 0, 1, 1], [0, 1, 1, 1], [1, 1, 1, 1.0]])
        acts = [0, 1, 3]
        w = np.array([0.3, -1.0, 2.0])
        g = net.grad_q(X, mask, 3, acts, w)

        def f():
            q = net.q_batch(X, mask)[:, 3]
            return sum(w[b] * q[b, acts[b]] for b in range(3))

        eps = 1e-5
        num = np.empty_like(g)
        for k in range(net.n_params):
            old = net.theta[k]
            net.theta[k] = old + eps
            p = f()
            net.theta[k] = old - eps
            m = f()
            net.theta[k] = old
            num[k] = (p - m) / (2 * eps)
        np.testing.assert_allclose(g, num, atol=1e-8)


class TestUpdates:
    def test_td_target_examples(self):
        assert td_target(0.75, [5, 6], 0.9, True) == 0.75
        assert td_target(0.0, [1, 2, 3], 0.9, False) == pytest.approx(2.7)
        assert td_target(0.3, [10, 20], 0.0, False) == 0.3
        with pytest.raises(ValueError):
            td_target(0.0, [1.0], 1.0, False)

    def test_greedy_examples(self):
        assert greedy_action([0.1, 0.9, 0.3, 0.2]) == 1
        assert greedy_action([0.5, 0.5, 0.1, 0.1]) == 0
        with pytest.raises(ValueError):
            greedy_action([])

    @given(st.lists(st.floats(-10, 10), min_size=1, max_size=6), st.floats(-100, 100))
    def test_greedy_shift_invariant(self, q, c):
        shifted = np.asarray(q) + c
        if np.unique(shifted).size == len(q) and np.unique(q).size == len(q):
            assert greedy_action(shifted) == greedy_action(q)

    def test_zero_error_leaves_theta(self):
        net, rng = tiny(0)
        seq = rng.normal(size=(2, 7))
        q = net.forward(seq)[0]
        before = net.theta.copy()
        backward_update(net, seq, 1, float(q[1]), alpha=0.1)
        assert net.theta.tobytes() == before.tobytes()

    def test_converges_monotonically_to_target(self):
        net, rng = tiny(5)
        seq = rng.normal(size=(2, 7))
        target = float(net.forward(seq)[0][2]) + 1.0
        gaps = []
        for _ in range(200):
            backward_update(net, seq, 2, target, alpha=0.01)
            gaps.append(abs(target - net.forward(seq)[0][2]))
        assert all(b <= a for a, b in zip(gaps, gaps[1:]))
        assert gaps[-1] < 0.5 * gaps[0]

    def test_bad_arguments(self):
        net, _ = tiny(0)
        with pytest.raises(ValueError):
            backward_update(net, np.zeros((2, 7)), 4, 0.0, 0.1)
        with pytest.raises(ValueError):
            backward_update(net, np.zeros((2, 7)), 0, 0.0, 0.0)

    def test_nonfinite_gradient_is_reported(self):
        net, _ = tiny(0)
        g = np.zeros(net.n_params)
        g[-1] = np.nan
        with pytest.raises(TrainingError, match="bq"):
            net.sgd_step(g, 0.1)

    def test_clipping(self):
        net, _ = tiny(0)
        before = net.theta.copy()
        g = np.ones(net.n_params) * 10
        norm = net.sgd_step(g, 1.0, clip_norm=1.0)
        assert norm == pytest.approx(10 * math.sqrt(net.n_params))
        assert np.linalg.norm(net.theta - before) == pytest.approx(1.0)

    def test_td_update_matches_explicit_targets(self):
        net, rng = tiny(9)
        twin = net.copy()
        X = rng.normal(size=(5, 4, 7))
        acts = rng.integers(0, 4, 5)
        r = rng.uniform(-1, 1, 5)
        term = np.array([0, 1, 0, 0, 1], bool)
        q_next = twin.q_batch(X)[:, -1]
        targets = [td_target(r[b], q_next[b], 0.9, term[b]) for b in range(5)]
        net.td_update(X, None, acts, r, term, 0.9, 0.05, clip_norm=None)
        batch_update(twin, X, None, acts, targets, 0.05, clip_norm=None, pos=2)
        np.testing.assert_allclose(net.theta, twin.theta, atol=1e-14)


class TestPersistence:
    def test_round_trip_bit_exact(self, tmp_path):
        net = QNetwork(n_actions=5, rng=np.random.default_rng(1))
        net.save(tmp_path / "n.wts")
        back = QNetwork.load(tmp_path / "n.wts")
        assert back.theta.tobytes() == net.theta.tobytes()
        assert back.input_scale.tobytes() == net.input_scale.tobytes()
        assert (back.n_in, back.h1, back.h2, back.n_actions) == (7, 20, 15, 5)

    def test_corrupt_files(self):
        net = QNetwork(rng=np.random.default_rng(1))
        data = net.to_bytes()
        with pytest.raises(ValueError):
            QNetwork.from_bytes(b"XXXX" + data[4:])
        with pytest.raises(ValueError):
            QNetwork.from_bytes(data[:-8])

    @settings(max_examples=20, deadline=None)
    @given(st.integers(1, 6), st.integers(1, 6), st.integers(1, 6))
    def test_round_trip_any_shape(self, h1, h2, na):
        net = QNetwork(7, h1, h2, na, rng=np.random.default_rng(h1 * 100 + h2 * 10 + na))
        back = QNetwork.from_bytes(net.to_bytes())
        assert back.to_bytes() == net.to_bytes()
