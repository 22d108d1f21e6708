"""Numeric kernels: forwards vs oracles, backwards vs finite differences."""

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from msfser.errors import NumericalFailure, ShapeMismatch
from msfser.numcore import (
    AdamW,
    Param,
    ccc,
    ccc_columns,
    ccc_loss,
    dropout_bwd,
    dropout_fwd,
    dropout_mask,
    glorot_uniform,
    grad_check,
    layer_norm_bwd,
    layer_norm_fwd,
    linear_bwd,
    linear_fwd,
    load_checkpoint,
    relu,
    relu_bwd,
    save_checkpoint,
    seeded_rng,
    sigmoid,
    sigmoid_bwd,
    softmax,
    softmax_bwd,
    tanh_bwd,
    tanh_fwd,
)


def fd(f, x, eps=1e-6):
    """Central finite-difference gradient of scalar f w.r.t. array x."""
    g = np.zeros_like(x)
    flat_x = x.reshape(-1)
    flat_g = g.reshape(-1)
    for i in range(flat_x.size):
        orig = flat_x[i]
        flat_x[i] = orig + eps
        up = f()
        flat_x[i] = orig - eps
        down = f()
        flat_x[i] = orig
        flat_g[i] = (up - down) / (2.0 * eps)
    return g


def rel_err(a, b):
    scale = max(np.abs(a).max(), np.abs(b).max(), 1e-10)
    return np.abs(a - b).max() / scale


class TestLinear:
    def test_identity_plus_bias(self):
        x = np.array([[1.0, 2.0]])
        w = np.eye(2)
        b = np.array([[3.0, 4.0]])
        assert np.array_equal(linear_fwd(x, w, b), [[4.0, 6.0]])

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            linear_fwd(np.zeros((1, 3)), np.zeros((2, 4)), np.zeros((1, 4)))

    def test_backward_matches_fd(self):
        rng = seeded_rng(1)
        for _ in range(5):
            n, din, dout = (int(rng.integers(1, 5)) for _ in range(3))
            x = rng.standard_normal((n, din))
            w = rng.standard_normal((din, dout))
            b = rng.standard_normal((1, dout))
            r = rng.standard_normal((n, dout))
            loss = lambda: float((linear_fwd(x, w, b) * r).sum())
            dx, dw, db = linear_bwd(x, w, r)
            assert rel_err(dx, fd(loss, x)) <= 1e-7
            assert rel_err(dw, fd(loss, w)) <= 1e-7
            assert rel_err(db, fd(loss, b)) <= 1e-7


class TestActivations:
    def test_sigmoid_range_and_extremes(self):
        x = np.array([[-1000.0, -1.0, 0.0, 1.0, 1000.0]])
        y = sigmoid(x)
        assert y[0, 0] == 0.0 and y[0, 4] == 1.0
        assert y[0, 2] == 0.5
        assert np.all((y >= 0.0) & (y <= 1.0))

    def test_sigmoid_symmetry(self):
        rng = seeded_rng(2)
        x = rng.standard_normal((3, 4))
        assert np.allclose(sigmoid(x) + sigmoid(-x), 1.0, atol=1e-15)

    @pytest.mark.parametrize("name", ["sigmoid", "tanh", "relu"])
    def test_backward_matches_fd(self, name):
        rng = seeded_rng(3)
        x = rng.standard_normal((4, 6)) * 2.0
        x[x == 0.0] = 0.1                  # keep away from the relu kink
        r = rng.standard_normal((4, 6))
        if name == "sigmoid":
            loss = lambda: float((sigmoid(x) * r).sum())
            grad = sigmoid_bwd(sigmoid(x), r)
        elif name == "tanh":
            loss = lambda: float((tanh_fwd(x) * r).sum())
            grad = tanh_bwd(tanh_fwd(x), r)
        else:
            loss = lambda: float((relu(x) * r).sum())
            grad = relu_bwd(x, r)
        assert rel_err(grad, fd(loss, x)) <= 1e-7


class TestSoftmax:
    def test_rows_sum_to_one(self):
        rng = seeded_rng(4)
        y = softmax(rng.standard_normal((8, 5)) * 10.0)
        assert np.abs(y.sum(axis=1) - 1.0).max() <= 1e-12

    def test_no_overflow_on_big_logits(self):
        y = softmax(np.array([[1000.0, 999.0, 998.0]]))
        assert np.all(np.isfinite(y))
        assert abs(y.sum() - 1.0) <= 1e-12

    def test_one_hot_underflow_is_exact(self):
        y = softmax(np.array([[800.0, 0.0, 0.0]]))
        assert np.array_equal(y, [[1.0, 0.0, 0.0]])

    def test_shift_invariance(self):
        rng = seeded_rng(5)
        x = rng.standard_normal((3, 4))
        assert np.allclose(softmax(x), softmax(x + 7.5), atol=1e-15)

    def test_backward_matches_fd(self):
        rng = seeded_rng(6)
        x = rng.standard_normal((3, 5))
        r = rng.standard_normal((3, 5))
        loss = lambda: float((softmax(x) * r).sum())
        grad = softmax_bwd(softmax(x), r)
        assert rel_err(grad, fd(loss, x)) <= 1e-7

    def test_axis_zero(self):
        rng = seeded_rng(7)
        x = rng.standard_normal((6, 2))
        y = softmax(x, axis=0)
        assert np.abs(y.sum(axis=0) - 1.0).max() <= 1e-12


class TestLayerNorm:
    def test_one_two_three(self):
        x = np.array([[1.0, 2.0, 3.0]])
        y, _ = layer_norm_fwd(x, np.ones((1, 3)), np.zeros((1, 3)))
        want = math.sqrt(1.5)              # up to the 1e-5 epsilon
        assert abs(y[0, 0] + want) <= 1e-4
        assert abs(y[0, 1]) <= 1e-12
        assert abs(y[0, 2] - want) <= 1e-4

    def test_rows_standardized(self):
        rng = seeded_rng(8)
        x = rng.standard_normal((5, 16)) * 3.0 + 2.0
        y, _ = layer_norm_fwd(x, np.ones((1, 16)), np.zeros((1, 16)))
        assert np.abs(y.mean(axis=1)).max() <= 1e-12
        assert np.abs((y * y).mean(axis=1) - 1.0).max() <= 1e-4

    def test_gamma_beta_applied(self):
        x = np.array([[1.0, 2.0, 3.0]])
        gamma = np.array([[2.0, 2.0, 2.0]])
        beta = np.array([[1.0, 1.0, 1.0]])
        y, _ = layer_norm_fwd(x, gamma, beta)
        y0, _ = layer_norm_fwd(x, np.ones((1, 3)), np.zeros((1, 3)))
        assert np.allclose(y, 2.0 * y0 + 1.0, atol=1e-14)

    def test_backward_matches_fd(self):
        rng = seeded_rng(9)
        x = rng.standard_normal((4, 7))
        gamma = rng.standard_normal((1, 7))
        beta = rng.standard_normal((1, 7))
        r = rng.standard_normal((4, 7))

        def loss():
            y, _ = layer_norm_fwd(x, gamma, beta)
            return float((y * r).sum())

        _, cache = layer_norm_fwd(x, gamma, beta)
        dx, dgamma, dbeta = layer_norm_bwd(cache, r)
        assert rel_err(dx, fd(loss, x)) <= 1e-6
        assert rel_err(dgamma, fd(loss, gamma)) <= 1e-7
        assert rel_err(dbeta, fd(loss, beta)) <= 1e-7


class TestDropout:
    def test_eval_mode_is_identity(self):
        mask = dropout_mask(seeded_rng(0), (3, 4), 0.5, train=False)
        assert np.array_equal(mask, np.ones((3, 4)))

    def test_zero_rate_is_identity(self):
        mask = dropout_mask(seeded_rng(0), (3, 4), 0.0, train=True)
        assert np.array_equal(mask, np.ones((3, 4)))

    def test_inverted_scaling_values(self):
        mask = dropout_mask(seeded_rng(1), (50, 50), 0.25, train=True)
        assert set(np.unique(mask)) <= {0.0, 1.0 / 0.75}
        kept = (mask > 0).mean()
        assert 0.70 <= kept <= 0.80

    def test_forward_backward_share_mask(self):
        rng = seeded_rng(2)
        x = rng.standard_normal((4, 4))
        dy = rng.standard_normal((4, 4))
        mask = dropout_mask(seeded_rng(3), (4, 4), 0.5, train=True)
        assert np.array_equal(dropout_fwd(x, mask), x * mask)
        assert np.array_equal(dropout_bwd(mask, dy), dy * mask)

    def test_rate_validation(self):
        with pytest.raises(ValueError):
            dropout_mask(seeded_rng(0), (2,), 1.0, train=True)
        with pytest.raises(ValueError):
            dropout_mask(seeded_rng(0), (2,), -0.1, train=True)

    def test_seeded_determinism(self):
        a = dropout_mask(seeded_rng(7), (6, 6), 0.5, train=True)
        b = dropout_mask(seeded_rng(7), (6, 6), 0.5, train=True)
        assert np.array_equal(a, b)


def ccc_oracle(p, t):
    """Straight-line population-moment concordance, scalar math only."""
    n = len(p)
    mp = sum(p) / n
    mt = sum(t) / n
    vp = sum((x - mp) ** 2 for x in p) / n
    vt = sum((x - mt) ** 2 for x in t) / n
    cov = sum((a - mp) * (b - mt) for a, b in zip(p, t)) / n
    denom = vp + vt + (mp - mt) ** 2
    return 1.0 if denom == 0.0 else 2.0 * cov / denom


class TestCcc:
    def test_worked_example(self):
        # pred [1,2,3] vs target [2,4,6]: 2*cov = 8/3, denom = 22/3
        assert ccc([1.0, 2.0, 3.0], [2.0, 4.0, 6.0]) == \
            pytest.approx(8.0 / 22.0, abs=1e-15)

    def test_perfect_agreement_is_exact_one(self):
        x = np.array([0.3, -1.2, 2.2, 0.0])
        assert ccc(x, x.copy()) == 1.0

    def test_identical_constants(self):
        assert ccc([2.0, 2.0], [2.0, 2.0]) == 1.0

    def test_constant_prediction_is_zero(self):
        assert ccc([1.0, 1.0, 1.0], [0.0, 1.0, 2.0]) == 0.0

    def test_symmetry(self):
        rng = seeded_rng(10)
        p, t = rng.standard_normal(20), rng.standard_normal(20)
        assert ccc(p, t) == pytest.approx(ccc(t, p), abs=1e-15)

    def test_matches_oracle(self):
        rng = seeded_rng(11)
        for _ in range(50):
            n = int(rng.integers(2, 30))
            p = rng.uniform(-5, 5, n)
            t = rng.uniform(-5, 5, n)
            assert abs(ccc(p, t) - ccc_oracle(list(p), list(t))) <= 1e-12

    def test_shape_errors(self):
        with pytest.raises(ShapeMismatch):
            ccc([1.0, 2.0], [1.0])
        with pytest.raises(ShapeMismatch):
            ccc([], [])

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.floats(-100, 100), min_size=2, max_size=15),
           st.data())
    def test_bounded_by_one(self, p, data):
        t = data.draw(st.lists(st.floats(-100, 100),
                               min_size=len(p), max_size=len(p)))
        assert abs(ccc(p, t)) <= 1.0 + 1e-9

    def test_columns(self):
        rng = seeded_rng(12)
        p = rng.standard_normal((9, 3))
        t = rng.standard_normal((9, 3))
        cols = ccc_columns(p, t)
        for d in range(3):
            assert cols[d] == ccc(p[:, d], t[:, d])


class TestCccLoss:
    def test_value_is_sum_of_deficits(self):
        rng = seeded_rng(13)
        p = rng.standard_normal((7, 3))
        t = rng.standard_normal((7, 3))
        loss, _ = ccc_loss(p, t)
        want = sum(1.0 - ccc(p[:, d], t[:, d]) for d in range(3))
        assert loss == pytest.approx(want, abs=1e-12)

    def test_gradient_matches_fd(self):
        rng = seeded_rng(14)
        for _ in range(10):
            n = int(rng.integers(3, 12))
            p = rng.standard_normal((n, 3))
            t = rng.standard_normal((n, 3))
            _, grad = ccc_loss(p, t)
            loss = lambda: ccc_loss(p, t)[0]
            assert rel_err(grad, fd(loss, p)) <= 1e-6

    def test_perfect_prediction_zero_loss(self):
        rng = seeded_rng(15)
        t = rng.standard_normal((6, 3))
        loss, grad = ccc_loss(t.copy(), t)
        assert loss == 0.0

    def test_degenerate_column_contributes_nothing(self):
        t = np.zeros((4, 1))
        loss, grad = ccc_loss(np.zeros((4, 1)), t)
        assert loss == 0.0
        assert np.array_equal(grad, np.zeros((4, 1)))


def adamw_oracle(w0, grads, lr, b1, b2, eps, wd):
    """Independent scalar AdamW trace."""
    w, m, v = w0, 0.0, 0.0
    for t, g in enumerate(grads, start=1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        mh = m / (1 - b1 ** t)
        vh = v / (1 - b2 ** t)
        w = w - lr * (mh / (math.sqrt(vh) + eps) + wd * w)
    return w


class TestAdamW:
    def test_single_step_hand_trace(self):
        # w=1, g=1, lr=0.1: mhat=1, vhat=1, w -> 1 - 0.1/(1+1e-8) ~ 0.9
        p = Param("w", [[1.0]])
        p.grad[...] = 1.0
        opt = AdamW(lr=0.1)
        opt.step([p])
        assert abs(p.value[0, 0] - 0.9) <= 1e-8

    def test_multi_step_matches_oracle(self):
        rng = seeded_rng(16)
        grads = [float(g) for g in rng.standard_normal(6)]
        p = Param("w", [[0.5]])
        opt = AdamW(lr=0.05, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.01)
        for g in grads:
            p.grad[...] = g
            opt.step([p])
        want = adamw_oracle(0.5, grads, 0.05, 0.9, 0.999, 1e-8, 0.01)
        assert p.value[0, 0] == pytest.approx(want, abs=1e-14)

    def test_decay_is_decoupled(self):
        # zero gradient: the only movement is the decay term lr*wd*w
        p = Param("w", [[2.0]])
        opt = AdamW(lr=0.1, weight_decay=0.05)
        opt.step([p])
        assert p.value[0, 0] == pytest.approx(2.0 - 0.1 * 0.05 * 2.0, abs=1e-15)

    def test_state_is_per_param_name(self):
        a, b = Param("a", [[1.0]]), Param("b", [[1.0]])
        a.grad[...] = 1.0
        b.grad[...] = -1.0
        opt = AdamW(lr=0.1)
        opt.step([a, b])
        assert a.value[0, 0] < 1.0 < b.value[0, 0]


class TestGradCheck:
    def test_correct_gradients_pass(self):
        p = Param("w", [[1.0, -2.0], [0.5, 3.0]])

        def loss_fn():
            p.grad[...] += 2.0 * p.value
            return float((p.value ** 2).sum())

        assert grad_check(loss_fn, [p]) <= 1e-9

    def test_wrong_gradients_detected(self):
        p = Param("w", [[1.0, -2.0]])

        def loss_fn():
            p.grad[...] += 3.0 * p.value     # wrong by 1.5x
            return float((p.value ** 2).sum())

        assert grad_check(loss_fn, [p]) >= 0.1

    def test_values_restored_after_check(self):
        p = Param("w", [[1.25, -0.75]])
        before = p.value.copy()

        def loss_fn():
            p.grad[...] += 2.0 * p.value
            return float((p.value ** 2).sum())

        grad_check(loss_fn, [p])
        assert np.array_equal(p.value, before)

    def test_nonfinite_loss_rejected(self):
        p = Param("w", [[1.0]])
        with pytest.raises(NumericalFailure):
            grad_check(lambda: float("nan"), [p])


class TestCheckpoints:
    def test_round_trip_bitwise(self, tmp_path):
        rng = seeded_rng(17)
        params = {
            "layer.w": rng.standard_normal((3, 4)) * 1e6,
            "layer.b": np.array([[0.0, -0.0, 1e-300, -1e-300]]),
            "head.w": rng.standard_normal((2, 2)) * 1e-8,
        }
        path = tmp_path / "ckpt.json"
        save_checkpoint(params, path)
        back = load_checkpoint(path)
        assert set(back) == set(params)
        for name in params:
            assert np.array_equal(back[name], params[name])
            # signed zero survives too
            assert np.array_equal(np.signbit(back[name]),
                                  np.signbit(params[name]))

    def test_save_is_deterministic(self, tmp_path):
        params = {"b": np.ones((1, 2)), "a": np.zeros((2, 1))}
        p1, p2 = tmp_path / "1.json", tmp_path / "2.json"
        save_checkpoint(params, p1)
        save_checkpoint(dict(reversed(params.items())), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_version_field_present(self, tmp_path):
        path = tmp_path / "c.json"
        save_checkpoint({"w": np.ones((1, 1))}, path)
        blob = json.loads(path.read_text())
        assert blob["version"] == "msf-ser-ckpt-v1"
        assert blob["params"]["w"] == {"rows": 1, "cols": 1, "data": [1.0]}

    def test_wrong_version_rejected(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text('{"version": "msf-ser-ckpt-v0", "params": {}}')
        with pytest.raises(NumericalFailure):
            load_checkpoint(path)

    def test_invalid_json_rejected(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text("{nope")
        with pytest.raises(NumericalFailure):
            load_checkpoint(path)

    def test_size_conflict_rejected(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({
            "version": "msf-ser-ckpt-v1",
            "params": {"w": {"rows": 2, "cols": 2, "data": [1.0, 2.0]}}}))
        with pytest.raises(NumericalFailure):
            load_checkpoint(path)

    def test_params_accepts_param_list(self, tmp_path):
        p = Param("x", [[5.0]])
        path = tmp_path / "c.json"
        save_checkpoint([p], path)
        assert load_checkpoint(path)["x"][0, 0] == 5.0


class TestMisc:
    def test_param_requires_2d(self):
        with pytest.raises(ShapeMismatch):
            Param("v", [1.0, 2.0])

    def test_param_zero_grad(self):
        p = Param("w", [[1.0]])
        p.grad[...] = 5.0
        p.zero_grad()
        assert np.array_equal(p.grad, np.zeros((1, 1)))

    def test_glorot_bounds(self):
        w = glorot_uniform(seeded_rng(18), 30, 50)
        limit = math.sqrt(6.0 / 80.0)
        assert w.shape == (30, 50)
        assert np.abs(w).max() <= limit

    def test_seeded_rng_reproducible(self):
        a = seeded_rng(99).standard_normal(5)
        b = seeded_rng(99).standard_normal(5)
        assert np.array_equal(a, b)
