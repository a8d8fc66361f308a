import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from graphsparse import numkernel as nk
from graphsparse.errors import EvaluationError, ShapeError


def naive_matmul(a, b):
    m, k = a.shape
    n = b.shape[1]
    out = np.zeros((m, n))
    for i in range(m):
        for j in range(n):
            s = 0.0
            for r in range(k):
                s += a[i, r] * b[r, j]
            out[i, j] = s
    return out


class TestMatmul:
    def test_identity_left(self):
        M = np.array([[1.0, 2.0], [3.0, 4.0]])
        np.testing.assert_array_equal(nk.matmul(np.eye(2), M).value, M)

    def test_identity_right(self):
        M = np.array([[1.0, 2.0], [3.0, 4.0]])
        np.testing.assert_array_equal(nk.matmul(M, np.eye(2)).value, M)

    def test_against_triple_loop(self):
        rng = np.random.default_rng(0)
        a, b = rng.normal(size=(3, 4)), rng.normal(size=(4, 2))
        np.testing.assert_allclose(nk.matmul(a, b).value, naive_matmul(a, b), rtol=1e-12, atol=0)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(1, 64), st.integers(1, 64), st.integers(1, 64), st.integers(0, 2**32 - 1))
    def test_against_triple_loop_property(self, m, k, n, seed):
        rng = np.random.default_rng(seed)
        a, b = rng.normal(size=(m, k)), rng.normal(size=(k, n))
        ref = naive_matmul(a, b)
        scale = np.abs(a) @ np.abs(b)
        assert np.all(np.abs(nk.matmul(a, b).value - ref) <= 1e-12 * np.maximum(scale, 1e-300))

    def test_shape_error_names_both_shapes(self):
        with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 3\)"):
            nk.matmul(np.ones((2, 3)), np.ones((2, 3)))

    def test_batched_broadcast_gradient(self):
        rng = np.random.default_rng(1)
        W = rng.normal(size=(4, 3))
        X = rng.normal(size=(5, 2, 4))
        err = nk.grad_check(lambda w: nk.total(nk.square(nk.matmul(nk.Tensor(X), w))), W)
        assert err < 1e-6

    def test_flop_counter(self):
        with nk.FlopCounter() as c:
            nk.matmul(np.ones((2, 3)), np.ones((3, 4)))
        assert c.macs == 24
        with nk.FlopCounter() as c:
            nk.matmul(np.ones((5, 2, 3)), np.ones((3, 4)))
        assert c.macs == 5 * 24


class TestSoftmaxCols:
    def test_uniform_column(self):
        np.testing.assert_allclose(nk.softmax_cols(np.zeros((3, 1))).value, np.full((3, 1), 1 / 3))

    def test_analytic(self):
        h = np.log([[1.0], [2.0], [3.0]])
        np.testing.assert_allclose(nk.softmax_cols(h).value, [[1 / 6], [2 / 6], [3 / 6]], rtol=1e-14)

    def test_random_against_direct(self):
        h = np.random.default_rng(2).normal(size=(5, 4))
        s = nk.softmax_cols(h).value
        direct = np.exp(h) / np.exp(h).sum(axis=0, keepdims=True)
        np.testing.assert_allclose(s.sum(axis=0), 1.0, atol=1e-12)
        np.testing.assert_allclose(s, direct, rtol=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(1, 8), st.integers(1, 8), st.floats(-50, 50), st.integers(0, 2**32 - 1))
    def test_column_shift_invariance(self, r, c, shift, seed):
        rng = np.random.default_rng(seed)
        h = rng.normal(scale=5, size=(r, c))
        s = nk.softmax_cols(h).value
        np.testing.assert_allclose(s.sum(axis=0), 1.0, atol=1e-12)
        shifted = h + shift * rng.integers(0, 2, size=(1, c))
        np.testing.assert_allclose(nk.softmax_cols(shifted).value, s, atol=1e-12)

    def test_no_overflow(self):
        s = nk.softmax_cols(np.array([[1000.0], [1001.0]])).value
        assert np.isfinite(s).all()


class TestConcat:
    def test_shape(self):
        assert nk.concat(np.ones((2, 3)), np.ones((2, 2)), "cols").shape == (2, 5)

    def test_empty_neutral(self):
        A = np.random.default_rng(3).normal(size=(2, 3))
        np.testing.assert_array_equal(nk.concat(A, np.empty((2, 0)), "cols").value, A)

    def test_sum_gradient_is_ones(self):
        a = nk.Tensor(np.random.default_rng(4).normal(size=(2, 3)), requires_grad=True)
        nk.total(nk.concat(a, np.ones((2, 2)))).backward()
        np.testing.assert_array_equal(a.grad, np.ones((2, 3)))
        assert nk.grad_check(lambda x: nk.total(nk.concat(x, np.ones((2, 2)))), a.value) < 1e-8

    def test_backward_splits_at_seam_bitwise(self):
        rng = np.random.default_rng(5)
        a = nk.Tensor(rng.normal(size=(3, 2)), requires_grad=True)
        b = nk.Tensor(rng.normal(size=(4, 2)), requires_grad=True)
        out = nk.concat(a, b, "rows")
        seed = rng.normal(size=(7, 2))
        out.backward(seed)
        assert np.array_equal(a.grad, seed[:3]) and np.array_equal(b.grad, seed[3:])

    def test_mismatch(self):
        with pytest.raises(ShapeError):
            nk.concat(np.ones((2, 3)), np.ones((3, 3)), "cols")

    def test_broadcast_batch(self):
        P = np.ones((4, 2, 3))
        Q = np.zeros((2, 1))
        assert nk.concat(P, Q).shape == (4, 2, 4)


UNARY = {
    "softmax_cols": nk.softmax_cols,
    "softmax_rows": nk.softmax_rows,
    "relu": nk.relu,
    "layer_norm": nk.layer_norm,
    "transpose": nk.transpose,
    "absolute": nk.absolute,
    "square": nk.square,
}


@pytest.mark.parametrize("name", sorted(UNARY))
@pytest.mark.parametrize("seed", range(20))
def test_unary_grad_check(name, seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(4, 3))
    w = rng.normal(size=x.shape[::-1] if name == "transpose" else x.shape)
    f = lambda t: nk.total(nk.mul(UNARY[name](t), w))
    assert nk.grad_check(f, x) < 1e-5


@pytest.mark.parametrize("seed", range(20))
def test_binary_grad_checks(seed):
    rng = np.random.default_rng(seed)
    a, b = rng.normal(size=(3, 4)), rng.normal(size=(4, 2))
    c = rng.normal(size=(3, 4))
    assert nk.grad_check(lambda t: nk.total(nk.square(nk.matmul(t, b))), a) < 1e-5
    assert nk.grad_check(lambda t: nk.total(nk.square(nk.matmul(a, t))), b) < 1e-5
    assert nk.grad_check(lambda t: nk.total(nk.mul(t, c) + nk.square(t - c)), a) < 1e-5
    assert nk.grad_check(lambda t: nk.mean(nk.concat(t, c, "rows") * 2.0), a) < 1e-5


class TestGradCheck:
    def test_linear_is_exact(self):
        x = np.random.default_rng(0).normal(size=(3, 3))
        assert nk.grad_check(nk.total, x) < 1e-9

    def test_quadratic_form(self):
        x = np.random.default_rng(1).normal(size=(3, 3))
        assert nk.grad_check(lambda t: nk.total(nk.matmul(t, nk.transpose(t))), x, eps=1e-5) < 1e-6

    def test_non_finite(self):
        with pytest.raises(EvaluationError):
            nk.grad_check(lambda t: nk.total(t) * np.inf, np.ones((1, 1)))

    def test_eps_range(self):
        with pytest.raises(ValueError):
            nk.grad_check(nk.total, np.ones((1, 1)), eps=0.1)

    def test_shared_node_visited_once(self):
        x = nk.Tensor(np.array([[2.0]]), requires_grad=True)
        y = x * x
        (y + y).backward()
        np.testing.assert_allclose(x.grad, [[8.0]])


class TestKinks:
    def test_crossing_detected_and_skipped(self):
        x = np.array([[0.5, 3e-6, -2.0]])
        f = lambda p: nk.total(nk.relu(p["x"]))
        rep = nk.grad_check_report(f, {"x": x})
        assert rep.skipped == {"x": 1} and rep.checked == {"x": 2}
        assert rep.max_error < 1e-9
        naive = nk.grad_check_report(f, {"x": x}, skip_kinks=False)
        assert naive.max_error > 0.1

    def test_smooth_function_skips_nothing(self):
        x = np.random.default_rng(0).normal(size=(3, 3))
        rep = nk.grad_check_report(lambda p: nk.total(nk.square(p["x"])), {"x": x})
        assert rep.skipped_fraction == 0.0 and rep.max_error < 1e-6

    def test_tracker_records_signs(self):
        with nk.KinkTracker() as k:
            nk.absolute(np.array([[-1.0, 0.0, 2.0]]))
        np.testing.assert_array_equal(k.patterns[0], [[-1, 0, 1]])


class TestAdam:
    def test_zero_gradient_fresh_state(self):
        p = np.array([[1.0, -2.0]])
        st_ = nk.AdamState(np.zeros_like(p), np.zeros_like(p))
        nk.adam_step(p, np.zeros_like(p), st_, lr=0.1)
        np.testing.assert_array_equal(p, [[1.0, -2.0]])

    def test_zero_gradient_decays_moments(self):
        st_ = nk.AdamState(np.array([[0.5]]), np.array([[0.2]]))
        nk.adam_step(np.zeros((1, 1)), np.zeros((1, 1)), st_, lr=0.0)
        np.testing.assert_allclose(st_.m, [[0.45]])
        np.testing.assert_allclose(st_.v, [[0.2 * 0.999]])

    def test_first_step_is_sign(self):
        g = np.array([[3.0, -0.01, 250.0]])
        p = np.zeros_like(g)
        nk.adam_step(p, g, nk.AdamState(np.zeros_like(g), np.zeros_like(g)), lr=1e-3)
        np.testing.assert_allclose(p, -1e-3 * np.sign(g), rtol=1e-5)

    def test_quadratic_descent_matches_scalar_recurrence(self):
        lr, b1, b2, eps = 0.1, 0.9, 0.999, 1e-8
        x, m, v = 1.0, 0.0, 0.0
        for t in range(1, 101):
            g = 2 * x
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g * g
            x -= lr * (m / (1 - b1 ** t)) / (np.sqrt(v / (1 - b2 ** t)) + eps)
        p = np.array([[1.0]])
        st_ = nk.AdamState(np.zeros((1, 1)), np.zeros((1, 1)))
        for _ in range(100):
            nk.adam_step(p, 2 * p, st_, lr=lr)
        assert abs(p[0, 0] - x) < 1e-12
        assert abs(p[0, 0]) < 0.1


def test_allocation_probe():
    with nk.AllocationProbe() as probe:
        nk.matmul(np.ones((8, 2)), np.ones((2, 8)))
    assert probe.has_square(8)
    assert probe.max_bytes == 8 * 8 * 8
