import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from explainqa.autograd import (
    Tensor, as_tensor, embedding, gelu, layer_norm, log_softmax, no_grad,
    parameter, softmax,
)


def finite_diff(f, x, eps=1e-6):
    """Central-difference gradient of scalar f at array x."""
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        orig = x[idx]
        x[idx] = orig + eps
        hi = f(x)
        x[idx] = orig - eps
        lo = f(x)
        x[idx] = orig
        g[idx] = (hi - lo) / (2 * eps)
    return g


def check_unary(op, x, atol=1e-6):
    t = parameter(x.copy())
    op(t).sum().backward()
    with no_grad():
        fd = finite_diff(lambda a: op(as_tensor(a)).sum().data.item(),
                         x.copy())
    np.testing.assert_allclose(t.grad, fd, atol=atol, rtol=1e-4)


class TestElementwiseGradients:
    rng = np.random.default_rng(0)

    def test_add_mul_chain(self):
        x = self.rng.normal(size=(3, 4))
        check_unary(lambda t: t * t + t, x)

    def test_div(self):
        x = self.rng.normal(size=(4,)) + 3.0
        check_unary(lambda t: as_tensor(np.ones(4)) / t, x)

    def test_pow_squared_fast_path(self):
        x = self.rng.normal(size=(5,))
        check_unary(lambda t: t**2.0, x)

    def test_pow_cubed_fast_path(self):
        x = self.rng.normal(size=(5,))
        check_unary(lambda t: t**3.0, x)

    def test_pow_general(self):
        x = np.abs(self.rng.normal(size=(5,))) + 0.5
        check_unary(lambda t: t**1.7, x)

    def test_exp_log_tanh(self):
        x = np.abs(self.rng.normal(size=(6,))) + 0.5
        check_unary(lambda t: t.exp(), x)
        check_unary(lambda t: t.log(), x)
        check_unary(lambda t: t.tanh(), x)

    def test_gelu(self):
        x = self.rng.normal(size=(7,))
        check_unary(gelu, x)

    def test_broadcast_add_accumulates(self):
        b = parameter(np.zeros(4))
        x = as_tensor(np.ones((3, 4)))
        (x + b).sum().backward()
        np.testing.assert_allclose(b.grad, 3.0 * np.ones(4))


class TestShapedOps:
    rng = np.random.default_rng(1)

    def test_matmul_2d(self):
        a = self.rng.normal(size=(3, 4))
        b = self.rng.normal(size=(4, 2))
        ta, tb = parameter(a.copy()), parameter(b.copy())
        (ta @ tb).sum().backward()
        np.testing.assert_allclose(ta.grad, np.ones((3, 2)) @ b.T)
        np.testing.assert_allclose(tb.grad, a.T @ np.ones((3, 2)))

    def test_matmul_batched_input_2d_weight(self):
        a = self.rng.normal(size=(2, 3, 4))
        w = self.rng.normal(size=(4, 5))
        ta, tw = parameter(a.copy()), parameter(w.copy())
        (ta @ tw).sum().backward()
        g = np.ones((2, 3, 5))
        np.testing.assert_allclose(ta.grad, g @ w.T)
        np.testing.assert_allclose(tw.grad, a.reshape(-1, 4).T @ g.reshape(-1, 5))

    def test_reshape_transpose_roundtrip_grad(self):
        x = parameter(self.rng.normal(size=(2, 6)))
        y = x.reshape(2, 2, 3).swapaxes(1, 2).reshape(2, 6)
        (y * y).sum().backward()
        np.testing.assert_allclose(x.grad, 2.0 * x.data)

    def test_getitem_fancy_index_accumulates(self):
        x = parameter(np.arange(5.0))
        idx = np.array([1, 1, 3])
        x[idx].sum().backward()
        np.testing.assert_allclose(x.grad, [0, 2, 0, 1, 0])

    def test_mean_matches_sum_over_n(self):
        x = parameter(self.rng.normal(size=(4, 3)))
        x.mean().backward()
        np.testing.assert_allclose(x.grad, np.full((4, 3), 1 / 12))

    def test_embedding_repeated_rows(self):
        w = parameter(self.rng.normal(size=(6, 3)))
        ids = np.array([[0, 2, 2], [5, 0, 2]])
        embedding(w, ids).sum().backward()
        expected = np.zeros((6, 3))
        for i in ids.ravel():
            expected[i] += 1
        np.testing.assert_allclose(w.grad, expected)


class TestNormalizersAndActivations:
    rng = np.random.default_rng(2)

    def test_softmax_rows_sum_to_one(self):
        x = as_tensor(self.rng.normal(size=(4, 7)) * 30)
        s = softmax(x, axis=-1)
        np.testing.assert_allclose(s.data.sum(axis=-1), np.ones(4), atol=1e-12)
        assert np.all(np.isfinite(s.data))

    def test_log_softmax_matches_log_of_softmax(self):
        x = as_tensor(self.rng.normal(size=(3, 5)))
        np.testing.assert_allclose(
            log_softmax(x, axis=-1).data,
            np.log(softmax(x, axis=-1).data), atol=1e-12)

    def test_softmax_gradient(self):
        x = self.rng.normal(size=(2, 4))
        w = self.rng.normal(size=(2, 4))
        check_unary(lambda t: (softmax(t, axis=-1) * as_tensor(w)).sum(), x)

    def test_log_softmax_gradient(self):
        x = self.rng.normal(size=(2, 4))
        w = self.rng.normal(size=(2, 4))
        check_unary(lambda t: (log_softmax(t, axis=-1) * as_tensor(w)).sum(), x)

    def test_layer_norm_output_standardized(self):
        x = as_tensor(self.rng.normal(size=(3, 8)) * 5 + 2)
        g = as_tensor(np.ones(8))
        b = as_tensor(np.zeros(8))
        y = layer_norm(x, g, b).data
        np.testing.assert_allclose(y.mean(axis=-1), np.zeros(3), atol=1e-12)
        np.testing.assert_allclose(y.std(axis=-1), np.ones(3), atol=1e-4)

    def test_layer_norm_gradient(self):
        x = self.rng.normal(size=(2, 6))
        g = as_tensor(self.rng.normal(size=(6,)))
        b = as_tensor(self.rng.normal(size=(6,)))
        w = self.rng.normal(size=(2, 6))
        check_unary(
            lambda t: (layer_norm(t, g, b) * as_tensor(w)).sum(), x,
            atol=1e-5)


class TestGraphMechanics:
    def test_no_grad_suppresses_graph(self):
        with no_grad():
            x = parameter(np.ones(3))
            y = x * x
        assert not x.requires_grad
        assert not y.requires_grad

    def test_backward_frees_graph_but_keeps_leaf_grads(self):
        x = parameter(np.ones(3))
        y = (x * x).sum()
        y.backward()
        assert x.grad is not None
        assert y._backward is None and y._parents == ()

    def test_shared_subexpression_counted_twice(self):
        x = parameter(np.array([2.0]))
        y = x * x
        (y + y).sum().backward()
        np.testing.assert_allclose(x.grad, [8.0])

    def test_backward_requires_scalar(self):
        x = parameter(np.ones((2, 2)))
        with pytest.raises(ValueError):
            (x * x).backward()

    def test_float64_everywhere(self):
        t = as_tensor(np.ones(3, dtype=np.float32))
        assert t.data.dtype == np.float64


@settings(max_examples=40, deadline=None)
@given(hnp.arrays(np.float64, (3, 3),
                  elements=st.floats(-2, 2, allow_nan=False)))
def test_sum_grad_is_ones(x):
    t = parameter(x.copy())
    t.sum().backward()
    np.testing.assert_allclose(t.grad, np.ones((3, 3)))
