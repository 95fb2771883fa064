"""Finite-difference checks for every autodiff primitive."""

import numpy as np
import pytest

from styled2t import tensor as T


def numeric_grad(f, x, h=1e-6):
    """Central finite differences of scalar f at ndarray x."""
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    while not it.finished:
        i = it.multi_index
        old = x[i]
        x[i] = old + h
        hi = f()
        x[i] = old - h
        lo = f()
        x[i] = old
        g[i] = (hi - lo) / (2 * h)
        it.iternext()
    return g


def check_unary(op, shape=(3, 4), positive=False, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(shape)
    if positive:
        x = np.abs(x) + 0.5
    xt = T.parameter(x.copy())
    T.tsum(op(xt)).backward()
    analytic = xt.grad.copy()

    def f():
        return float(T.tsum(op(T.Tensor(xt.data))).data)

    numeric = numeric_grad(f, xt.data)
    assert np.allclose(analytic, numeric, rtol=1e-5, atol=1e-7), op


@pytest.mark.parametrize(
    "op,positive",
    [
        (T.tanh, False),
        (T.sigmoid, False),
        (T.exp, False),
        (T.log, True),
        (T.relu, False),
        (lambda a: T.power(a, 2.0), False),
        (lambda a: T.power(a, -1.0), True),
        (lambda a: T.softmax(a, axis=-1), False),
        (lambda a: T.log_softmax(a, axis=-1), False),
        (T.transpose, False),
        (lambda a: T.tmean(a, axis=0), False),
        (lambda a: T.tsum(a, axis=1, keepdims=True), False),
        (lambda a: T.clamp_min(a, 0.1), False),
        (lambda a: T.tslice(a, (slice(1, 3), slice(0, 2))), False),
        (lambda a: T.reshape(a, (4, 3)), False),
    ],
)
def test_unary_gradients(op, positive):
    check_unary(op, positive=positive)


def test_add_mul_broadcast_gradients():
    rng = np.random.default_rng(1)
    a = T.parameter(rng.standard_normal((3, 4)))
    b = T.parameter(rng.standard_normal((4,)))
    out = T.tsum(T.mul(T.add(a, b), T.add(a, 2.0)))
    out.backward()
    ga, gb = a.grad.copy(), b.grad.copy()

    def f():
        return float(T.tsum(T.mul(T.add(T.Tensor(a.data), T.Tensor(b.data)), T.add(T.Tensor(a.data), 2.0))).data)

    assert np.allclose(ga, numeric_grad(f, a.data), rtol=1e-5, atol=1e-8)
    assert np.allclose(gb, numeric_grad(f, b.data), rtol=1e-5, atol=1e-8)


def test_matmul_gradients():
    rng = np.random.default_rng(2)
    a = T.parameter(rng.standard_normal((3, 5)))
    b = T.parameter(rng.standard_normal((5, 2)))
    T.tsum(T.tanh(T.matmul(a, b))).backward()
    ga, gb = a.grad.copy(), b.grad.copy()

    def f():
        return float(T.tsum(T.tanh(T.matmul(T.Tensor(a.data), T.Tensor(b.data)))).data)

    assert np.allclose(ga, numeric_grad(f, a.data), rtol=1e-5, atol=1e-8)
    assert np.allclose(gb, numeric_grad(f, b.data), rtol=1e-5, atol=1e-8)


def test_matmul_shape_mismatch():
    from styled2t.errors import ShapeMismatch

    with pytest.raises(ShapeMismatch):
        T.matmul(T.Tensor(np.ones((2, 3))), T.Tensor(np.ones((2, 3))))


def test_concat_gradients():
    rng = np.random.default_rng(3)
    a = T.parameter(rng.standard_normal((2, 3)))
    b = T.parameter(rng.standard_normal((4, 3)))
    T.tsum(T.power(T.concat([a, b], axis=0), 2.0)).backward()
    assert np.allclose(a.grad, 2 * a.data)
    assert np.allclose(b.grad, 2 * b.data)


def test_rows_gather_scatter_adds_duplicates():
    a = T.parameter(np.arange(12, dtype=float).reshape(4, 3))
    idx = [0, 2, 0]
    out = T.tsum(T.rows(a, idx))
    out.backward()
    expected = np.zeros((4, 3))
    expected[0] = 2.0
    expected[2] = 1.0
    assert np.allclose(a.grad, expected)


def test_layer_norm_gradients():
    rng = np.random.default_rng(4)
    x = T.parameter(rng.standard_normal((3, 6)))
    g = T.parameter(rng.standard_normal(6))
    b = T.parameter(rng.standard_normal(6))
    T.tsum(T.power(T.layer_norm(x, g, b), 2.0)).backward()
    gx, gg, gb = x.grad.copy(), g.grad.copy(), b.grad.copy()

    def f():
        return float(T.tsum(T.power(T.layer_norm(T.Tensor(x.data), T.Tensor(g.data), T.Tensor(b.data)), 2.0)).data)

    assert np.allclose(gx, numeric_grad(f, x.data), rtol=1e-4, atol=1e-7)
    assert np.allclose(gg, numeric_grad(f, g.data), rtol=1e-4, atol=1e-7)
    assert np.allclose(gb, numeric_grad(f, b.data), rtol=1e-4, atol=1e-7)


def test_reused_node_accumulates_both_paths():
    x = T.parameter(np.array([1.5, -0.5]))
    y = T.add(T.tanh(x), T.sigmoid(x))
    T.tsum(y).backward()
    expected = (1 - np.tanh(x.data) ** 2) + (1 / (1 + np.exp(-x.data))) * (1 - 1 / (1 + np.exp(-x.data)))
    assert np.allclose(x.grad, expected)


def test_softmax_rows_sum_to_one():
    rng = np.random.default_rng(5)
    p = T.softmax(T.Tensor(rng.standard_normal((4, 7))), axis=-1)
    assert np.allclose(p.data.sum(axis=-1), 1.0, atol=1e-12)


def test_clip_global_norm():
    a = T.parameter(np.zeros(3))
    a.grad = np.array([3.0, 4.0, 0.0])
    norm = T.clip_global_norm([a], 1.0)
    assert norm == pytest.approx(5.0)
    assert np.allclose(np.linalg.norm(a.grad), 1.0)


def test_adam_decreases_quadratic():
    p = T.parameter(np.array([5.0]))
    opt = T.Adam([p], lr=0.1)
    for _ in range(200):
        p.zero_grad()
        loss = T.tsum(T.power(p, 2.0))
        loss.backward()
        opt.step()
    assert abs(float(p.data[0])) < 0.5
