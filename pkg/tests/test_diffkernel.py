"""Gradient checks for every tensor op, individually and composed.

The oracle is central finite differences (h=1e-5) on scalarized outputs;
analytic gradients must agree within 1e-4 relative error.
"""

import numpy as np
import pytest

from outagegraph import diffkernel as dk


def numeric_grad(fn, arrays, h=1e-5):
    """Central-difference gradients of a scalar fn(*arrays)."""
    grads = []
    for k, base in enumerate(arrays):
        g = np.zeros_like(base)
        flat = base.reshape(-1)
        gf = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = fn(*arrays)
            flat[i] = orig - h
            down = fn(*arrays)
            flat[i] = orig
            gf[i] = (up - down) / (2 * h)
        grads.append(g)
    return grads


def check_op(build_loss, arrays, rtol=1e-4):
    """Compare tape gradients against the finite-difference oracle."""
    tensors = [dk.Tensor(a.copy(), requires_grad=True) for a in arrays]
    loss = build_loss(*tensors)
    loss.backward()

    def scalar_fn(*arrs):
        ts = [dk.Tensor(a) for a in arrs]
        return float(build_loss(*ts).values)

    expected = numeric_grad(scalar_fn, [a.copy() for a in arrays])
    for t, e in zip(tensors, expected):
        scale = np.maximum(np.abs(e), 1.0)
        assert t.grad is not None
        np.testing.assert_allclose(t.grad, e, atol=rtol, rtol=rtol * scale.max())


RNG = np.random.default_rng(12345)


def test_add_mul_broadcast_grad():
    a = RNG.normal(size=(4, 3))
    b = RNG.normal(size=(1, 3))
    check_op(lambda x, y: dk.tsum(x * y + y), [a, b])


def test_matmul_grad():
    a = RNG.normal(size=(4, 5))
    b = RNG.normal(size=(5, 2))
    check_op(lambda x, y: dk.tsum(x @ y), [a, b])


def test_matmul_shape_mismatch():
    a = dk.Tensor(np.zeros((2, 3)))
    b = dk.Tensor(np.zeros((2, 3)))
    with pytest.raises(ValueError, match="3"):
        dk.matmul(a, b)


def test_div_pow_grad():
    a = RNG.uniform(0.5, 2.0, size=(3, 3))
    b = RNG.uniform(0.5, 2.0, size=(3, 3))
    check_op(lambda x, y: dk.tsum(x / y + x ** 1.5), [a, b])


def test_exp_log_grad():
    a = RNG.uniform(0.5, 2.0, size=(6,))
    check_op(lambda x: dk.tsum(dk.log(dk.exp(x) + dk.Tensor(1.0))), [a])


def test_leaky_relu_value_and_grad():
    out = dk.leaky_relu(dk.Tensor([-2.0]), slope=0.2)
    assert out.values[0] == pytest.approx(-0.4)
    a = RNG.normal(size=(10,)) + 0.05  # keep away from the kink
    check_op(lambda x: dk.tsum(dk.leaky_relu(x, 0.2)), [a])


def test_elu_grad():
    a = RNG.normal(size=(10,)) + 0.05
    check_op(lambda x: dk.tsum(dk.elu(x)), [a])


def test_softmax_uniform_on_equal_scores():
    out = dk.softmax(dk.Tensor([0.0, 0.0, 0.0]))
    np.testing.assert_allclose(out.values, [1 / 3] * 3)


def test_softmax_grad():
    a = RNG.normal(size=(3, 4))
    w = RNG.normal(size=(3, 4))
    check_op(lambda x: dk.tsum(dk.softmax(x, axis=1) * dk.Tensor(w)), [a])


def test_log_softmax_grad_rows_sum_zero():
    a = dk.Tensor(RNG.normal(size=(5, 3)), requires_grad=True)
    loss = dk.tsum(dk.log_softmax(a, axis=1))
    loss.backward()
    np.testing.assert_allclose(a.grad.sum(axis=1), 0.0, atol=1e-12)

    b = RNG.normal(size=(4, 3))
    w = RNG.normal(size=(4, 3))
    check_op(lambda x: dk.tsum(dk.log_softmax(x, axis=1) * dk.Tensor(w)), [b])


def test_concat_slice_grad():
    a = RNG.normal(size=(3, 2))
    b = RNG.normal(size=(3, 4))
    check_op(lambda x, y: dk.tsum(dk.concat([x, y], axis=1)[:, 1:5]), [a, b])


def test_gather_rows_grad_with_duplicates():
    a = RNG.normal(size=(4, 3))
    idx = np.array([0, 2, 2, 1, 0, 0])
    w = RNG.normal(size=(6, 3))
    check_op(lambda x: dk.tsum(dk.gather_rows(x, idx) * dk.Tensor(w)), [a])


def test_segment_sum_value():
    out = dk.segment_sum(dk.Tensor([[1.0], [2.0], [3.0]]), np.array([0, 0, 1]), 2)
    np.testing.assert_allclose(out.values, [[3.0], [3.0]])


def test_segment_sum_grad():
    a = RNG.normal(size=(6, 2))
    seg = np.array([0, 1, 0, 2, 2, 1])
    w = RNG.normal(size=(3, 2))
    check_op(lambda x: dk.tsum(dk.segment_sum(x, seg, 3) * dk.Tensor(w)), [a])


def test_segment_softmax_values_sum_to_one():
    a = dk.Tensor(RNG.normal(size=(7, 2)))
    seg = np.array([0, 0, 1, 1, 1, 2, 2])
    out = dk.segment_softmax(a, seg, 3)
    sums = np.zeros((3, 2))
    np.add.at(sums, seg, out.values)
    np.testing.assert_allclose(sums, 1.0, atol=1e-12)


def test_segment_softmax_grad():
    a = RNG.normal(size=(6, 2))
    seg = np.array([0, 0, 1, 1, 1, 2])
    w = RNG.normal(size=(6, 2))
    check_op(lambda x: dk.tsum(dk.segment_softmax(x, seg, 3) * dk.Tensor(w)), [a])


def test_mean_reduction_grad():
    a = RNG.normal(size=(4, 3))
    check_op(lambda x: dk.tmean(dk.tmean(x, axis=0) ** 2.0), [a])


def test_dropout_mask_scaling():
    x = dk.Tensor(np.ones((4, 2)), requires_grad=True)
    mask = np.array([[1, 0], [1, 1], [0, 0], [1, 1]], dtype=float)
    out = dk.dropout(x, mask, rate=0.5)
    np.testing.assert_allclose(out.values, mask * 2.0)
    dk.tsum(out).backward()
    np.testing.assert_allclose(x.grad, mask * 2.0)


def test_affine_norm_grad():
    a = RNG.normal(size=(5, 3))
    gamma = RNG.uniform(0.5, 1.5, size=(1, 3))
    beta = RNG.normal(size=(1, 3))
    check_op(lambda x, g, b: dk.tsum(dk.affine_norm(x, g, b) ** 2.0), [a, gamma, beta])


def test_two_layer_perceptron_matches_finite_differences():
    """Random 2-layer perceptron: max relative error vs central differences < 1e-4."""
    x = RNG.normal(size=(5, 3))
    w1 = RNG.normal(size=(3, 4)) * 0.7
    b1 = RNG.normal(size=(1, 4)) * 0.1
    w2 = RNG.normal(size=(4, 1)) * 0.7
    b2 = RNG.normal(size=(1, 1)) * 0.1

    def model(xv, w1v, b1v, w2v, b2v):
        h = dk.elu(xv @ w1v + b1v)
        out = h @ w2v + b2v
        return dk.tmean(out ** 2.0)

    check_op(model, [x, w1, b1, w2, b2])


def test_simple_square_grad():
    x = dk.Tensor(3.0, requires_grad=True)
    (x * x).backward()
    assert x.grad == pytest.approx(6.0)


def test_backward_requires_scalar():
    t = dk.Tensor(np.zeros((2, 2)), requires_grad=True)
    with pytest.raises(ValueError):
        (t * t).backward()


def test_nonfinite_trapped():
    with pytest.raises(Exception):
        dk.log(dk.Tensor([0.0]))  # -inf must be trapped


def test_forward_backward_deterministic():
    a = RNG.normal(size=(4, 4))

    def run():
        t = dk.Tensor(a.copy(), requires_grad=True)
        loss = dk.tsum(dk.softmax(t @ t, axis=1) ** 2.0)
        loss.backward()
        return loss.values.copy(), t.grad.copy()

    l1, g1 = run()
    l2, g2 = run()
    assert np.array_equal(l1, l2) and np.array_equal(g1, g2)
