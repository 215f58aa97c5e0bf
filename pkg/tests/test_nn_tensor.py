"""Autodiff engine checks: hand-computed gradients, broadcasting, tape rules."""

import numpy as np
import pytest

from aceplan.nn import NonFiniteError, Tensor, cat, l2_normalize, no_grad


def t(x, rg=True):
    return Tensor(np.asarray(x, dtype=np.float64), requires_grad=rg)


def test_mul_gradient_is_other_operand():
    w = t(2.0)
    x = t(3.0, rg=False)
    loss = w * x
    loss.backward()
    assert w.grad == pytest.approx(3.0)


def test_param_off_tape_has_no_grad():
    w = t(2.0)
    unused = t(5.0)
    loss = w * w
    loss.backward()
    assert unused.grad is None
    assert w.grad == pytest.approx(4.0)


def test_add_broadcast_bias():
    x = t(np.ones((4, 3)), rg=False)
    b = t(np.zeros(3))
    out = (x + b).sum()
    out.backward()
    np.testing.assert_allclose(b.grad, [4.0, 4.0, 4.0])


def test_matmul_grads():
    a = t([[1.0, 2.0], [3.0, 4.0]])
    b = t([[5.0], [6.0]])
    out = (a @ b).sum()
    out.backward()
    np.testing.assert_allclose(a.grad, [[5.0, 6.0], [5.0, 6.0]])
    np.testing.assert_allclose(b.grad, [[4.0], [6.0]])


def test_chain_through_tanh():
    x = t(0.3)
    y = x.tanh() * 2.0
    y.backward()
    assert x.grad == pytest.approx(2.0 * (1 - np.tanh(0.3) ** 2))


def test_getitem_routes_gradient():
    x = t(np.arange(6, dtype=np.float64).reshape(2, 3))
    out = x[:, 1:].sum()
    out.backward()
    np.testing.assert_allclose(x.grad, [[0, 1, 1], [0, 1, 1]])


def test_cat_splits_gradient():
    a = t(np.ones((2, 2)))
    b = t(np.ones((2, 3)))
    out = (cat([a, b], axis=-1) * 2.0).sum()
    out.backward()
    np.testing.assert_allclose(a.grad, np.full((2, 2), 2.0))
    np.testing.assert_allclose(b.grad, np.full((2, 3), 2.0))


def test_div_gradients():
    a = t(6.0)
    b = t(2.0)
    out = a / b
    out.backward()
    assert a.grad == pytest.approx(0.5)
    assert b.grad == pytest.approx(-6.0 / 4.0)


def test_grad_accumulates_over_reuse():
    x = t(2.0)
    y = x * x + x * 3.0
    y.backward()
    assert x.grad == pytest.approx(2 * 2.0 + 3.0)


def test_no_grad_suppresses_tape():
    x = t(2.0)
    with no_grad():
        y = x * x
    assert not y.requires_grad
    assert y._prev == ()


def test_backward_requires_scalar():
    x = t(np.ones(3))
    with pytest.raises(RuntimeError):
        (x * 2.0).backward()


def test_backward_rejects_nonfinite_loss():
    x = t(np.inf)
    with pytest.raises(NonFiniteError):
        (x * 1.0).backward()


def test_l2_normalize_unit_norm_and_scale_invariance():
    rng = np.random.default_rng(0)
    v = rng.normal(size=(5, 7))
    out = l2_normalize(Tensor(v))
    norms = np.linalg.norm(out.data, axis=-1)
    np.testing.assert_allclose(norms, 1.0, atol=1e-6)
    out_scaled = l2_normalize(Tensor(3.7 * v))
    np.testing.assert_allclose(out.data, out_scaled.data, atol=1e-6)


def test_l2_normalize_zero_vector_is_guarded():
    z = Tensor(np.zeros((1, 4)), requires_grad=True)
    out = l2_normalize(z).sum()
    out.backward()
    assert np.isfinite(z.grad).all()


def test_elu_matches_definition():
    x = t(np.array([-2.0, -0.5, 0.0, 0.5, 2.0]))
    y = x.elu().sum()
    expected = np.where(x.data <= 0, np.expm1(x.data), x.data)
    np.testing.assert_allclose(x.elu().data, expected)
    y.backward()
    expected_grad = np.where(x.data <= 0, np.exp(x.data), 1.0)
    np.testing.assert_allclose(x.grad, expected_grad)


def test_mean_and_sum_axes():
    x = t(np.arange(12, dtype=np.float64).reshape(3, 4))
    m = x.mean(axis=-1, keepdims=True)
    assert m.shape == (3, 1)
    m.sum().backward()
    np.testing.assert_allclose(x.grad, np.full((3, 4), 0.25))


def test_float32_graph_stays_float32():
    x = Tensor(np.ones((2, 2), dtype=np.float32), requires_grad=True)
    y = ((x * 2.0 + 1.0).tanh()).sum()
    assert y.dtype == np.float32
    y.backward()
    assert x.grad.dtype == np.float32
