import math

import numpy as np
import pytest

from precm import autodiff as ad
from precm.group import rotate
from precm.layers import forward

from helpers import loss_grads, loss_only, mixed_net, small_net


def test_taped_forward_matches_plain():
    net = mixed_net()
    x = np.random.default_rng(0).standard_normal((2, 1, 12, 12))
    tape = ad.Tape()
    P = {k: tape.var(v) for k, v in net.params.items()}
    assert np.array_equal(forward(net, x, P).value, forward(net, x))


def test_bce_at_half_is_ln2():
    for y in (0.0, 1.0):
        assert math.isclose(float(ad.bce_loss(np.full((1, 1, 2, 2), 0.5), np.full((1, 1, 2, 2), y))), math.log(2))


def test_bce_through_sigmoid_gradient():
    rng = np.random.default_rng(1)
    z = rng.standard_normal((1, 1, 3, 4))
    y = (rng.random(z.shape) > 0.5).astype(float)
    tape = ad.Tape()
    zv = tape.var(z)
    g = ad.grad_of(ad.backward(tape, ad.bce_loss(ad.sigmoid(zv), y)), zv)
    np.testing.assert_allclose(g, (1 / (1 + np.exp(-z)) - y) / z.size, rtol=1e-9)


def test_sum_gradient_is_ones():
    tape = ad.Tape()
    x = tape.var(np.random.default_rng(2).standard_normal((1, 2, 3, 3)))
    assert np.array_equal(ad.grad_of(ad.backward(tape, ad.tsum(x)), x), np.ones((1, 2, 3, 3)))


def test_backward_needs_scalar():
    tape = ad.Tape()
    x = tape.var(np.ones((1, 1, 2, 2)))
    with pytest.raises(ValueError):
        ad.backward(tape, ad.relu(x))


def test_reused_variable_accumulates():
    tape = ad.Tape()
    x = tape.var(np.full((1, 1, 1, 2), 3.0))
    loss = ad.tsum(ad.add(x, ad.relu(x)))
    assert np.array_equal(ad.grad_of(ad.backward(tape, loss), x), np.full((1, 1, 1, 2), 2.0))


def _fd_check(net, x, y, h=1e-4, tol=1e-4):
    _, grads = loss_grads(net, x, y)
    for name, p in net.params.items():
        fd = np.zeros_like(p)
        for i in np.ndindex(p.shape):
            params = dict(net.params)
            up, dn = p.copy(), p.copy()
            up[i] += h
            dn[i] -= h
            params[name] = up
            lu = loss_only(net, params, x, y)
            params[name] = dn
            ld = loss_only(net, params, x, y)
            fd[i] = (lu - ld) / (2 * h)
        err = np.linalg.norm(grads[name] - fd) / max(np.linalg.norm(grads[name]), np.linalg.norm(fd), 1e-12)
        assert err < tol, f"{name}: relative error {err:.2e}"


def test_finite_differences_mixed_net():
    net = mixed_net()
    rng = np.random.default_rng(3)
    x = rng.standard_normal((1, 1, 8, 8))
    y = (rng.random((1, 1, 4, 4)) > 0.5).astype(float)
    _fd_check(net, x, y)


def test_finite_differences_baseline():
    net = small_net(flavor="baseline", c=1)
    rng = np.random.default_rng(4)
    x = rng.standard_normal((1, 1, 8, 8))
    y = (rng.random((1, 1, 8, 8)) > 0.5).astype(float)
    _fd_check(net, x, y)


@pytest.mark.parametrize("t", [1, 2, 3])
def test_gradients_invariant_under_rotation(t):
    net = small_net(seed=5)
    rng = np.random.default_rng(t)
    x = rng.standard_normal((2, 1, 10, 10))
    y = (rng.random(x.shape) > 0.5).astype(float)
    l0, g0 = loss_grads(net, x, y)
    l1, g1 = loss_grads(net, rotate(t, x), rotate(t, y))
    assert l0 == l1
    for k in g0:
        assert np.array_equal(g0[k], g1[k]), k


def test_sgd_examples():
    p = {"w": np.array([1.0])}
    same, _ = ad.sgd_step(p, {"w": np.array([0.0])}, 0.1)
    assert np.array_equal(same["w"], p["w"])
    same, _ = ad.sgd_step(p, {"w": np.array([5.0])}, 0.0)
    assert np.array_equal(same["w"], p["w"])
    step, _ = ad.sgd_step(p, {"w": 2 * p["w"]}, 0.1)
    assert math.isclose(step["w"][0], 0.8)


def test_sgd_momentum_accumulates():
    p = {"w": np.array([0.0])}
    g = {"w": np.array([1.0])}
    p1, v1 = ad.sgd_step(p, g, 1.0, momentum=0.5)
    p2, _ = ad.sgd_step(p1, g, 1.0, momentum=0.5, velocity=v1)
    assert p2["w"][0] == -1.0 - 1.5
