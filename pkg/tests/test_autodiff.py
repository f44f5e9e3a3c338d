"""Tests for the reverse-mode AD core.

Expected gradients are frozen from a central-difference oracle (h=1e-3,
float64); closed-form cases are asserted directly.
"""

import math

import numpy as np
import pytest

from intuition import autodiff as ad


def grad_or_zeros(t):
    return np.zeros_like(t.data) if t.grad is None else t.grad


def central_diff(f, x64, h=1e-3):
    """Independent finite-difference oracle over a flat float64 array."""
    out = np.zeros_like(x64.reshape(-1))
    flat = x64.reshape(-1)
    for i in range(flat.size):
        up = flat.copy()
        dn = flat.copy()
        up[i] += h
        dn[i] -= h
        out[i] = (f(up.reshape(x64.shape)) - f(dn.reshape(x64.shape))) / (2 * h)
    return out.reshape(x64.shape)


def rel_err(a, b):
    return np.max(np.abs(a - b) / (np.abs(a) + np.abs(b) + 1e-8))


# --------------------------------------------------------------------------
# forward values
# --------------------------------------------------------------------------

def test_sigmoid_at_zero():
    out = ad.sigmoid(ad.Tensor([0.0]))
    assert out.data[0] == pytest.approx(0.5)


def test_matmul_identity():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(3, 3)).astype(np.float32)
    out = ad.matmul(ad.Tensor(np.eye(3, dtype=np.float32)), ad.Tensor(a))
    np.testing.assert_array_equal(out.data, a)


def test_softmax_hand_values():
    # oracle: e^x / sum(e^x) computed with math.exp
    xs = [1.0, 2.0, 3.0]
    es = [math.exp(v) for v in xs]
    expected = [e / math.fsum(es) for e in es]
    out = ad.softmax(ad.Tensor(xs)).data
    np.testing.assert_allclose(out, expected, atol=5e-7)
    np.testing.assert_allclose(out, [0.09003, 0.24473, 0.66524], atol=5e-6)


def test_softmax_rows_stochastic():
    rng = np.random.default_rng(1)
    x = ad.Tensor(rng.uniform(-5, 5, size=(4, 7)).astype(np.float32))
    y = ad.softmax(x).data
    np.testing.assert_allclose(y.sum(axis=-1), 1.0, atol=1e-6)
    assert np.all(y > 0) and np.all(y < 1)


def test_shape_mismatch_names_primitive():
    with pytest.raises(ad.ShapeMismatch, match="matmul"):
        ad.matmul(ad.Tensor(np.ones((2, 3))), ad.Tensor(np.ones((2, 3))))
    with pytest.raises(ad.ShapeMismatch, match=r"add.*\(2, 3\).*\(4,\)"):
        ad.add(ad.Tensor(np.ones((2, 3))), ad.Tensor(np.ones(4)))


# --------------------------------------------------------------------------
# stop-gradient
# --------------------------------------------------------------------------

def test_stop_gradient_forward_bit_equal():
    x = ad.Tensor(np.random.default_rng(2).normal(size=(5,)).astype(np.float32))
    y = ad.stop_gradient(x)
    assert y.data is x.data


def test_stop_gradient_blocks_only_its_operand():
    with ad.Tape():
        x = ad.Tensor([1.0, 2.0, 3.0], requires_grad=True)
        y = ad.Tensor([4.0, 5.0, 6.0], requires_grad=True)
        loss = ad.sum(ad.mul(ad.stop_gradient(x), y))
        ad.backward(loss)
    np.testing.assert_array_equal(grad_or_zeros(x), np.zeros(3))
    np.testing.assert_allclose(y.grad, x.data)


def test_codebook_loss_gradient_flows_one_way():
    # ||z_q - sg[x]||^2 must only move z_q
    with ad.Tape():
        x = ad.Tensor([1.0, -2.0], requires_grad=True)
        z_q = ad.Tensor([0.5, 0.5], requires_grad=True)
        diff = ad.sub(z_q, ad.stop_gradient(x))
        loss = ad.sum(ad.mul(diff, diff))
        ad.backward(loss)
    np.testing.assert_array_equal(grad_or_zeros(x), np.zeros(2))
    np.testing.assert_allclose(z_q.grad, 2 * (z_q.data - x.data), rtol=1e-6)


# --------------------------------------------------------------------------
# backward
# --------------------------------------------------------------------------

def test_backward_quadratic():
    with ad.Tape():
        x = ad.Tensor([1.0, -2.0, 0.5], requires_grad=True)
        loss = ad.sum(ad.mul(x, x))
        ad.backward(loss)
    np.testing.assert_allclose(x.grad, 2 * x.data, rtol=1e-6)


def test_backward_mean():
    with ad.Tape():
        x = ad.Tensor(np.arange(6, dtype=np.float32), requires_grad=True)
        ad.backward(ad.mean(x))
    np.testing.assert_allclose(x.grad, np.full(6, 1 / 6), rtol=1e-6)


def test_backward_rejects_non_scalar():
    with ad.Tape():
        x = ad.Tensor([1.0, 2.0], requires_grad=True)
        y = ad.mul(x, x)
        with pytest.raises(ValueError, match="scalar"):
            ad.backward(y)


def test_backward_accumulates_across_calls():
    with ad.Tape():
        x = ad.Tensor([3.0], requires_grad=True)
        loss = ad.sum(ad.mul(x, x))
        ad.backward(loss)
        ad.backward(loss)
    np.testing.assert_allclose(x.grad, 2 * 2 * x.data, rtol=1e-6)


def test_shared_subexpression_equals_duplicated_paths():
    rng = np.random.default_rng(3)
    v = rng.normal(size=(4,)).astype(np.float32)

    with ad.Tape():
        x = ad.Tensor(v.copy(), requires_grad=True)
        s = ad.mul(x, x)          # shared
        loss = ad.sum(ad.add(s, s))
        ad.backward(loss)
    shared_grad = x.grad.copy()

    with ad.Tape():
        x2 = ad.Tensor(v.copy(), requires_grad=True)
        a = ad.mul(x2, x2)        # duplicated
        b = ad.mul(x2, x2)
        ad.backward(ad.sum(ad.add(a, b)))
    np.testing.assert_allclose(shared_grad, x2.grad, rtol=1e-6)


def test_two_layer_composition_vs_finite_differences():
    rng = np.random.default_rng(4)
    w1 = rng.normal(size=(3, 4))
    w2 = rng.normal(size=(4, 1))
    x0 = rng.uniform(-2, 2, size=(2, 3))

    def loss_np(xflat):
        h = 1 / (1 + np.exp(-(xflat @ w1)))
        return float(np.sum(h @ w2))

    def loss_ad(xt):
        h = ad.sigmoid(ad.matmul(xt, ad.Tensor(w1)))
        return ad.sum(ad.matmul(h, ad.Tensor(w2)))

    with ad.Tape():
        xt = ad.Tensor(x0.copy(), requires_grad=True)
        ad.backward(loss_ad(xt))
    numeric = central_diff(loss_np, x0)
    assert rel_err(xt.grad, numeric) < 1e-4


def test_tape_topological_order():
    with ad.Tape() as t:
        x = ad.Tensor([1.0], requires_grad=True)
        y = ad.mul(x, x)
        z = ad.add(y, x)
        ad.backward(ad.sum(z))
    produced = set()
    for i, entry in enumerate(t.entries):
        for inp in entry.inputs:
            if inp._tape is t:
                assert id(inp) in produced, f"entry {i} uses a later output"
        produced.add(id(entry.output))


# --------------------------------------------------------------------------
# grad_check
# --------------------------------------------------------------------------

def test_grad_check_sigmoid_of_sum():
    err = ad.grad_check(lambda t: ad.sigmoid(ad.sum(t)),
                        ad.Tensor(np.zeros(4)), h=1e-3)
    assert err < 1e-4
    # true derivative at 0 is sigmoid'(0) = 0.25 per coordinate
    with ad.Tape():
        x = ad.Tensor(np.zeros(4), requires_grad=True)
        ad.backward(ad.sigmoid(ad.sum(x)))
    np.testing.assert_allclose(x.grad, 0.25, rtol=1e-6)


def test_grad_check_constant_function():
    err = ad.grad_check(lambda t: ad.Tensor(np.zeros(())),
                        ad.Tensor(np.ones(3)))
    assert err == 0.0


def test_grad_check_flip_probe_skips():
    # |x| has a kink at 0; signature by sign lets the checker skip it
    def f(t):
        return ad.sum(ad.relu(t))

    point = ad.Tensor(np.array([0.0, 1.0, -1.0]))
    err = ad.grad_check(f, point, h=1e-3,
                        flip_probe=lambda t: tuple(t.data > 0))
    assert err < 1e-6


# --------------------------------------------------------------------------
# per-primitive finite-difference sweep
# --------------------------------------------------------------------------

def _sample(shape, rng, lo=-2.0, hi=2.0):
    return ad.Tensor(rng.uniform(lo, hi, size=shape))


# Companion constants are bound once at factory time (default-arg trick) so
# repeated calls during the finite-difference loop see the same values.
PRIM_CASES = {
    "add": lambda rng: (
        lambda t, c=_sample((3, 4), rng): ad.sum(ad.add(t, c)), (3, 4)),
    "sub": lambda rng: (
        lambda t, c=_sample((3, 4), rng): ad.sum(ad.sub(c, t)), (3, 4)),
    "mul": lambda rng: (
        lambda t, c=_sample((3, 4), rng): ad.sum(ad.mul(t, c)), (3, 4)),
    "scale": lambda rng: (lambda t: ad.sum(ad.scale(t, 1.7)), (3, 4)),
    "matmul": lambda rng: (
        lambda t, c=_sample((4, 2), rng): ad.sum(ad.matmul(t, c)), (3, 4)),
    "sigmoid": lambda rng: (lambda t: ad.sum(ad.sigmoid(t)), (3, 4)),
    "softmax-last-dim": lambda rng: (
        lambda t, c=_sample((3, 4), rng): ad.sum(ad.mul(ad.softmax(t), c)), (3, 4)),
    "log": lambda rng: (lambda t: ad.sum(ad.log(t)), (3, 4)),
    "exp": lambda rng: (lambda t: ad.sum(ad.exp(t)), (3, 4)),
    "mean": lambda rng: (lambda t: ad.mean(t), (3, 4)),
    "sum": lambda rng: (
        lambda t, c=_sample((3,), rng): ad.sum(ad.mul(ad.sum(t, axis=1), c)), (3, 4)),
    "embedding-gather": lambda rng: (
        lambda t: ad.sum(ad.embedding_gather(t, np.array([0, 2, 2, 1]))), (3, 4)),
    "transpose-last-two": lambda rng: (
        lambda t, c=_sample((4, 3), rng): ad.sum(ad.mul(ad.transpose_last_two(t), c)),
        (3, 4)),
    "relu": lambda rng: (lambda t: ad.sum(ad.relu(t)), (3, 4)),
    "layer-normalize-last-dim": lambda rng: (
        lambda t, c=_sample((3, 4), rng): ad.sum(ad.mul(ad.layer_norm(t), c)), (3, 4)),
    "concat": lambda rng: (
        lambda t, c=_sample((3, 8), rng): ad.sum(ad.mul(ad.concat([t, t], axis=1), c)),
        (3, 4)),
    "slice": lambda rng: (lambda t: ad.sum(ad.slice_axis(t, 1, 1, 3)), (3, 4)),
    "clip": lambda rng: (lambda t: ad.sum(ad.clip(t, -1.5, 1.5)), (3, 4)),
}


@pytest.mark.parametrize("kind", sorted(ad.primitive_names()))
def test_primitive_gradients_match_finite_differences(kind):
    rng = np.random.default_rng(hash(kind) % (2**32))
    make, shape = PRIM_CASES[kind](rng)
    if kind == "log":
        point = _sample(shape, rng, 0.5, 2.0)
    elif kind in ("relu", "clip"):
        # keep coordinates away from the kink so h=1e-3 cannot cross it
        data = rng.uniform(-2, 2, size=shape)
        data = np.where(np.abs(data) < 0.05, 0.25, data)
        if kind == "clip":
            data = np.where(np.abs(np.abs(data) - 1.5) < 0.05, 0.5, data)
        point = ad.Tensor(data)
    else:
        point = _sample(shape, rng)
    assert ad.grad_check(make, point, h=1e-3) < 1e-4


def test_primitive_registry_is_closed():
    assert set(ad.primitive_names()) == set(PRIM_CASES)


def test_apply_primitive_dispatch():
    out = ad.apply_primitive("add", [ad.Tensor([1.0]), ad.Tensor([2.0])])
    assert out.data[0] == pytest.approx(3.0)
    with pytest.raises(ValueError, match="unknown primitive"):
        ad.apply_primitive("fused-mega-op", [])
