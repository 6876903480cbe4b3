"""Finite-difference checks for every layer's backward pass, plus optimizer basics."""

import numpy as np
import pytest

from hierrec.nn import (Adam, Linear, LstmCell, Mlp, Param, RecordEmbed, ResidualStack,
                        SetAttention, clip_global_norm, softmax, zero_grads)


def fd_check(params, loss_fn, backward_fn, h=1e-6, tol=1e-6):
    """Central finite differences on every parameter entry against analytic grads."""
    zero_grads(params)
    backward_fn()
    for p in params:
        analytic = p.grad.copy()
        numeric = np.zeros_like(analytic)
        flat = p.value.reshape(-1)
        num_flat = numeric.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = loss_fn()
            flat[i] = orig - h
            down = loss_fn()
            flat[i] = orig
            num_flat[i] = (up - down) / (2 * h)
        err = np.max(np.abs(analytic - numeric) / np.maximum(1e-4, np.abs(numeric)))
        assert err < tol, f"{p.name}: max rel err {err}"


def test_linear_gradients(rng):
    lin = Linear(rng, 5, 4, "t")
    x = rng.standard_normal((3, 5))
    w = rng.standard_normal((3, 4))  # fixed projection making the loss scalar

    def loss():
        return float((lin(x) * w).sum())

    fd_check(lin.params, loss, lambda: lin.backward(x, w))


def test_mlp_gradients(rng):
    mlp = Mlp(rng, 6, 5, 2, "t")
    x = rng.standard_normal((4, 6))
    w = rng.standard_normal((4, 2))

    def loss():
        out, _ = mlp.forward(x)
        return float((out * w).sum())

    def backward():
        out, cache = mlp.forward(x)
        mlp.backward(cache, w)

    fd_check(mlp.params, loss, backward)


def test_lstm_gradients(rng):
    cell = LstmCell(rng, 3, 4, "t")
    xs = rng.standard_normal((5, 2, 3))  # five steps, batch of two
    w = rng.standard_normal((2, 4))

    def run():
        h = np.zeros((2, 4))
        c = np.zeros((2, 4))
        caches = []
        for t in range(5):
            h, c, cache = cell.step(xs[t], h, c)
            caches.append(cache)
        return h, caches

    def loss():
        h, _ = run()
        return float((h * w).sum())

    def backward():
        _, caches = run()
        dh, dc = w.copy(), np.zeros((2, 4))
        for cache in reversed(caches):
            _, dh, dc = cell.step_backward(cache, dh, dc)

    fd_check(cell.params, loss, backward)


def test_set_attention_gradients(rng):
    attn = SetAttention(rng, universe=7, d_a=3, name="t")
    ids = np.array([0, 3, 3, 6])  # duplicate id exercises the scatter-add
    w = rng.standard_normal(6)

    def loss():
        pooled, _ = attn.encode(ids)
        return float((pooled * w).sum())

    def backward():
        _, cache = attn.encode(ids)
        attn.backward(cache, d_pooled=w)

    fd_check(attn.params, loss, backward)


def test_record_embed_gradients(rng):
    emb = RecordEmbed(rng, 5, 3, "t")
    q = np.array([0, 2, 2])
    y = np.array([1.0, 0.0, 1.0])
    w = rng.standard_normal((3, 3))

    def loss():
        return float((emb.forward(q, y) * w).sum())

    fd_check(emb.params, loss, lambda: emb.backward(q, y, w))


def test_residual_stack_gradients(rng):
    stack = ResidualStack(rng, 4, depth=2, name="t")
    x = rng.standard_normal((3, 4))
    w = rng.standard_normal((3, 4))

    def loss():
        out, _ = stack.forward(x)
        return float((out * w).sum())

    def backward():
        _, caches = stack.forward(x)
        stack.backward(caches, w)

    fd_check(stack.params, loss, backward)


def test_softmax_rows_normalized(rng):
    x = rng.standard_normal((10, 6)) * 5
    p = softmax(x, axis=-1)
    assert np.allclose(p.sum(axis=-1), 1.0)
    assert np.all(p >= 0)


def test_adam_ignores_zero_gradient():
    p = Param("a", np.ones(3))
    q = Param("b", np.ones(3))
    opt = Adam([p, q], lr=0.1)
    q.grad[:] = 1.0
    opt.step()
    assert np.array_equal(p.value, np.ones(3))
    assert np.all(q.value < 1.0)


def test_adam_skips_frozen_params():
    p = Param("a", np.ones(3), trainable=False)
    opt = Adam([p], lr=0.1)
    p.grad[:] = 1.0
    opt.step()
    assert np.array_equal(p.value, np.ones(3))


def test_clip_global_norm():
    p = Param("a", np.zeros(4))
    p.grad[:] = 3.0
    norm = clip_global_norm([p], max_norm=3.0)
    assert norm == pytest.approx(6.0)
    assert np.linalg.norm(p.grad) == pytest.approx(3.0)
