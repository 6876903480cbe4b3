"""Minimal numpy neural-network layers with explicit forward caches and backward passes.

Everything runs in float64. Layers accumulate parameter gradients in place
(`Param.grad`) and return input gradients, so a training step is:
zero_grads -> forwards (keeping caches) -> backwards -> clip -> Adam.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np


class Param:
    """A named tensor with an accumulated gradient."""

    __slots__ = ("name", "value", "grad", "trainable")

    def __init__(self, name: str, value: np.ndarray, trainable: bool = True):
        self.name = name
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)
        self.trainable = trainable

    def zero_grad(self) -> None:
        self.grad[...] = 0.0


def uniform_param(rng: np.random.Generator, name: str, shape, fan_in: int) -> Param:
    # init scheme: uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)]
    bound = 1.0 / math.sqrt(max(fan_in, 1))
    return Param(name, rng.uniform(-bound, bound, size=shape))


def zero_grads(params: Sequence[Param]) -> None:
    for p in params:
        p.zero_grad()


def clip_global_norm(params: Sequence[Param], max_norm: float) -> float:
    """Scale all gradients so their joint L2 norm is at most max_norm."""
    total = 0.0
    for p in params:
        if p.trainable:
            total += float(np.sum(p.grad * p.grad))
    norm = math.sqrt(total)
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / norm
        for p in params:
            if p.trainable:
                p.grad *= scale
    return norm


class Adam:
    def __init__(self, params: Sequence[Param], lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = [p for p in params if p.trainable]
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.value) for p in self.params]
        self.v = [np.zeros_like(p.value) for p in self.params]

    def step(self) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * p.grad
            v *= self.beta2
            v += (1.0 - self.beta2) * p.grad * p.grad
            p.value -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    shifted = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=axis, keepdims=True)


def log_softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    shifted = x - np.max(x, axis=axis, keepdims=True)
    return shifted - np.log(np.sum(np.exp(shifted), axis=axis, keepdims=True))


def softmax_backward(probs: np.ndarray, dprobs_dot: np.ndarray) -> np.ndarray:
    """Gradient through row-wise softmax: given dL/dp, return dL/dlogits."""
    return probs * (dprobs_dot - np.sum(dprobs_dot * probs, axis=-1, keepdims=True))


class Linear:
    def __init__(self, rng: np.random.Generator, d_in: int, d_out: int, name: str):
        self.W = uniform_param(rng, name + ".W", (d_in, d_out), d_in)
        self.b = uniform_param(rng, name + ".b", (d_out,), d_in)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return x @ self.W.value + self.b.value

    def backward(self, x: np.ndarray, dy: np.ndarray) -> np.ndarray:
        self.W.grad += x.T @ dy
        self.b.grad += dy.sum(axis=0)
        return dy @ self.W.value.T

    @property
    def params(self) -> list[Param]:
        return [self.W, self.b]


class Mlp:
    """Two-layer perceptron with ReLU, scalar-or-vector head."""

    def __init__(self, rng: np.random.Generator, d_in: int, d_hidden: int, d_out: int, name: str):
        self.l1 = Linear(rng, d_in, d_hidden, name + ".l1")
        self.l2 = Linear(rng, d_hidden, d_out, name + ".l2")

    def forward(self, x: np.ndarray):
        pre = self.l1(x)
        act = np.maximum(pre, 0.0)
        out = self.l2(act)
        return out, (x, pre, act)

    def backward(self, cache, dout: np.ndarray) -> np.ndarray:
        x, pre, act = cache
        dact = self.l2.backward(act, dout)
        dpre = dact * (pre > 0)
        return self.l1.backward(x, dpre)

    @property
    def params(self) -> list[Param]:
        return self.l1.params + self.l2.params


class LstmCell:
    """Single LSTM cell; gate layout [input, forget, cell, output]."""

    def __init__(self, rng: np.random.Generator, d_in: int, d_h: int, name: str):
        self.d_in = d_in
        self.d_h = d_h
        fan = d_in + d_h
        self.W = uniform_param(rng, name + ".W", (fan, 4 * d_h), fan)
        self.b = uniform_param(rng, name + ".b", (4 * d_h,), fan)

    def step(self, x: np.ndarray, h: np.ndarray, c: np.ndarray):
        d_h = self.d_h
        z = np.concatenate([x, h], axis=1) @ self.W.value + self.b.value
        i = sigmoid(z[:, :d_h])
        f = sigmoid(z[:, d_h : 2 * d_h])
        g = np.tanh(z[:, 2 * d_h : 3 * d_h])
        o = sigmoid(z[:, 3 * d_h :])
        c_new = f * c + i * g
        h_new = o * np.tanh(c_new)
        cache = (x, h, c, i, f, g, o, c_new)
        return h_new, c_new, cache

    def step_backward(self, cache, dh: np.ndarray, dc: np.ndarray):
        x, h, c, i, f, g, o, c_new = cache
        tanh_c = np.tanh(c_new)
        do = dh * tanh_c
        dc_total = dc + dh * o * (1.0 - tanh_c * tanh_c)
        di = dc_total * g
        df = dc_total * c
        dg = dc_total * i
        dc_prev = dc_total * f
        dz = np.concatenate(
            [
                di * i * (1.0 - i),
                df * f * (1.0 - f),
                dg * (1.0 - g * g),
                do * o * (1.0 - o),
            ],
            axis=1,
        )
        xh = np.concatenate([x, h], axis=1)
        self.W.grad += xh.T @ dz
        self.b.grad += dz.sum(axis=0)
        dxh = dz @ self.W.value.T
        return dxh[:, : self.d_in], dxh[:, self.d_in :], dc_prev

    @property
    def params(self) -> list[Param]:
        return [self.W, self.b]


class SetAttention:
    """Single-head scaled dot-product self-attention over one-hot element rows.

    Elements live in a fixed universe of size U; the one-hot inputs reduce
    query/key/value projections to row gathers. The per-element output is
    the 2*d_a augmented vector [projected one-hot ; attention output].
    """

    def __init__(self, rng: np.random.Generator, universe: int, d_a: int, name: str):
        self.universe = universe
        self.d_a = d_a
        self.Wq = uniform_param(rng, name + ".Wq", (universe, d_a), universe)
        self.Wk = uniform_param(rng, name + ".Wk", (universe, d_a), universe)
        self.Wv = uniform_param(rng, name + ".Wv", (universe, d_a), universe)
        self.Wo = uniform_param(rng, name + ".Wo", (universe, d_a), universe)
        self.bo = uniform_param(rng, name + ".bo", (d_a,), universe)

    def forward(self, ids: np.ndarray):
        """Augmented rows (s, 2*d_a), attention weights (s, s), and a cache."""
        ids = np.asarray(ids, dtype=np.intp)
        scale = 1.0 / math.sqrt(self.d_a)
        q = self.Wq.value[ids]
        k = self.Wk.value[ids]
        v = self.Wv.value[ids]
        attn = softmax(q @ k.T * scale, axis=-1)
        attended = attn @ v
        proj = self.Wo.value[ids] + self.bo.value
        aug = np.concatenate([proj, attended], axis=1)
        cache = (ids, q, k, v, attn)
        return aug, attn, cache

    def encode(self, ids: np.ndarray):
        """Mean-pooled augmented representation of the element set."""
        aug, _, cache = self.forward(ids)
        return aug.mean(axis=0), cache

    def backward(self, cache, d_aug: np.ndarray = None, d_pooled: np.ndarray = None) -> None:
        ids, q, k, v, attn = cache
        s = len(ids)
        scale = 1.0 / math.sqrt(self.d_a)
        if d_aug is None:
            d_aug = np.zeros((s, 2 * self.d_a))
        else:
            d_aug = d_aug.copy()
        if d_pooled is not None:
            d_aug += d_pooled[None, :] / s
        d_proj = d_aug[:, : self.d_a]
        d_attended = d_aug[:, self.d_a :]
        np.add.at(self.Wo.grad, ids, d_proj)
        self.bo.grad += d_proj.sum(axis=0)
        d_attn = d_attended @ v.T
        dv = attn.T @ d_attended
        d_scores = softmax_backward(attn, d_attn) * scale
        dq = d_scores @ k
        dk = d_scores.T @ q
        np.add.at(self.Wq.grad, ids, dq)
        np.add.at(self.Wk.grad, ids, dk)
        np.add.at(self.Wv.grad, ids, dv)

    @property
    def params(self) -> list[Param]:
        return [self.Wq, self.Wk, self.Wv, self.Wo, self.bo]


class RecordEmbed:
    """Linear map of a [question one-hot ; correctness scalar] record (f_z)."""

    def __init__(self, rng: np.random.Generator, n_questions: int, d_z: int, name: str):
        fan = n_questions + 1
        self.Wq = uniform_param(rng, name + ".Wq", (n_questions, d_z), fan)
        self.wy = uniform_param(rng, name + ".wy", (d_z,), fan)
        self.b = uniform_param(rng, name + ".b", (d_z,), fan)

    def forward(self, q_ids: np.ndarray, ys: np.ndarray) -> np.ndarray:
        q_ids = np.asarray(q_ids, dtype=np.intp)
        ys = np.asarray(ys, dtype=np.float64)
        return self.Wq.value[q_ids] + ys[:, None] * self.wy.value + self.b.value

    def backward(self, q_ids: np.ndarray, ys: np.ndarray, dz: np.ndarray) -> None:
        q_ids = np.asarray(q_ids, dtype=np.intp)
        ys = np.asarray(ys, dtype=np.float64)
        np.add.at(self.Wq.grad, q_ids, dz)
        self.wy.grad += (ys[:, None] * dz).sum(axis=0)
        self.b.grad += dz.sum(axis=0)

    @property
    def params(self) -> list[Param]:
        return [self.Wq, self.wy, self.b]


class ResidualStack:
    """Depth residual feed-forward blocks: x <- x + L2(relu(L1(x)))."""

    def __init__(self, rng: np.random.Generator, width: int, depth: int, name: str):
        self.blocks = [
            (Linear(rng, width, width, f"{name}.block{i}.l1"),
             Linear(rng, width, width, f"{name}.block{i}.l2"))
            for i in range(depth)
        ]

    def forward(self, x: np.ndarray):
        caches = []
        for l1, l2 in self.blocks:
            pre = l1(x)
            act = np.maximum(pre, 0.0)
            out = x + l2(act)
            caches.append((x, pre, act))
            x = out
        return x, caches

    def backward(self, caches, dout: np.ndarray) -> np.ndarray:
        for (l1, l2), (x, pre, act) in zip(reversed(self.blocks), reversed(caches)):
            dact = l2.backward(act, dout)
            dpre = dact * (pre > 0)
            dout = dout + l1.backward(x, dpre)
        return dout

    @property
    def params(self) -> list[Param]:
        return [p for l1, l2 in self.blocks for p in l1.params + l2.params]


class LinearStack:
    """Single linear map standing in for the residual stack (ablation backbone)."""

    def __init__(self, rng: np.random.Generator, width: int, name: str):
        self.lin = Linear(rng, width, width, name + ".lin")

    def forward(self, x: np.ndarray):
        return self.lin(x), x

    def backward(self, cache, dout: np.ndarray) -> np.ndarray:
        return self.lin.backward(cache, dout)

    @property
    def params(self) -> list[Param]:
        return self.lin.params
