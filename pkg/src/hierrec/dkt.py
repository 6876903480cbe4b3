"""Deep knowledge tracing: next-answer prediction model and the data-driven simulator.

The model is a single LSTM over (question, correctness) one-hots with a
per-question sigmoid head. A trained model doubles as a stateful student
simulator: answering a question advances the recurrent state, mastery is the
count of targets whose predicted probability clears 0.5.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from .curriculum import InteractionRecord, LearningHistory, LearningTarget
from .errors import ConfigError, InsufficientData, StepLimitExceeded
from .nn import Adam, Linear, Param, sigmoid, uniform_param, zero_grads

KT_SCHEMA_VERSION = "kt-checkpoint-v1"


class OneHotLstm:
    """LSTM whose input is a one-hot over 2n (question, correctness) pairs."""

    def __init__(self, rng: np.random.Generator, n_inputs: int, d_h: int, name: str):
        self.n_inputs = n_inputs
        self.d_h = d_h
        fan = n_inputs + d_h
        self.Wx = uniform_param(rng, name + ".Wx", (n_inputs, 4 * d_h), fan)
        self.Wh = uniform_param(rng, name + ".Wh", (d_h, 4 * d_h), fan)
        self.b = uniform_param(rng, name + ".b", (4 * d_h,), fan)

    def step(self, idx: np.ndarray, h: np.ndarray, c: np.ndarray):
        d_h = self.d_h
        z = self.Wx.value[idx] + h @ self.Wh.value + self.b.value
        i = sigmoid(z[:, :d_h])
        f = sigmoid(z[:, d_h : 2 * d_h])
        g = np.tanh(z[:, 2 * d_h : 3 * d_h])
        o = sigmoid(z[:, 3 * d_h :])
        c_new = f * c + i * g
        h_new = o * np.tanh(c_new)
        return h_new, c_new, (idx, h, c, i, f, g, o, c_new)

    def step_backward(self, cache, dh: np.ndarray, dc: np.ndarray):
        idx, h, c, i, f, g, o, c_new = cache
        tanh_c = np.tanh(c_new)
        do = dh * tanh_c
        dc_total = dc + dh * o * (1.0 - tanh_c * tanh_c)
        di = dc_total * g
        df = dc_total * c
        dg = dc_total * i
        dc_prev = dc_total * f
        dz = np.concatenate(
            [di * i * (1 - i), df * f * (1 - f), dg * (1 - g * g), do * o * (1 - o)], axis=1
        )
        np.add.at(self.Wx.grad, idx, dz)
        self.Wh.grad += h.T @ dz
        self.b.grad += dz.sum(axis=0)
        dh_prev = dz @ self.Wh.value.T
        return dh_prev, dc_prev

    @property
    def params(self) -> list[Param]:
        return [self.Wx, self.Wh, self.b]


class KtModel:
    """Recurrent next-answer predictor over n questions."""

    def __init__(self, n_questions: int, hidden_dim: int, seed: int = 0):
        rng = np.random.default_rng(seed)
        self.n_questions = n_questions
        self.hidden_dim = hidden_dim
        self.lstm = OneHotLstm(rng, 2 * n_questions, hidden_dim, "kt.lstm")
        self.head = Linear(rng, hidden_dim, n_questions, "kt.head")

    @property
    def params(self) -> list[Param]:
        return self.lstm.params + self.head.params

    def init_state(self, batch: int = 1):
        return np.zeros((batch, self.hidden_dim)), np.zeros((batch, self.hidden_dim))

    def prob_from_state(self, h: np.ndarray, questions: np.ndarray) -> np.ndarray:
        """P(correct) for per-row questions given per-row hidden states."""
        questions = np.asarray(questions, dtype=np.intp)
        logits = (h * self.head.W.value[:, questions].T).sum(axis=1) + self.head.b.value[questions]
        return sigmoid(logits)

    def advance(self, h, c, questions, correct):
        idx = np.asarray(questions, dtype=np.intp) + self.n_questions * np.asarray(correct, dtype=np.intp)
        h_new, c_new, _ = self.lstm.step(idx, h, c)
        return h_new, c_new

    def predict(self, history: LearningHistory, question: int) -> float:
        """Deterministic next-answer probability after replaying the history."""
        h, c = self.init_state(1)
        for rec in history:
            h, c = self.advance(h, c, [rec.question], [rec.correct])
        return float(self.prob_from_state(h, np.array([question]))[0])

    def state_dict(self) -> dict[str, np.ndarray]:
        return {p.name: p.value for p in self.params}

    def save(self, path) -> None:
        from .checkpoint import save_arrays

        meta = {
            "schema_version": KT_SCHEMA_VERSION,
            "n_questions": self.n_questions,
            "hidden_dim": self.hidden_dim,
        }
        save_arrays(path, self.state_dict(), meta)

    @classmethod
    def load(cls, path) -> "KtModel":
        from .checkpoint import load_arrays

        arrays, meta = load_arrays(path)
        if meta.get("schema_version") != KT_SCHEMA_VERSION:
            raise ConfigError(f"unsupported KT checkpoint schema: {meta.get('schema_version')}")
        model = cls(meta["n_questions"], meta["hidden_dim"])
        for p in model.params:
            p.value[...] = arrays[p.name]
        return model


def dkt_predict(model: KtModel, history: LearningHistory, question: int) -> float:
    return model.predict(history, question)


@dataclass
class DktTrainConfig:
    hidden_dim: int = 64
    epochs: int = 8
    learning_rate: float = 5e-3
    batch_size: int = 64
    holdout_fraction: float = 0.2
    seed: int = 0


@dataclass
class DktReport:
    n_train: int
    n_heldout: int
    heldout_auc: float | None  # None when the held-out labels are single-class
    final_train_bce: float
    single_class: bool = False


def _length_batches(indices: list[int], lengths: list[int], batch_size: int):
    by_len: dict[int, list[int]] = {}
    for i in indices:
        by_len.setdefault(lengths[i], []).append(i)
    for length in sorted(by_len):
        group = by_len[length]
        for lo in range(0, len(group), batch_size):
            yield length, group[lo : lo + batch_size]


def _batch_forward_backward(model, q_arr, y_arr, train: bool):
    """Mean next-answer BCE over a same-length batch; backprops when train."""
    batch, length = q_arr.shape
    h, c = model.init_state(batch)
    hs, caches, probs = [], [], []
    for t in range(length):
        hs.append(h)
        probs.append(model.prob_from_state(h, q_arr[:, t]))
        if t < length - 1:
            h, c, cache = model.lstm.step(q_arr[:, t] + model.n_questions * y_arr[:, t], h, c)
            caches.append(cache)
    probs = np.stack(probs, axis=1)
    clipped = np.clip(probs, 1e-7, 1.0 - 1e-7)
    bce = -np.mean(y_arr * np.log(clipped) + (1 - y_arr) * np.log(1 - clipped))
    if train:
        n_pos = batch * length
        w = model.head.W.value
        dh, dc = np.zeros_like(h), np.zeros_like(c)
        for t in range(length - 1, -1, -1):
            if t < length - 1:
                dh, dc = model.lstm.step_backward(caches[t], dh, dc)
            dlogit = (probs[:, t] - y_arr[:, t]) / n_pos
            cols = q_arr[:, t]
            np.add.at(model.head.W.grad.T, cols, dlogit[:, None] * hs[t])
            np.add.at(model.head.b.grad, cols, dlogit)
            dh = dh + dlogit[:, None] * w[:, cols].T
    return bce, probs


def dkt_train(
    histories: list[LearningHistory], config: DktTrainConfig | None = None, n_questions: int | None = None
) -> tuple[KtModel, DktReport]:
    """Fit the next-answer model on interaction histories; reports held-out AUC."""
    config = config or DktTrainConfig()
    histories = [h for h in histories if len(h) > 0]
    if not histories:
        raise InsufficientData("need at least one non-empty history")
    if n_questions is None:
        n_questions = 1 + max(rec.question for h in histories for rec in h)
    rng = np.random.default_rng(config.seed)
    model = KtModel(n_questions, config.hidden_dim, seed=int(rng.integers(2**31)))

    order = rng.permutation(len(histories))
    n_hold = int(len(histories) * config.holdout_fraction)
    if len(histories) > 1 and n_hold == 0:
        n_hold = 1
    hold_idx = list(order[:n_hold])
    train_idx = list(order[n_hold:]) or hold_idx
    lengths = [len(h) for h in histories]
    q_arrs = [np.array([r.question for r in h], dtype=np.intp) for h in histories]
    y_arrs = [np.array([r.correct for r in h], dtype=np.float64) for h in histories]

    optimizer = Adam(model.params, lr=config.learning_rate)
    final_bce = math.nan
    for _ in range(config.epochs):
        epoch_order = list(train_idx)
        rng.shuffle(epoch_order)
        total, count = 0.0, 0
        for _, batch_ids in _length_batches(epoch_order, lengths, config.batch_size):
            q_arr = np.stack([q_arrs[i] for i in batch_ids])
            y_arr = np.stack([y_arrs[i] for i in batch_ids])
            zero_grads(model.params)
            bce, _ = _batch_forward_backward(model, q_arr, y_arr.astype(np.intp), train=True)
            optimizer.step()
            total += bce * len(batch_ids)
            count += len(batch_ids)
        final_bce = total / max(count, 1)

    scores, labels = [], []
    for _, batch_ids in _length_batches(hold_idx, lengths, config.batch_size):
        q_arr = np.stack([q_arrs[i] for i in batch_ids])
        y_arr = np.stack([y_arrs[i] for i in batch_ids]).astype(np.intp)
        _, probs = _batch_forward_backward(model, q_arr, y_arr, train=False)
        scores.append(probs.ravel())
        labels.append(y_arr.ravel())
    scores = np.concatenate(scores) if scores else np.array([])
    labels = np.concatenate(labels) if labels else np.array([])
    auc, single = auc_score(scores, labels)
    report = DktReport(
        n_train=len(train_idx),
        n_heldout=len(hold_idx),
        heldout_auc=auc,
        final_train_bce=float(final_bce),
        single_class=single,
    )
    return model, report


def auc_score(scores: np.ndarray, labels: np.ndarray) -> tuple[float | None, bool]:
    """Rank-based ROC AUC; (None, True) when labels are single-class."""
    labels = np.asarray(labels)
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        return None, True
    ranks = rankdata(scores)
    auc = (ranks[labels == 1].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)
    return float(auc), False


@dataclass(frozen=True)
class KtSimConfig:
    hidden_dim: int = 64
    warmup_len: int = 20
    n_targets: int = 400
    max_steps: int = 200
    answer_mode: str = "sample"

    def __post_init__(self):
        if self.warmup_len < 0:
            raise ConfigError("warmup_len must be >= 0")
        if self.max_steps < 1:
            raise ConfigError("max_steps must be >= 1")
        if self.answer_mode not in ("sample", "threshold"):
            raise ConfigError(f"unknown answer_mode {self.answer_mode!r}")


class KtSession:
    """Student session driven by a trained (or stub) KT model."""

    def __init__(self, model: KtModel, config: KtSimConfig, targets: LearningTarget,
                 warmup_len: int, seed: int):
        self.model = model
        self.config = config
        self.targets = tuple(targets)
        self.max_steps = config.max_steps
        self.steps = 0
        self.history: LearningHistory = []
        self._h, self._c = model.init_state(1)
        self._rng = np.random.default_rng(seed)
        for _ in range(warmup_len):
            q = int(self._rng.integers(model.n_questions))
            self._consume(q)
        self.e_before = self.mastery(self.targets)

    def prob_correct(self, question: int) -> float:
        return float(self.model.prob_from_state(self._h, np.array([question]))[0])

    def _consume(self, question: int) -> int:
        p = self.prob_correct(question)
        if self.config.answer_mode == "sample":
            y = int(self._rng.random() < p)
        else:
            y = int(p >= 0.5)
        self._h, self._c = self.model.advance(self._h, self._c, [question], [y])
        self.history.append(InteractionRecord(question, y))
        return y

    def answer(self, question: int) -> int:
        if self.steps >= self.max_steps:
            raise StepLimitExceeded(f"session exhausted its {self.max_steps}-step budget")
        self.steps += 1
        return self._consume(int(question))

    def mastery(self, targets: LearningTarget) -> int:
        probs = self.model.prob_from_state(
            np.repeat(self._h, len(targets), axis=0), np.asarray(targets, dtype=np.intp)
        )
        return int(np.sum(probs >= 0.5))


@dataclass(frozen=True)
class KtSimulator:
    model: KtModel
    config: KtSimConfig = field(default_factory=KtSimConfig)

    @property
    def n_questions(self) -> int:
        return self.model.n_questions

    @property
    def max_steps(self) -> int:
        return self.config.max_steps

    def reset(self, targets: LearningTarget, warmup_len: int, seed: int) -> KtSession:
        if warmup_len < 0:
            raise ConfigError("warmup_len must be >= 0")
        return KtSession(self.model, self.config, targets, warmup_len, seed)
