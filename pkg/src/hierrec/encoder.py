"""Learning-state encoder.

Fuses four signals into one state vector per decision level:
history (record embedding + LSTM), learning target (mean-pooled attentive
encoding), the current concept or candidate-question set (same machinery),
and a learned per-level prompt vector. The high and low levels share the
history/target projections; the set projection and prompt are level-specific.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .curriculum import LearningHistory
from .errors import ConfigError, DimensionMismatch, ElementNotInSet, EmptySet
from .nn import Linear, LstmCell, Param, RecordEmbed, SetAttention, uniform_param

HIGH, LOW = "high", "low"


@dataclass(frozen=True)
class EncoderConfig:
    d_a: int = 64   # attentive element dim
    d_z: int = 64   # record embedding dim
    d_h: int = 128  # history state dim
    d_m: int = 256  # learning-state dim (4096 reproduces the full-scale setup)
    attention_heads: int = 1

    def __post_init__(self):
        if min(self.d_a, self.d_z, self.d_h, self.d_m) < 1:
            raise ConfigError("all encoder dimensions must be >= 1")
        if self.attention_heads != 1:
            raise ConfigError("only single-head attention is supported")


@dataclass
class ElementRepr:
    onehot: np.ndarray      # (universe,)
    attentive: np.ndarray   # (d_a,)
    augmented: np.ndarray   # (2 * d_a,)
    attention_weights: np.ndarray  # weights of this element over the set


@dataclass
class LearningState:
    level: str
    vector: np.ndarray  # (d_m,)


class HistoryState:
    """Streaming LSTM state over a learning history; starts at zeros."""

    __slots__ = ("h", "c")

    def __init__(self, h: np.ndarray, c: np.ndarray):
        self.h = h
        self.c = c


class StateEncoder:
    def __init__(self, rng: np.random.Generator, config: EncoderConfig, m: int, n: int):
        self.config = config
        self.m = m
        self.n = n
        self.concept_attn = SetAttention(rng, m, config.d_a, "encoder.concept_attn")
        self.question_attn = SetAttention(rng, n, config.d_a, "encoder.question_attn")
        self.record_embed = RecordEmbed(rng, n, config.d_z, "encoder.record_embed")
        self.lstm = LstmCell(rng, config.d_z, config.d_h, "encoder.lstm")
        self.fp1 = Linear(rng, config.d_h, config.d_m, "encoder.fp1")
        self.fp2 = Linear(rng, 2 * config.d_a, config.d_m, "encoder.fp2")
        self.fp3 = Linear(rng, 2 * config.d_a, config.d_m, "encoder.fp3")
        self.fp4 = Linear(rng, 2 * config.d_a, config.d_m, "encoder.fp4")
        self.prompt_high = uniform_param(rng, "encoder.prompt_high", (config.d_m,), config.d_m)
        self.prompt_low = uniform_param(rng, "encoder.prompt_low", (config.d_m,), config.d_m)

    @property
    def params(self) -> list[Param]:
        return (
            self.concept_attn.params
            + self.question_attn.params
            + self.record_embed.params
            + self.lstm.params
            + self.fp1.params
            + self.fp2.params
            + self.fp3.params
            + self.fp4.params
            + [self.prompt_high, self.prompt_low]
        )

    # -- element / set encodings ------------------------------------------

    def _attn(self, kind: str) -> SetAttention:
        if kind == "concept":
            return self.concept_attn
        if kind == "question":
            return self.question_attn
        raise ConfigError(f"unknown element kind {kind!r}")

    def element_repr(self, element: int, elements: Sequence[int], kind: str) -> ElementRepr:
        ids = list(elements)
        if not ids:
            raise EmptySet("element set is empty")
        if element not in ids:
            raise ElementNotInSet(f"{element} not in the given set")
        attn = self._attn(kind)
        aug, weights, _ = attn.forward(np.asarray(ids))
        row = ids.index(element)
        onehot = np.zeros(attn.universe)
        onehot[element] = 1.0
        return ElementRepr(
            onehot=onehot,
            attentive=aug[row, self.config.d_a :].copy(),
            augmented=aug[row].copy(),
            attention_weights=weights[row].copy(),
        )

    def encode_set(self, elements: Iterable[int], kind: str):
        ids = np.asarray(sorted(elements) if isinstance(elements, (set, frozenset)) else list(elements))
        if ids.size == 0:
            raise EmptySet("cannot encode an empty set")
        return self._attn(kind).encode(ids)

    def encode_concepts(self, concepts: Iterable[int]):
        return self.encode_set(concepts, "concept")

    def encode_questions(self, questions: Iterable[int]):
        return self.encode_set(questions, "question")

    def encode_target(self, target: Iterable[int]):
        return self.encode_set(target, "question")

    # -- history ------------------------------------------------------------

    def history_start(self, batch: int = 1) -> HistoryState:
        d_h = self.config.d_h
        return HistoryState(np.zeros((batch, d_h)), np.zeros((batch, d_h)))

    def history_step(self, state: HistoryState, questions, correct):
        """Advance the batched history state by one record per row."""
        q = np.asarray(questions, dtype=np.intp)
        y = np.asarray(correct, dtype=np.float64)
        z = self.record_embed.forward(q, y)
        h, c, lstm_cache = self.lstm.step(z, state.h, state.c)
        return HistoryState(h, c), (q, y, lstm_cache)

    def history_step_backward(self, cache, dh: np.ndarray, dc: np.ndarray):
        q, y, lstm_cache = cache
        dz, dh_prev, dc_prev = self.lstm.step_backward(lstm_cache, dh, dc)
        self.record_embed.backward(q, y, dz)
        return dh_prev, dc_prev

    def encode_history(self, history: LearningHistory) -> np.ndarray:
        """Final history vector h_t; the empty history encodes to zeros."""
        state = self.history_start(1)
        for rec in history:
            state, _ = self.history_step(state, [rec.question], [rec.correct])
        return state.h[0].copy()

    # -- prompt + fusion ------------------------------------------------------

    def prompt_vector(self, level: str) -> np.ndarray:
        if level == HIGH:
            return self.prompt_high.value
        if level == LOW:
            return self.prompt_low.value
        raise ConfigError(f"unknown level {level!r}")

    def fuse(self, level: str, h: np.ndarray, g: np.ndarray, e: np.ndarray):
        """s = fp1(h) + fp2(g) + fp_level(e) + prompt; batched over rows."""
        cfg = self.config
        h = np.atleast_2d(h)
        g = np.atleast_2d(g)
        e = np.atleast_2d(e)
        if h.shape[1] != cfg.d_h or g.shape[1] != 2 * cfg.d_a or e.shape[1] != 2 * cfg.d_a:
            raise DimensionMismatch(
                f"fuse inputs {h.shape[1]}/{g.shape[1]}/{e.shape[1]} do not match "
                f"d_h={cfg.d_h}, 2*d_a={2 * cfg.d_a}"
            )
        batch = max(h.shape[0], g.shape[0], e.shape[0])
        if batch > 1:  # keep per-row inputs so the backward pass stays a plain matmul
            h = np.broadcast_to(h, (batch, h.shape[1]))
            g = np.broadcast_to(g, (batch, g.shape[1]))
            e = np.broadcast_to(e, (batch, e.shape[1]))
        fset = self.fp3 if level == HIGH else self.fp4
        prompt = self.prompt_vector(level)
        s = self.fp1(h) + self.fp2(g) + fset(e) + prompt
        return s, (level, h, g, e)

    def fuse_backward(self, cache, ds: np.ndarray):
        """Input grads (dh, dg, de); prompt grads accumulate in place."""
        level, h, g, e = cache
        ds = np.atleast_2d(ds)
        fset = self.fp3 if level == HIGH else self.fp4
        prompt = self.prompt_high if level == HIGH else self.prompt_low
        prompt.grad += ds.sum(axis=0)
        dh = self.fp1.backward(h, ds)
        dg = self.fp2.backward(g, ds)
        de = fset.backward(e, ds)
        return dh, dg, de

    def learning_state(self, level: str, h, g, e) -> LearningState:
        s, _ = self.fuse(level, h, g, e)
        return LearningState(level=level, vector=s[0] if s.shape[0] == 1 else s)
