"""Two-level decision maker with a pluggable pointer backbone.

The backbone transforms a learning state through residual feed-forward
blocks; action logits are inner products with learned action embeddings, so
the same module scores any candidate subset. High and low levels share the
structure but not the parameters.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigError, EmptyActionSet, EmptyCandidateSet, KTooLarge
from .nn import LinearStack, Param, ResidualStack, log_softmax, softmax, uniform_param

SAMPLE, GREEDY = "sample", "greedy"


@dataclass(frozen=True)
class BackboneConfig:
    kind: str = "mlp_pointer"
    depth: int = 2
    linear: bool = False  # ablation: single linear map instead of the residual stack

    def __post_init__(self):
        if self.kind != "mlp_pointer":
            raise ConfigError(f"unknown backbone kind {self.kind!r}")
        if self.depth < 1:
            raise ConfigError("backbone depth must be >= 1")


@dataclass
class ActionDistribution:
    support: np.ndarray  # ordered action ids
    probs: np.ndarray    # probabilities over the support; off-support mass is zero

    def prob_of(self, action: int) -> float:
        hits = np.nonzero(self.support == action)[0]
        return float(self.probs[hits[0]]) if hits.size else 0.0


@dataclass
class PolicyDecision:
    level: str
    distribution: ActionDistribution
    chosen: tuple[int, ...]
    log_prob: float  # sum of chosen-action log-probabilities


class PointerModule:
    """Backbone stack plus an action-embedding table over a fixed universe."""

    def __init__(self, rng: np.random.Generator, universe: int, width: int,
                 config: BackboneConfig, name: str):
        if config.linear:
            self.stack = LinearStack(rng, width, name + ".stack")
        else:
            self.stack = ResidualStack(rng, width, config.depth, name + ".stack")
        self.emb = uniform_param(rng, name + ".emb", (universe, width), width)

    def logits(self, state: np.ndarray, action_ids: np.ndarray):
        """Pointer logits for each row of `state` against `action_ids`."""
        u, stack_cache = self.stack.forward(np.atleast_2d(state))
        out = u @ self.emb.value[action_ids].T
        return out, (u, stack_cache, np.asarray(action_ids, dtype=np.intp))

    def logits_backward(self, cache, dlogits: np.ndarray) -> np.ndarray:
        u, stack_cache, action_ids = cache
        dlogits = np.atleast_2d(dlogits)
        np.add.at(self.emb.grad, action_ids, dlogits.T @ u)
        du = dlogits @ self.emb.value[action_ids]
        return self.stack.backward(stack_cache, du)

    @property
    def params(self) -> list[Param]:
        return self.stack.params + [self.emb]


def sample_without_replacement(probs: np.ndarray, k: int, rng: np.random.Generator) -> list[int]:
    """k distinct indices via iterated renormalized categorical draws."""
    p = np.asarray(probs, dtype=np.float64).copy()
    chosen: list[int] = []
    for _ in range(k):
        cum = np.cumsum(p)
        u = rng.random() * cum[-1]
        j = int(np.searchsorted(cum, u, side="right"))
        j = min(j, len(p) - 1)
        chosen.append(j)
        p[j] = 0.0
    return chosen


def greedy_top_k(probs: np.ndarray, k: int) -> list[int]:
    """Top-k by probability; ties break toward the smallest index."""
    order = np.lexsort((np.arange(len(probs)), -probs))
    return [int(i) for i in order[:k]]


class HierPolicy:
    def __init__(self, rng: np.random.Generator, m: int, n: int, width: int,
                 config: BackboneConfig | None = None):
        self.config = config or BackboneConfig()
        self.m = m
        self.n = n
        self.high = PointerModule(rng, m, width, self.config, "policy.high")
        self.low = PointerModule(rng, n, width, self.config, "policy.low")

    @property
    def params(self) -> list[Param]:
        return self.high.params + self.low.params

    def _module(self, level: str) -> PointerModule:
        return self.high if level == "high" else self.low

    def score_actions(self, state: np.ndarray, actions: Sequence[int], level: str) -> np.ndarray:
        ids = np.asarray(list(actions), dtype=np.intp)
        if ids.size == 0:
            raise EmptyActionSet("no actions to score")
        logits, _ = self._module(level).logits(state, ids)
        return logits[0] if logits.shape[0] == 1 else logits

    def high_step(self, state: np.ndarray, k: int = 1, mode: str = SAMPLE,
                  rng: np.random.Generator | None = None) -> PolicyDecision:
        """Select k distinct concepts from the full concept set."""
        if not 1 <= k <= self.m:
            raise KTooLarge(f"k={k} outside [1, {self.m}]")
        support = np.arange(self.m)
        logits = np.atleast_2d(self.score_actions(state, support, "high"))[0]
        probs = softmax(logits)
        if mode == GREEDY:
            rows = greedy_top_k(probs, k)
        elif mode == SAMPLE:
            rows = sample_without_replacement(probs, k, rng)
        else:
            raise ConfigError(f"unknown mode {mode!r}")
        logp = log_softmax(logits)
        return PolicyDecision(
            level="high",
            distribution=ActionDistribution(support=support, probs=probs),
            chosen=tuple(int(support[r]) for r in rows),
            log_prob=float(sum(logp[r] for r in rows)),
        )

    def low_step(self, state: np.ndarray, candidates: Sequence[int], mode: str = SAMPLE,
                 rng: np.random.Generator | None = None) -> PolicyDecision:
        """Select one question; the distribution is supported exactly on the candidates."""
        support = np.asarray(sorted(candidates) if isinstance(candidates, (set, frozenset))
                             else list(candidates), dtype=np.intp)
        if support.size == 0:
            raise EmptyCandidateSet("low-level candidate set is empty")
        logits = np.atleast_2d(self.score_actions(state, support, "low"))[0]
        probs = softmax(logits)
        if mode == GREEDY:
            row = greedy_top_k(probs, 1)[0]
        elif mode == SAMPLE:
            row = sample_without_replacement(probs, 1, rng)[0]
        else:
            raise ConfigError(f"unknown mode {mode!r}")
        logp = log_softmax(logits)
        return PolicyDecision(
            level="low",
            distribution=ActionDistribution(support=support.copy(), probs=probs),
            chosen=(int(support[row]),),
            log_prob=float(logp[row]),
        )

    def flat_step(self, state: np.ndarray, mode: str = SAMPLE,
                  rng: np.random.Generator | None = None) -> PolicyDecision:
        """Low-level step over the full question set (hierarchy removed)."""
        return self.low_step(state, np.arange(self.n), mode, rng)
