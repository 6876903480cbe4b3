"""Simulated students: IRT answer model and the rule-based prerequisite simulator.

The rule-based simulator (KSS regime) pairs a one-to-one concept/question
curriculum with a prerequisite DAG: practicing a question raises the matching
concept's ability by `mastery_gain` when every prerequisite clears
`prereq_threshold`, by `locked_gain` otherwise. Answers are 3PL IRT draws.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np

from .curriculum import CurriculumMap, InteractionRecord, LearningHistory, LearningTarget, identity_curriculum
from .errors import ConfigError, StepLimitExceeded


def irt_prob(a: float, b: float, g: float, theta: float):
    """3PL item response probability g + (1-g) * logistic(1.7 * a * (theta - b))."""
    if not 0.0 <= g < 1.0:
        raise ConfigError(f"guess parameter {g} outside [0, 1)")
    z = 1.7 * a * (np.asarray(theta, dtype=np.float64) - b)
    p = g + (1.0 - g) / (1.0 + np.exp(-z))
    return float(p) if np.isscalar(theta) or np.ndim(theta) == 0 else p


# Default 10-concept prerequisite DAG: two entry concepts feeding a long
# spine with two diamonds (depths 0..7). Deep enough that practice order
# matters over a 30-step session.
DEFAULT_PREREQUISITES: tuple[tuple[int, int], ...] = (
    (0, 1), (0, 2), (1, 3), (2, 3), (3, 4), (4, 5),
    (5, 6), (5, 7), (6, 8), (7, 8), (8, 9),
)


def _topological_depths(n: int, edges: Sequence[tuple[int, int]]) -> list[int]:
    """Depth of each node in the DAG; raises ConfigError on a cycle."""
    parents = [[] for _ in range(n)]
    children = [[] for _ in range(n)]
    indeg = [0] * n
    for p, c in edges:
        if not (0 <= p < n and 0 <= c < n):
            raise ConfigError(f"prerequisite edge ({p}, {c}) outside [0, {n})")
        parents[c].append(p)
        children[p].append(c)
        indeg[c] += 1
    depth = [0] * n
    queue = [i for i in range(n) if indeg[i] == 0]
    seen = 0
    while queue:
        node = queue.pop()
        seen += 1
        for ch in children[node]:
            depth[ch] = max(depth[ch], depth[node] + 1)
            indeg[ch] -= 1
            if indeg[ch] == 0:
                queue.append(ch)
    if seen != n:
        raise ConfigError("prerequisite graph contains a cycle")
    return depth


@dataclass(frozen=True)
class KssConfig:
    n_items: int = 10
    prerequisite_edges: tuple[tuple[int, int], ...] = DEFAULT_PREREQUISITES
    discrimination: float = 1.0
    difficulty: tuple[float, ...] | None = None  # default: 1 + 0.5 * concept depth
    guess: float = 0.1
    mastery_gain: float = 1.0
    locked_gain: float = 0.1
    prereq_threshold: float = 2.0
    ability_cap: float = 3.0
    max_steps: int = 30
    answer_mode: str = "sample"

    def __post_init__(self):
        if not 0.0 <= self.guess < 1.0:
            raise ConfigError(f"guess {self.guess} outside [0, 1)")
        if not self.mastery_gain > self.locked_gain > 0.0:
            raise ConfigError("require mastery_gain > locked_gain > 0")
        if self.answer_mode not in ("sample", "threshold"):
            raise ConfigError(f"unknown answer_mode {self.answer_mode!r}")
        _topological_depths(self.n_items, self.prerequisite_edges)  # acyclicity
        if self.difficulty is not None and len(self.difficulty) != self.n_items:
            raise ConfigError("difficulty vector length must equal n_items")

    def difficulties(self) -> np.ndarray:
        if self.difficulty is not None:
            return np.asarray(self.difficulty, dtype=np.float64)
        # difficulty grows with prerequisite depth, capped below the ability limit
        depths = _topological_depths(self.n_items, self.prerequisite_edges)
        return np.minimum(3.0, 1.0 + 0.4 * np.asarray(depths, dtype=np.float64))


class StudentSession(Protocol):
    """Single-owner mutable session; one rng stream, replay-deterministic."""

    targets: LearningTarget
    e_before: int
    max_steps: int
    steps: int
    history: LearningHistory

    def answer(self, question: int) -> int: ...

    def mastery(self, targets: LearningTarget) -> int: ...


class KssSession:
    def __init__(self, config: KssConfig, targets: LearningTarget, warmup_len: int, seed: int):
        self.config = config
        self.targets = tuple(targets)
        self.max_steps = config.max_steps
        self.steps = 0
        self.history: LearningHistory = []
        self._theta = np.zeros(config.n_items)
        self._b = config.difficulties()
        self._parents: list[list[int]] = [[] for _ in range(config.n_items)]
        for p, c in config.prerequisite_edges:
            self._parents[c].append(p)
        self._rng = np.random.default_rng(seed)
        for _ in range(warmup_len):
            q = int(self._rng.integers(config.n_items))
            y = self._answer_and_learn(q)
            self.history.append(InteractionRecord(q, y))
        self.e_before = self.mastery(self.targets)

    def prob_correct(self, question: int) -> float:
        cfg = self.config
        return irt_prob(cfg.discrimination, self._b[question], cfg.guess, self._theta[question])

    def _answer_and_learn(self, question: int) -> int:
        cfg = self.config
        p = self.prob_correct(question)
        if cfg.answer_mode == "sample":
            y = int(self._rng.random() < p)
        else:
            y = int(p >= 0.5)
        concept = question  # one-to-one regime
        unlocked = all(self._theta[par] >= cfg.prereq_threshold for par in self._parents[concept])
        gain = cfg.mastery_gain if unlocked else cfg.locked_gain
        self._theta[concept] = min(cfg.ability_cap, self._theta[concept] + gain)
        return y

    def answer(self, question: int) -> int:
        if self.steps >= self.max_steps:
            raise StepLimitExceeded(f"session exhausted its {self.max_steps}-step budget")
        self.steps += 1
        y = self._answer_and_learn(int(question))
        self.history.append(InteractionRecord(int(question), y))
        return y

    def mastery(self, targets: LearningTarget) -> int:
        return int(sum(self.prob_correct(q) >= 0.5 for q in targets))


@dataclass(frozen=True)
class KssSimulator:
    config: KssConfig = field(default_factory=KssConfig)

    @property
    def n_questions(self) -> int:
        return self.config.n_items

    @property
    def max_steps(self) -> int:
        return self.config.max_steps

    def curriculum(self) -> CurriculumMap:
        return identity_curriculum(self.config.n_items)

    def reset(self, targets: LearningTarget, warmup_len: int, seed: int) -> KssSession:
        if warmup_len < 0:
            raise ConfigError("warmup_len must be >= 0")
        return KssSession(self.config, targets, warmup_len, seed)
