"""A scenario bundles the curriculum, a simulator, and target sampling."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .curriculum import CurriculumMap, LearningTarget
from .errors import ConfigError


@dataclass(frozen=True)
class Scenario:
    curriculum: CurriculumMap
    simulator: object  # KssSimulator | KtSimulator | any .reset(targets, warmup, seed)
    target_size_min: int = 3
    target_size_max: int = 5
    name: str = "kss"

    def __post_init__(self):
        if not 1 <= self.target_size_min <= self.target_size_max <= self.curriculum.n:
            raise ConfigError("target size range must satisfy 1 <= lo <= hi <= n")

    @property
    def max_steps(self) -> int:
        return self.simulator.max_steps

    def sample_targets(self, rng: np.random.Generator) -> LearningTarget:
        size = int(rng.integers(self.target_size_min, self.target_size_max + 1))
        ids = rng.choice(self.curriculum.n, size=size, replace=False)
        return tuple(sorted(int(q) for q in ids))

    def sample_session(self, rng: np.random.Generator, warmup_len: int):
        """Fresh session whose targets are not already fully mastered."""
        for _ in range(100):
            targets = self.sample_targets(rng)
            seed = int(rng.integers(2**63))
            session = self.simulator.reset(targets, warmup_len, seed)
            if session.e_before < len(targets):
                return session
        raise ConfigError("could not sample a session with unmastered targets in 100 tries")
