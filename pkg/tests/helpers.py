"""Shared test doubles."""

import numpy as np

from hierrec.curriculum import InteractionRecord
from hierrec.errors import StepLimitExceeded


class StubSession:
    """Coin-flip student with monotone random mastery; structural tests only."""

    def __init__(self, targets, warmup_len, seed, n_questions, max_steps=1000):
        rng = np.random.default_rng(seed)
        self.targets = tuple(targets)
        self.max_steps = max_steps
        self.steps = 0
        self.n_questions = n_questions
        self.history = [
            InteractionRecord(int(rng.integers(n_questions)), int(rng.integers(2)))
            for _ in range(warmup_len)
        ]
        self._rng = rng
        self._mastered = 0
        self.e_before = 0

    def answer(self, question: int) -> int:
        if self.steps >= self.max_steps:
            raise StepLimitExceeded("stub budget exhausted")
        self.steps += 1
        y = int(self._rng.random() < 0.5)
        if self._mastered < len(self.targets) and self._rng.random() < 0.4:
            self._mastered += 1
        self.history.append(InteractionRecord(int(question), y))
        return y

    def mastery(self, targets) -> int:
        return self._mastered


class StubSimulator:
    def __init__(self, n_questions, max_steps=1000):
        self.n_questions = n_questions
        self.max_steps = max_steps

    def reset(self, targets, warmup_len, seed):
        return StubSession(targets, warmup_len, seed, self.n_questions, self.max_steps)
