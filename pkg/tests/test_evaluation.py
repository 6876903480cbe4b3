"""Learning-effect metric, evaluation protocols, the random baseline, and sweeps."""

import numpy as np
import pytest

from hierrec.errors import AlreadyMastered, ConfigError
from hierrec.evaluation import (EvalProtocol, HierAgent, RandomAgent, evaluate,
                                learning_effect, random_policy, sweep)
from hierrec.model import build_model
from hierrec.scenario import Scenario
from hierrec.simulators import KssSimulator

from .conftest import MINI_ENC
from .helpers import StubSimulator


class TestLearningEffect:
    def test_examples(self):
        assert learning_effect(5, 2, 10) == pytest.approx(0.375)
        assert learning_effect(3, 3, 10) == 0.0
        assert learning_effect(10, 4, 10) == 1.0

    def test_already_mastered(self):
        with pytest.raises(AlreadyMastered):
            learning_effect(10, 10, 10)

    def test_range_validation(self):
        with pytest.raises(ValueError):
            learning_effect(11, 0, 10)
        with pytest.raises(ValueError):
            learning_effect(5, -1, 10)

    def test_strictly_increasing_in_e_after(self):
        values = [learning_effect(e, 2, 10) for e in range(11)]
        assert all(b > a for a, b in zip(values, values[1:]))

    def test_bounds(self, rng):
        for _ in range(200):
            e_max = int(rng.integers(1, 50))
            e_b = int(rng.integers(0, e_max))
            e_a = int(rng.integers(0, e_max + 1))
            delta = learning_effect(e_a, e_b, e_max)
            assert -e_b / (e_max - e_b) <= delta <= 1.0


def kss_scenario():
    sim = KssSimulator()
    return Scenario(curriculum=sim.curriculum(), simulator=sim)


def kss_agent(seed=0, k=1):
    scenario = kss_scenario()
    model = build_model(np.random.default_rng(seed), 10, 10, MINI_ENC)
    return HierAgent(model, scenario.curriculum, k=k), scenario


class TestEvaluate:
    def test_zero_budget_zero_effect(self):
        agent, scenario = kss_agent()
        protocol = EvalProtocol(budgets=(0,), n_students=3, seeds=(0,))
        result = evaluate(agent, scenario, protocol)
        assert result.mean(0, 0) == 0.0

    def test_row_schema_and_counts(self):
        agent, scenario = kss_agent()
        protocol = EvalProtocol(budgets=(5, 10), n_students=4, seeds=(0, 1, 2, 3, 4))
        result = evaluate(agent, scenario, protocol)
        assert len(result.rows) == 10  # 2 budgets x 5 seeds
        row = result.rows[0]
        assert set(row) == {"simulator", "budget", "seed", "n_students", "mean_delta", "std_delta"}
        samples = result.samples[(5, 0)]
        assert row["mean_delta"] == pytest.approx(samples.mean())
        assert row["std_delta"] == pytest.approx(samples.std())

    def test_coldstart_sessions_have_empty_history(self):
        scenario = kss_scenario()

        class SpyAgent:
            seen = []

            def run(self, sessions, steps, rng):
                self.seen.extend(len(s.history) for s in sessions)
                return np.zeros(len(sessions))

        protocol = EvalProtocol(budgets=(1,), n_students=5, seeds=(0,), coldstart=True)
        evaluate(SpyAgent(), scenario, protocol)
        assert SpyAgent.seen == [0] * 5

    def test_deterministic_bitwise(self):
        agent, scenario = kss_agent()
        protocol = EvalProtocol(budgets=(10,), n_students=8, seeds=(0, 1))
        first = evaluate(agent, scenario, protocol)
        second = evaluate(agent, scenario, protocol)
        assert [r["mean_delta"] for r in first.rows] == [r["mean_delta"] for r in second.rows]

    def test_does_not_mutate_policy(self):
        agent, scenario = kss_agent()
        before = agent.model.state_hash()
        evaluate(agent, scenario, EvalProtocol(budgets=(10,), n_students=4, seeds=(0,)))
        assert agent.model.state_hash() == before

    def test_budget_exceeding_simulator_rejected(self):
        agent, scenario = kss_agent()
        with pytest.raises(ConfigError):
            evaluate(agent, scenario, EvalProtocol(budgets=(31,), n_students=1, seeds=(0,)))

    def test_same_students_across_budgets(self):
        # per-student session streams are keyed by (seed, student), not budget
        scenario = kss_scenario()

        class TargetSpy:
            by_budget = {}

            def run(self, sessions, steps, rng):
                self.by_budget.setdefault(steps, []).extend(s.targets for s in sessions)
                return np.zeros(len(sessions))

        protocol = EvalProtocol(budgets=(5, 10), n_students=6, seeds=(0,))
        evaluate(TargetSpy(), scenario, protocol)
        assert TargetSpy.by_budget[5] == TargetSpy.by_budget[10]


class TestRandomPolicy:
    def test_single_question_universe(self):
        agent = random_policy(1)
        sim = StubSimulator(1)
        sessions = [sim.reset((0,), 0, s) for s in range(3)]
        agent.run(sessions, 4, np.random.default_rng(0))
        for session in sessions:
            assert all(rec.question == 0 for rec in session.history)

    def test_empirical_uniformity(self):
        n = 10
        draws = 10000
        agent = random_policy(n)
        sim = StubSimulator(n, max_steps=draws)
        session = sim.reset((0,), 0, 0)
        agent.run([session], draws, np.random.default_rng(123))
        counts = np.bincount([rec.question for rec in session.history], minlength=n)
        expectation = draws / n
        sigma = np.sqrt(draws * (1 / n) * (1 - 1 / n))
        assert np.all(np.abs(counts - expectation) <= 3 * sigma)

    def test_seeded_repeatability(self):
        agent = random_policy(7)
        seqs = []
        for _ in range(2):
            sim = StubSimulator(7)
            session = sim.reset((0,), 0, 5)
            agent.run([session], 20, np.random.default_rng(9))
            seqs.append([rec.question for rec in session.history])
        assert seqs[0] == seqs[1]


class TestSweep:
    def test_single_value_axis(self):
        _, scenario = kss_agent()

        def factory(k=None):
            agent, _ = kss_agent(k=k if k else 1)
            return agent

        protocol = EvalProtocol(budgets=(5,), n_students=2, seeds=(0,))
        rows = sweep(factory, "k_concepts", [1], scenario, protocol)
        assert len(rows) == 1
        assert rows[0]["axis"] == "k_concepts" and rows[0]["value"] == 1

    def test_warmup_axis_includes_cold_and_reference(self):
        _, scenario = kss_agent()
        seen = []

        class LenSpy:
            def run(self, sessions, steps, rng):
                seen.extend({len(s.history) for s in sessions})
                return np.zeros(len(sessions))

        protocol = EvalProtocol(budgets=(1,), n_students=2, seeds=(0,))
        sweep(lambda k=None: LenSpy(), "warmup_len", [0, 20], scenario, protocol)
        assert set(seen) == {0, 20}

    def test_unknown_axis(self):
        _, scenario = kss_agent()
        with pytest.raises(ConfigError):
            sweep(lambda k=None: None, "gamma", [1], scenario, EvalProtocol())
