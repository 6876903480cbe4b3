"""Learning-effect measurement, evaluation protocols, and the random baseline."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np

from .curriculum import CurriculumMap
from .errors import AlreadyMastered, ConfigError
from .model import HierModel
from .policy import GREEDY
from .rng import substream
from .scenario import Scenario

RESULTS_HEADER = ["simulator", "budget", "seed", "n_students", "mean_delta", "std_delta"]
SWEEP_AXES = ("k_concepts", "warmup_len")
_CHUNK = 250


def learning_effect(e_after: int, e_before: int, e_max: int) -> float:
    """Normalized improvement on the targets: (E_a - E_b) / (E_max - E_b)."""
    if not (0 <= e_before <= e_max and 0 <= e_after <= e_max):
        raise ValueError(f"mastery counts ({e_after}, {e_before}) outside [0, {e_max}]")
    if e_before == e_max:
        raise AlreadyMastered("all targets mastered before the session; effect undefined")
    return (e_after - e_before) / (e_max - e_before)


@dataclass(frozen=True)
class EvalProtocol:
    budgets: tuple[int, ...] = (10, 30)
    n_students: int = 500
    coldstart: bool = False
    warmup_len: int = 20
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    mode: str = GREEDY

    def __post_init__(self):
        if self.n_students < 1:
            raise ConfigError("n_students must be >= 1")
        if any(b < 0 for b in self.budgets):
            raise ConfigError("step budgets must be >= 0")

    def effective_warmup(self) -> int:
        return 0 if self.coldstart else self.warmup_len


@dataclass
class EvalResult:
    rows: list[dict] = field(default_factory=list)
    samples: dict[tuple[int, int], np.ndarray] = field(default_factory=dict)

    def mean(self, budget: int, seed: int) -> float:
        for row in self.rows:
            if row["budget"] == budget and row["seed"] == seed:
                return row["mean_delta"]
        raise KeyError((budget, seed))

    def mean_over_seeds(self, budget: int) -> float:
        means = [row["mean_delta"] for row in self.rows if row["budget"] == budget]
        return float(np.mean(means))


class HierAgent:
    """Greedy (or sampling) recommendations from a trained model."""

    def __init__(self, model: HierModel, cmap: CurriculumMap, *, k: int = 1,
                 mode: str = GREEDY, disable_high: bool = False):
        self.model = model
        self.cmap = cmap
        self.k = k
        self.mode = mode
        self.disable_high = disable_high

    def run(self, sessions, steps: int, rng: np.random.Generator) -> np.ndarray:
        from .training import run_batch

        if steps == 0:
            return np.zeros(len(sessions))
        records, _, _ = run_batch(
            self.model, self.cmap, steps, sessions=sessions, mode=self.mode,
            k=self.k, disable_high=self.disable_high, rng=rng,
        )
        return np.array([rec.delta_u for rec in records])


class RandomAgent:
    """Uniform question selection over the full question set; no hierarchy."""

    def __init__(self, n_questions: int):
        self.n_questions = n_questions

    def run(self, sessions, steps: int, rng: np.random.Generator) -> np.ndarray:
        deltas = np.zeros(len(sessions))
        for b, session in enumerate(sessions):
            for _ in range(steps):
                session.answer(int(rng.integers(self.n_questions)))
            e_after = session.mastery(session.targets)
            deltas[b] = learning_effect(e_after, session.e_before, len(session.targets))
        return deltas


def random_policy(n_questions: int) -> RandomAgent:
    return RandomAgent(n_questions)


def evaluate(agent, scenario: Scenario, protocol: EvalProtocol) -> EvalResult:
    """Fresh sessions per (budget, seed, student); deterministic given the seeds.

    The per-student session streams are keyed by (seed, student) only, so
    different budgets replay the same students.
    """
    warmup = protocol.effective_warmup()
    result = EvalResult()
    for budget in protocol.budgets:
        if budget > scenario.max_steps:
            raise ConfigError(f"budget {budget} exceeds simulator max_steps {scenario.max_steps}")
        for seed in protocol.seeds:
            deltas = []
            for lo in range(0, protocol.n_students, _CHUNK):
                hi = min(lo + _CHUNK, protocol.n_students)
                sessions = [
                    scenario.sample_session(substream(seed, "eval-student", i), warmup)
                    for i in range(lo, hi)
                ]
                action_rng = substream(seed, "eval-actions", budget, lo)
                deltas.append(agent.run(sessions, budget, action_rng))
            samples = np.concatenate(deltas)
            result.samples[(budget, seed)] = samples
            result.rows.append(
                {
                    "simulator": scenario.name,
                    "budget": budget,
                    "seed": seed,
                    "n_students": protocol.n_students,
                    "mean_delta": float(samples.mean()),
                    "std_delta": float(samples.std()),
                }
            )
    return result


def sweep(agent_factory, axis: str, values, scenario: Scenario,
          protocol: EvalProtocol) -> list[dict]:
    """One evaluation per axis value; returns flat table rows."""
    if axis not in SWEEP_AXES:
        raise ConfigError(f"axis must be one of {SWEEP_AXES}")
    rows = []
    for value in values:
        if axis == "k_concepts":
            agent = agent_factory(k=int(value))
            proto = protocol
        else:
            agent = agent_factory(k=None)
            proto = replace(protocol, warmup_len=int(value), coldstart=False)
        result = evaluate(agent, scenario, proto)
        for row in result.rows:
            rows.append({"axis": axis, "value": value, **row})
    return rows


def write_results_csv(path, rows: list[dict], extra_fields: tuple[str, ...] = ()) -> None:
    header = list(extra_fields) + RESULTS_HEADER
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=header)
        writer.writeheader()
        for row in rows:
            writer.writerow({key: row[key] for key in header})


def plot_metric_curve(path, xs, ys, xlabel: str, ylabel: str, title: str) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(xs, ys, marker="o")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
