"""Hierarchical question recommendation engine with simulated students.

A two-level recommender (concept choice narrows the candidate questions,
then one question is selected) trained with policy gradients against
stateful student simulators, plus the evaluation protocols around it.
"""

from .curriculum import (CurriculumMap, InteractionRecord, LearningHistory, LearningTarget,
                         build_curriculum, identity_curriculum, parse_logs,
                         questions_for_concepts, validate_curriculum)
from .encoder import EncoderConfig, StateEncoder
from .errors import HierRecError
from .evaluation import (EvalProtocol, EvalResult, HierAgent, RandomAgent, evaluate,
                         learning_effect, random_policy, sweep)
from .model import HierModel, build_model, load_model, save_model
from .policy import BackboneConfig, HierPolicy
from .scenario import Scenario
from .simulators import KssConfig, KssSimulator, irt_prob
from .training import (TrainConfig, Trajectory, loss_aux, loss_high, loss_low,
                       loss_total, returns, rollout, train_run)

__version__ = "0.1.0"

__all__ = [
    "BackboneConfig", "CurriculumMap", "EncoderConfig", "EvalProtocol", "EvalResult",
    "HierAgent", "HierModel", "HierPolicy", "HierRecError", "InteractionRecord",
    "KssConfig", "KssSimulator", "LearningHistory", "LearningTarget", "RandomAgent",
    "Scenario", "StateEncoder", "TrainConfig", "Trajectory", "build_curriculum",
    "build_model", "evaluate", "identity_curriculum", "irt_prob", "learning_effect",
    "load_model", "loss_aux", "loss_high", "loss_low", "loss_total", "parse_logs",
    "questions_for_concepts", "random_policy", "returns", "rollout", "save_model",
    "sweep", "train_run", "validate_curriculum",
]
