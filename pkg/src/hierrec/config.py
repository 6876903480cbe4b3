"""Experiment configuration: YAML loading, validation, overrides, hashing.

One config file drives a whole experiment; unknown keys are rejected so a
typo never silently changes a run. `--set section.key=value` overrides
scalar leaves before validation.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, fields
from pathlib import Path

import yaml

from .curriculum import CurriculumMap, IdDictionary, read_curriculum_csv
from .encoder import EncoderConfig
from .errors import ConfigError
from .policy import BackboneConfig
from .rng import substream
from .scenario import Scenario
from .simulators import KssConfig, KssSimulator
from .training import TrainConfig


def _from_mapping(cls, mapping: dict, where: str):
    """Instantiate a dataclass from a mapping, rejecting unknown keys."""
    mapping = dict(mapping or {})
    known = {f.name for f in fields(cls)}
    unknown = set(mapping) - known
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")
    for key, value in mapping.items():
        if isinstance(value, list):
            mapping[key] = tuple(tuple(v) if isinstance(v, list) else v for v in value)
    try:
        return cls(**mapping)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {where}: {exc}") from exc


@dataclass(frozen=True)
class CurriculumSection:
    source: str = "kss"  # "kss" for the simulator's identity map, else an edge CSV path


@dataclass(frozen=True)
class KtSection:
    checkpoint: str = ""
    hidden_dim: int = 64
    warmup_len: int = 20
    n_targets: int = 400
    max_steps: int = 200
    answer_mode: str = "sample"


@dataclass(frozen=True)
class SimulatorSection:
    kind: str = "kss"
    target_size_min: int = 3
    target_size_max: int = 5
    kss: KssConfig = field(default_factory=KssConfig)
    kt: KtSection = field(default_factory=KtSection)

    def __post_init__(self):
        if self.kind not in ("kss", "kt"):
            raise ConfigError(f"simulator.kind must be 'kss' or 'kt', not {self.kind!r}")


@dataclass(frozen=True)
class PolicySection:
    backbone: BackboneConfig = field(default_factory=BackboneConfig)
    k: int = 1
    disable_high: bool = False
    replace_backbone_with_linear: bool = False
    freeze_backbone: bool = False


@dataclass(frozen=True)
class EvaluationSection:
    budgets: tuple[int, ...] = (10, 30)
    n_students: int = 500
    coldstart: bool = False
    warmup_len: int = 20
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    mode: str = "greedy"
    sweep_k_values: tuple[int, ...] = (1, 2, 3, 4, 5, 6, 7, 8, 9, 10)
    sweep_warmup_values: tuple[int, ...] = (0, 5, 10, 15, 20, 25)


@dataclass(frozen=True)
class DataSection:
    n_sessions: int = 5000
    session_len: int = 30
    logs_path: str = "logs/synthetic_logs.csv"


@dataclass(frozen=True)
class KtTrainingSection:
    logs_path: str = "logs/synthetic_logs.csv"
    hidden_dim: int = 64
    epochs: int = 8
    learning_rate: float = 5e-3
    batch_size: int = 64
    holdout_fraction: float = 0.2
    checkpoint_path: str = "checkpoints/kt_model.ckpt"


_SECTION_TYPES = {
    "curriculum": CurriculumSection,
    "simulator": SimulatorSection,
    "encoder": EncoderConfig,
    "policy": PolicySection,
    "training": TrainConfig,
    "evaluation": EvaluationSection,
    "data": DataSection,
    "kt_training": KtTrainingSection,
}


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    output_dir: str = "runs/default"
    curriculum: CurriculumSection = field(default_factory=CurriculumSection)
    simulator: SimulatorSection = field(default_factory=SimulatorSection)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    policy: PolicySection = field(default_factory=PolicySection)
    training: TrainConfig = field(default_factory=TrainConfig)
    evaluation: EvaluationSection = field(default_factory=EvaluationSection)
    data: DataSection = field(default_factory=DataSection)
    kt_training: KtTrainingSection = field(default_factory=KtTrainingSection)


def apply_overrides(raw: dict, overrides: list[str]) -> dict:
    """Apply `section.key=value` overrides; values parse as YAML scalars."""
    raw = json.loads(json.dumps(raw))  # deep copy of plain data
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form section.key=value")
        dotted, _, value = item.partition("=")
        keys = dotted.split(".")
        node = raw
        for key in keys[:-1]:
            node = node.setdefault(key, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {dotted!r} does not address a config leaf")
        node[keys[-1]] = yaml.safe_load(value)
    return raw


def parse_config(raw: dict) -> ExperimentConfig:
    raw = dict(raw or {})
    known_top = {"seed", "output_dir"} | set(_SECTION_TYPES)
    unknown = set(raw) - known_top
    if unknown:
        raise ConfigError(f"unknown top-level config keys: {sorted(unknown)}")
    sections = {}
    for name, cls in _SECTION_TYPES.items():
        payload = raw.get(name, {})
        if not isinstance(payload, dict):
            raise ConfigError(f"section {name!r} must be a mapping")
        if name == "simulator":
            payload = dict(payload)
            kss_payload = payload.pop("kss", {})
            kt_payload = payload.pop("kt", {})
            known = {f.name for f in fields(SimulatorSection)} - {"kss", "kt"}
            bad = set(payload) - known
            if bad:
                raise ConfigError(f"unknown keys in simulator: {sorted(bad)}")
            sections[name] = SimulatorSection(
                kss=_from_mapping(KssConfig, kss_payload, "simulator.kss"),
                kt=_from_mapping(KtSection, kt_payload, "simulator.kt"),
                **payload,
            )
        elif name == "policy":
            payload = dict(payload)
            backbone_payload = payload.pop("backbone", {})
            known = {f.name for f in fields(PolicySection)} - {"backbone"}
            bad = set(payload) - known
            if bad:
                raise ConfigError(f"unknown keys in policy: {sorted(bad)}")
            sections[name] = PolicySection(
                backbone=_from_mapping(BackboneConfig, backbone_payload, "policy.backbone"),
                **payload,
            )
        else:
            sections[name] = _from_mapping(cls, payload, name)
    training = sections["training"]
    if "seed" not in (raw.get("training") or {}):
        training = _from_mapping(
            TrainConfig,
            {**{f.name: getattr(training, f.name) for f in fields(TrainConfig)},
             "seed": int(raw.get("seed", 0))},
            "training",
        )
        sections["training"] = training
    return ExperimentConfig(
        seed=int(raw.get("seed", 0)),
        output_dir=str(raw.get("output_dir", "runs/default")),
        **sections,
    )


def load_config(path, overrides: list[str] | None = None) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    with open(path, encoding="utf-8") as fh:
        raw = yaml.safe_load(fh) or {}
    if not isinstance(raw, dict):
        raise ConfigError(f"config root must be a mapping: {path}")
    if overrides:
        raw = apply_overrides(raw, overrides)
    return parse_config(raw)


# ---------------------------------------------------------------------------
# assembly helpers


def load_curriculum(cfg: ExperimentConfig):
    """Resolve the curriculum: (map, question dictionary, concept dictionary)."""
    if cfg.curriculum.source == "kss":
        if cfg.simulator.kind != "kss":
            raise ConfigError("curriculum.source 'kss' requires simulator.kind 'kss'")
        n = cfg.simulator.kss.n_items
        sim = KssSimulator(cfg.simulator.kss)
        cmap = sim.curriculum()
        qdict = IdDictionary(f"q{i:04d}" for i in range(n))
        cdict = IdDictionary(f"c{i:04d}" for i in range(n))
        return cmap, qdict, cdict
    path = Path(cfg.curriculum.source)
    if not path.exists():
        raise ConfigError(f"curriculum edge file not found: {path}")
    return read_curriculum_csv(path)


def build_scenario(cfg: ExperimentConfig, cmap: CurriculumMap) -> Scenario:
    if cfg.simulator.kind == "kss":
        sim = KssSimulator(cfg.simulator.kss)
        if cmap.n != cfg.simulator.kss.n_items:
            raise ConfigError(
                f"curriculum has {cmap.n} questions but the simulator has "
                f"{cfg.simulator.kss.n_items} items"
            )
        return Scenario(
            curriculum=cmap, simulator=sim, name="kss",
            target_size_min=cfg.simulator.target_size_min,
            target_size_max=cfg.simulator.target_size_max,
        )
    from .dkt import KtModel, KtSimConfig, KtSimulator

    sect = cfg.simulator.kt
    if not sect.checkpoint:
        raise ConfigError("simulator.kt.checkpoint is required for kind 'kt'")
    path = Path(sect.checkpoint)
    if not path.exists():
        raise ConfigError(f"KT checkpoint not found: {path}")
    model = KtModel.load(path)
    if model.n_questions != cmap.n:
        raise ConfigError(
            f"KT model covers {model.n_questions} questions, curriculum has {cmap.n}"
        )
    sim = KtSimulator(
        model,
        KtSimConfig(hidden_dim=model.hidden_dim, warmup_len=sect.warmup_len,
                    n_targets=sect.n_targets, max_steps=sect.max_steps,
                    answer_mode=sect.answer_mode),
    )
    n_targets = min(sect.n_targets, cmap.n)
    return Scenario(curriculum=cmap, simulator=sim, name="kt",
                    target_size_min=n_targets, target_size_max=n_targets)


def build_model_from_config(cfg: ExperimentConfig, cmap: CurriculumMap):
    from .model import build_model

    backbone = cfg.policy.backbone
    if cfg.policy.replace_backbone_with_linear:
        backbone = BackboneConfig(kind=backbone.kind, depth=backbone.depth, linear=True)
    model = build_model(substream(cfg.seed, "init"), cmap.m, cmap.n, cfg.encoder, backbone)
    if cfg.policy.freeze_backbone:
        for p in model.policy.params:
            p.trainable = False
    return model


def config_hash(cfg: ExperimentConfig, cmap: CurriculumMap) -> str:
    """Hash of everything that determines checkpoint compatibility."""
    edges_digest = hashlib.sha256(
        json.dumps(sorted(map(list, cmap.edges))).encode()
    ).hexdigest()
    backbone = cfg.policy.backbone
    payload = {
        "m": cmap.m,
        "n": cmap.n,
        "edges": edges_digest,
        "encoder": {f.name: getattr(cfg.encoder, f.name) for f in fields(EncoderConfig)},
        "backbone": {
            "kind": backbone.kind,
            "depth": backbone.depth,
            "linear": backbone.linear or cfg.policy.replace_backbone_with_linear,
        },
    }
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()
