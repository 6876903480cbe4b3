"""Model bundle: encoder + two-level policy + auxiliary proficiency head."""

from __future__ import annotations

import hashlib

import numpy as np

from .checkpoint import load_arrays, save_arrays
from .encoder import EncoderConfig, StateEncoder
from .errors import CheckpointMismatch, ConfigError
from .nn import Mlp, Param
from .policy import BackboneConfig, HierPolicy

MODEL_SCHEMA_VERSION = "policy-checkpoint-v1"


class HierModel:
    def __init__(self, encoder: StateEncoder, policy: HierPolicy, aux: Mlp):
        self.encoder = encoder
        self.policy = policy
        self.aux = aux

    @property
    def params(self) -> list[Param]:
        return self.encoder.params + self.policy.params + self.aux.params

    def param_dict(self) -> dict[str, np.ndarray]:
        return {p.name: p.value for p in self.params}

    def load_state(self, arrays: dict[str, np.ndarray]) -> None:
        for p in self.params:
            if p.name not in arrays:
                raise CheckpointMismatch(f"checkpoint missing parameter {p.name}")
            if arrays[p.name].shape != p.value.shape:
                raise CheckpointMismatch(
                    f"parameter {p.name}: checkpoint shape {arrays[p.name].shape} "
                    f"!= model shape {p.value.shape}"
                )
            p.value[...] = arrays[p.name]

    def state_hash(self) -> str:
        digest = hashlib.sha256()
        for p in sorted(self.params, key=lambda p: p.name):
            digest.update(p.name.encode())
            digest.update(np.ascontiguousarray(p.value).tobytes())
        return digest.hexdigest()


def build_model(rng: np.random.Generator, m: int, n: int,
                encoder_config: EncoderConfig | None = None,
                backbone_config: BackboneConfig | None = None) -> HierModel:
    encoder_config = encoder_config or EncoderConfig()
    backbone_config = backbone_config or BackboneConfig()
    if m < 1 or n < 1:
        raise ConfigError("need at least one concept and one question")
    encoder = StateEncoder(rng, encoder_config, m, n)
    policy = HierPolicy(rng, m, n, encoder_config.d_m, backbone_config)
    aux = Mlp(rng, encoder_config.d_h, max(encoder_config.d_h // 2, 1), 1, "aux")
    return HierModel(encoder, policy, aux)


def save_model(path, model: HierModel, config_hash: str = "", episode: int = 0,
               rng_state: dict | None = None) -> None:
    meta = {
        "schema_version": MODEL_SCHEMA_VERSION,
        "config_hash": config_hash,
        "episode": episode,
        "rng_state": rng_state or {},
    }
    save_arrays(path, model.param_dict(), meta)


def load_model(path, model: HierModel, expected_config_hash: str | None = None) -> dict:
    """Load parameters into a model built from the current config; returns metadata."""
    arrays, meta = load_arrays(path)
    if meta.get("schema_version") != MODEL_SCHEMA_VERSION:
        raise CheckpointMismatch(f"unsupported checkpoint schema {meta.get('schema_version')!r}")
    if expected_config_hash is not None and meta.get("config_hash") != expected_config_hash:
        raise CheckpointMismatch(
            f"checkpoint config hash {meta.get('config_hash')!r} does not match "
            f"the current configuration {expected_config_hash!r}"
        )
    model.load_state(arrays)
    return meta
