import numpy as np
import pytest

from hierrec.curriculum import build_curriculum
from hierrec.encoder import EncoderConfig
from hierrec.model import build_model
from hierrec.policy import BackboneConfig

# miniature dimensions used across encoder/policy/training tests
MINI_ENC = EncoderConfig(d_a=4, d_z=4, d_h=8, d_m=8)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def small_map():
    # 2 concepts, 3 questions: q1 covers both concepts
    return build_curriculum(2, 3, [(0, 0), (1, 0), (1, 1), (2, 1)])


@pytest.fixture
def mini_map():
    # 3 concepts x 6 questions, two questions each
    return build_curriculum(3, 6, [(0, 0), (1, 0), (2, 1), (3, 1), (4, 2), (5, 2)])


@pytest.fixture
def mini_model(mini_map):
    return build_model(np.random.default_rng(7), mini_map.m, mini_map.n, MINI_ENC,
                       BackboneConfig(depth=2))
