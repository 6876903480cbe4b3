"""Set/target/history encodings and state fusion."""

import numpy as np
import pytest

from hierrec.curriculum import InteractionRecord
from hierrec.encoder import HIGH, LOW, EncoderConfig, StateEncoder
from hierrec.errors import ConfigError, DimensionMismatch, ElementNotInSet, EmptySet
from hierrec.nn import Adam, zero_grads

CFG = EncoderConfig(d_a=4, d_z=4, d_h=8, d_m=8)


@pytest.fixture
def enc():
    return StateEncoder(np.random.default_rng(1), CFG, m=3, n=6)


class TestElementRepr:
    def test_singleton_weight_is_one(self, enc):
        rep = enc.element_repr(2, [2], "question")
        assert rep.attention_weights == pytest.approx([1.0])
        # with one element the attention output is exactly its value row
        assert rep.attentive == pytest.approx(enc.question_attn.Wv.value[2])

    def test_permutation_invariant(self, enc):
        a = enc.element_repr(1, [0, 1, 4], "question")
        b = enc.element_repr(1, [4, 0, 1], "question")
        assert a.augmented == pytest.approx(b.augmented, abs=1e-12)

    def test_weights_sum_to_one(self, enc, rng):
        for _ in range(10):
            ids = rng.choice(6, size=rng.integers(1, 6), replace=False).tolist()
            rep = enc.element_repr(int(ids[0]), ids, "question")
            assert rep.attention_weights.sum() == pytest.approx(1.0)

    def test_not_in_set(self, enc):
        with pytest.raises(ElementNotInSet):
            enc.element_repr(5, [0, 1], "question")

    def test_augmented_layout(self, enc):
        rep = enc.element_repr(0, [0, 1], "concept")
        assert rep.augmented.shape == (2 * CFG.d_a,)
        assert rep.augmented[: CFG.d_a] == pytest.approx(
            enc.concept_attn.Wo.value[0] + enc.concept_attn.bo.value
        )


class TestEncodeSet:
    def test_singleton_equals_augmented(self, enc):
        vec, _ = enc.encode_questions([3])
        rep = enc.element_repr(3, [3], "question")
        assert vec == pytest.approx(rep.augmented)

    def test_permutation_invariance(self, enc, rng):
        ids = [0, 2, 3, 5]
        base, _ = enc.encode_questions(ids)
        for _ in range(20):
            perm = list(rng.permutation(ids))
            vec, _ = enc.encode_questions(perm)
            assert np.max(np.abs(vec - base)) < 1e-6

    def test_duplicate_element_matches_singleton(self, enc):
        # mean-pooling oracle: identical rows pool to the row itself
        single, _ = enc.encode_questions([4])
        doubled, _ = enc.encode_questions([4, 4])
        assert doubled == pytest.approx(single, abs=1e-12)

    def test_mean_pool_oracle(self, enc):
        ids = [0, 1, 5]
        aug, _, _ = enc.question_attn.forward(np.array(ids))
        manual = sum(aug[i] for i in range(3)) / 3.0
        vec, _ = enc.encode_questions(ids)
        assert vec == pytest.approx(manual, abs=1e-12)

    def test_empty_set(self, enc):
        with pytest.raises(EmptySet):
            enc.encode_questions([])

    def test_target_differs_from_full_set(self, enc):
        subset, _ = enc.encode_target([0, 1])
        full, _ = enc.encode_target(list(range(6)))
        assert not np.allclose(subset, full)


class TestEncodeHistory:
    def test_empty_history_is_zero(self, enc):
        assert enc.encode_history([]) == pytest.approx(np.zeros(CFG.d_h))

    def test_single_record_shape_and_finiteness(self, enc):
        h = enc.encode_history([InteractionRecord(2, 1)])
        assert h.shape == (CFG.d_h,)
        assert np.all(np.isfinite(h))

    def test_correctness_sensitivity(self, enc):
        base = [InteractionRecord(1, 1), InteractionRecord(3, 0)]
        flipped = [InteractionRecord(1, 0), InteractionRecord(3, 0)]
        assert np.max(np.abs(enc.encode_history(base) - enc.encode_history(flipped))) > 1e-8

    def test_prefix_property(self, enc):
        records = [InteractionRecord(i % 6, i % 2) for i in range(7)]
        state = enc.history_start(1)
        for t, rec in enumerate(records):
            prefix = enc.encode_history(records[: t + 1])
            state, _ = enc.history_step(state, [rec.question], [rec.correct])
            assert prefix == pytest.approx(state.h[0], abs=1e-12)

    def test_long_history_stays_finite(self, enc, rng):
        records = [InteractionRecord(int(rng.integers(6)), int(rng.integers(2))) for _ in range(500)]
        assert np.all(np.isfinite(enc.encode_history(records)))


class TestPromptVector:
    def test_stable_reads(self, enc):
        assert enc.prompt_vector(HIGH) is enc.prompt_vector(HIGH)

    def test_levels_independent(self, enc):
        assert not np.allclose(enc.prompt_vector(HIGH), enc.prompt_vector(LOW))

    def test_gradient_isolation(self, enc):
        # a step that only touches the high prompt leaves the low prompt untouched
        zero_grads(enc.params)
        opt = Adam([enc.prompt_high, enc.prompt_low], lr=1e-3)
        low_before = enc.prompt_vector(LOW).copy()
        high_before = enc.prompt_vector(HIGH).copy()
        enc.prompt_high.grad[:] = 1.0
        opt.step()
        assert enc.prompt_vector(LOW) == pytest.approx(low_before)
        assert np.max(np.abs(enc.prompt_vector(HIGH) - high_before)) > 0


class TestFuse:
    def test_zero_summands_give_zero_state(self, enc):
        for lin in (enc.fp1, enc.fp2, enc.fp3):
            lin.W.value[...] = 0.0
            lin.b.value[...] = 0.0
        enc.prompt_high.value[...] = 0.0
        s, _ = enc.fuse(HIGH, np.zeros(CFG.d_h), np.zeros(2 * CFG.d_a), np.zeros(2 * CFG.d_a))
        assert s == pytest.approx(np.zeros((1, CFG.d_m)))

    def test_linear_scaling_of_history_term(self, enc):
        enc.fp1.b.value[...] = 0.0
        h = np.random.default_rng(2).standard_normal(CFG.d_h)
        g = np.zeros(2 * CFG.d_a)
        e = np.zeros(2 * CFG.d_a)
        s1, _ = enc.fuse(HIGH, h, g, e)
        s2, _ = enc.fuse(HIGH, 2 * h, g, e)
        base, _ = enc.fuse(HIGH, np.zeros_like(h), g, e)
        assert (s2 - base) == pytest.approx(2 * (s1 - base), abs=1e-9)

    def test_matches_matrix_oracle(self, enc, rng):
        h = rng.standard_normal(CFG.d_h)
        g = rng.standard_normal(2 * CFG.d_a)
        e = rng.standard_normal(2 * CFG.d_a)
        expected = (
            h @ enc.fp1.W.value + enc.fp1.b.value
            + g @ enc.fp2.W.value + enc.fp2.b.value
            + e @ enc.fp4.W.value + enc.fp4.b.value
            + enc.prompt_low.value
        )
        s, _ = enc.fuse(LOW, h, g, e)
        assert np.max(np.abs(s[0] - expected)) <= 1e-6

    def test_dimension_mismatch(self, enc):
        with pytest.raises(DimensionMismatch):
            enc.fuse(HIGH, np.zeros(3), np.zeros(2 * CFG.d_a), np.zeros(2 * CFG.d_a))

    def test_output_dims_contract(self):
        cfg = EncoderConfig()
        enc = StateEncoder(np.random.default_rng(0), cfg, m=4, n=9)
        e, _ = enc.encode_concepts([0, 1])
        g, _ = enc.encode_target([2, 5])
        h = enc.encode_history([InteractionRecord(1, 1)])
        s, _ = enc.fuse(HIGH, h, g, e)
        assert e.shape == (2 * cfg.d_a,)
        assert g.shape == (2 * cfg.d_a,)
        assert h.shape == (cfg.d_h,)
        assert s.shape == (1, cfg.d_m)


def test_multi_head_rejected():
    with pytest.raises(ConfigError):
        EncoderConfig(attention_heads=2)
