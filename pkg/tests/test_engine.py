"""Inference engine: masking, purity, undo/replay, stopping rules."""

import numpy as np
import pytest

from stepfx.effects import EFFECT_IDS, apply_chain, apply_effect
from stepfx.effects.schema import sample_parameters
from stepfx.engine import (
    ExhaustedError,
    ModelRegistry,
    SessionState,
    apply_step,
    plan_text,
    run_full,
    suggest_step,
    undo_step,
)
from stepfx.features import compute_metrics
from stepfx.synth import render_standard


@pytest.fixture(scope="module")
def registry():
    # untrained weights: suggestions are arbitrary but the API contracts hold
    return ModelRegistry.untrained(seed=0)


@pytest.fixture()
def fresh(registry):
    saw = render_standard("saw")
    target = apply_effect(saw, "distortion", sample_parameters("distortion", 3))
    return SessionState.start(saw, target)


class TestSuggest:
    def test_returns_valid_probabilities(self, registry, fresh):
        effect, params, probs = suggest_step(registry, fresh)
        assert effect in EFFECT_IDS
        assert len(probs) == 5
        assert sum(probs) == pytest.approx(1.0, abs=1e-6)
        assert params.effect == effect

    def test_pure_and_repeatable(self, registry, fresh):
        before = fresh.current_audio.samples.copy()
        a = suggest_step(registry, fresh)
        b = suggest_step(registry, fresh)
        assert a[0] == b[0] and a[1] == b[1] and a[2] == b[2]
        assert np.array_equal(fresh.current_audio.samples, before)
        assert fresh.history == ()

    def test_masking_after_four_used(self, registry, fresh):
        state = fresh
        for effect in EFFECT_IDS[:4]:
            state, _ = apply_step(registry, state, effect, sample_parameters(effect, 1))
        effect, _, probs = suggest_step(registry, state)
        assert effect == EFFECT_IDS[4]
        assert probs[4] == pytest.approx(1.0, abs=1e-9)
        assert sum(probs[:4]) == 0.0

    def test_exhausted_after_five(self, registry, fresh):
        state = fresh
        for effect in EFFECT_IDS:
            state, _ = apply_step(registry, state, effect, sample_parameters(effect, 2))
        with pytest.raises(ExhaustedError):
            suggest_step(registry, state)


class TestApplyUndo:
    def test_apply_then_undo_restores_state(self, registry, fresh):
        state, _ = apply_step(registry, fresh, "eq", sample_parameters("eq", 5))
        back = undo_step(state)
        assert back.history == ()
        assert np.array_equal(back.current_audio.samples, fresh.current_audio.samples)

    def test_undo_replay_semantics(self, registry, fresh):
        s1, _ = apply_step(registry, fresh, "eq", sample_parameters("eq", 1))
        s2, _ = apply_step(registry, s1, "reverb", sample_parameters("reverb", 1))
        s3 = undo_step(s2)
        s4, _ = apply_step(registry, s3, "reverb", sample_parameters("reverb", 9))
        assert s4.used_effects == ("eq", "reverb")
        assert s4.history[1].params == sample_parameters("reverb", 9)

    def test_undo_empty_history_rejected(self, fresh):
        with pytest.raises(ValueError):
            undo_step(fresh)

    def test_undo_all_then_reapply_bit_identical(self, registry, fresh):
        state = fresh
        picks = [("distortion", 1), ("phaser", 2)]
        for effect, seed in picks:
            state, _ = apply_step(registry, state, effect, sample_parameters(effect, seed))
        final = state.current_audio.samples.copy()
        rolled = state
        for _ in picks:
            rolled = undo_step(rolled)
        replayed = rolled
        for effect, seed in picks:
            replayed, _ = apply_step(registry, replayed, effect, sample_parameters(effect, seed))
        assert np.array_equal(replayed.current_audio.samples, final)

    def test_reused_effect_rejected(self, registry, fresh):
        state, _ = apply_step(registry, fresh, "eq", sample_parameters("eq", 0))
        with pytest.raises(ValueError):
            apply_step(registry, state, "eq", sample_parameters("eq", 1))

    def test_metrics_bookkeeping_chain(self, registry, fresh):
        state = fresh
        for effect, seed in [("compressor", 1), ("eq", 2), ("reverb", 3)]:
            state, _ = apply_step(registry, state, effect, sample_parameters(effect, seed))
        for k in range(1, len(state.history)):
            assert state.history[k].before == state.history[k - 1].after

    def test_history_replay_consistency(self, registry, fresh):
        state = fresh
        for effect, seed in [("distortion", 4), ("eq", 5)]:
            state, _ = apply_step(registry, state, effect, sample_parameters(effect, seed))
        replayed = apply_chain(state.input_audio, state.applied_chain())
        assert np.array_equal(replayed.samples, state.current_audio.samples)

    def test_true_params_improve_all_metrics(self, registry):
        # oracle substitution: applying the exact generating effect zeroes the gap
        saw = render_standard("saw")
        params = sample_parameters("distortion", 7)
        target = apply_effect(saw, "distortion", params)
        state = SessionState.start(saw, target)
        state, record = apply_step(registry, state, "distortion", params)
        for name, delta in record.deltas.items():
            assert delta < 0, name
        assert state.metrics().mae == 0.0


class TestRunFull:
    def test_identical_target_halts_marginal(self, registry):
        saw = render_standard("saw")
        state, records = run_full(registry, saw, saw)
        assert len(records) == 1
        assert records[0].marginal

    def test_cap_and_determinism(self, registry, fresh):
        state1, recs1 = run_full(registry, fresh.input_audio, fresh.target_audio)
        state2, recs2 = run_full(registry, fresh.input_audio, fresh.target_audio)
        assert len(recs1) <= 5
        assert [r.to_dict() for r in recs1] == [r.to_dict() for r in recs2]
        assert np.array_equal(state1.current_audio.samples, state2.current_audio.samples)

    def test_records_replay_to_final_audio(self, registry, fresh):
        state, records = run_full(registry, fresh.input_audio, fresh.target_audio)
        audio = fresh.input_audio
        for rec in records:
            audio = apply_effect(audio, rec.effect, rec.params)
        assert np.array_equal(audio.samples, state.current_audio.samples)


class TestRecords:
    def test_serialization_round_trip(self, registry, fresh):
        from stepfx.engine import StepRecord

        _, record = apply_step(registry, fresh, "phaser", sample_parameters("phaser", 1))
        back = StepRecord.from_dict(record.to_dict())
        assert back == record

    def test_plan_text(self, registry, fresh):
        state, record = apply_step(registry, fresh, "distortion", sample_parameters("distortion", 1))
        text = plan_text(list(state.history))
        assert text.startswith("Step 1: distortion")
        assert "MAE" in text
