"""Model architectures, label codecs, decode totality, serialization, training smoke."""

import numpy as np
import pytest

from stepfx.effects import EFFECT_IDS, validate_params
from stepfx.effects.schema import sample_parameters
from stepfx.models import (
    ModelMismatchError,
    NextEffectModel,
    TrainedModel,
    build_effect_cnn,
    build_rnn_model,
    decode_outputs,
    encode_labels,
    head_specs,
    load_model,
    save_model,
    stack_pair,
)
from stepfx.util import rng_from


def unit_spec(seed):
    return rng_from("spec", seed).random((128, 87)).astype(np.float32)


class TestHeadInventory:
    def test_compressor_three_sigmoid_scalars(self):
        specs = head_specs("compressor")
        assert [s.kind for s in specs] == ["continuous"] * 3
        assert all(s.out_dim == 1 for s in specs)

    def test_distortion_softmax_plus_drive(self):
        specs = {s.name: s for s in head_specs("distortion")}
        assert specs["mode"].kind == "categorical"
        assert specs["mode"].out_dim == 12
        assert specs["drive"].kind == "continuous"

    def test_eq_gain_decomposition(self):
        specs = {s.name: s for s in head_specs("eq")}
        assert specs["gain_flag"].kind == "binary"
        assert specs["gain_mag"].kind == "continuous"
        assert len(specs) == 4


class TestLabelCodec:
    def test_round_trip_all_effects(self):
        for effect in EFFECT_IDS:
            for seed in range(60):
                params = sample_parameters(effect, seed)
                enc = encode_labels(effect, params)
                outputs = {}
                for spec in head_specs(effect):
                    if spec.kind == "categorical":
                        onehot = np.zeros((1, spec.out_dim), dtype=np.float32)
                        onehot[0, enc[spec.name]] = 1.0
                        outputs[spec.name] = onehot
                    else:
                        outputs[spec.name] = np.array([[enc[spec.name]]], dtype=np.float32)
                back = decode_outputs(effect, outputs)
                for name, v in params.items():
                    if isinstance(v, int):
                        assert back[name] == v
                    else:
                        assert back[name] == pytest.approx(v, abs=1e-5)

    def test_labels_in_unit_range(self):
        for effect in EFFECT_IDS:
            for seed in range(40):
                enc = encode_labels(effect, sample_parameters(effect, seed))
                for spec in head_specs(effect):
                    v = enc[spec.name]
                    if spec.kind == "categorical":
                        assert 0 <= v < spec.out_dim
                    else:
                        assert -1e-9 <= v <= 1 + 1e-9


class TestDecodeTotality:
    def test_random_outputs_decode_in_range(self):
        # any raw head output must decode to an in-spec parameter vector
        rng = rng_from("fuzz-heads")
        for effect in EFFECT_IDS:
            for _ in range(200):
                outputs = {}
                for spec in head_specs(effect):
                    if spec.kind == "categorical":
                        raw = rng.random((1, spec.out_dim))
                        outputs[spec.name] = raw / raw.sum()
                    else:
                        outputs[spec.name] = rng.random((1, 1))
                params = decode_outputs(effect, outputs)
                validate_params(effect, params)

    def test_eq_gain_never_in_gap(self):
        rng = rng_from("fuzz-eq")
        for _ in range(500):
            outputs = {
                "cutoff": rng.random((1, 1)),
                "resonance": rng.random((1, 1)),
                "gain_flag": rng.random((1, 1)),
                "gain_mag": rng.random((1, 1)),
            }
            gain = decode_outputs("eq", outputs)["gain"]
            assert not (0.4 < gain < 0.6)


class TestEffectCnn:
    def test_predict_returns_valid_vector(self):
        model = build_effect_cnn("distortion", seed=1)
        vec = model.predict(unit_spec(0), unit_spec(1))
        assert vec.effect == "distortion"
        validate_params("distortion", vec.values)

    def test_head_outputs_match_specs(self):
        model = build_effect_cnn("eq", seed=0)
        x = np.stack([stack_pair(unit_spec(2), unit_spec(3))])
        outputs = model.forward_heads(x)
        assert set(outputs) == {s.name for s in head_specs("eq")}
        for spec in head_specs("eq"):
            assert outputs[spec.name].shape == (1, spec.out_dim)

    def test_bad_input_shape_rejected(self):
        with pytest.raises(ValueError):
            stack_pair(np.zeros((64, 87)), np.zeros((128, 87)))

    def test_prediction_is_pure(self):
        model = build_effect_cnn("reverb", seed=2)
        a = model.predict(unit_spec(4), unit_spec(5))
        b = model.predict(unit_spec(4), unit_spec(5))
        assert a == b


class TestNextEffectRnn:
    def test_softmax_over_five(self):
        model = build_rnn_model(seed=0)
        for t_len in (1, 4):
            steps = np.stack([stack_pair(unit_spec(i), unit_spec(i + 10)) for i in range(t_len)])[None]
            onehots = np.zeros((1, t_len, 5), dtype=np.float32)
            probs = model.forward(steps.astype(np.float32), onehots)
            assert probs.shape == (1, 5)
            assert probs.sum() == pytest.approx(1.0, abs=1e-6)

    def test_onehots_are_information_bearing(self):
        model = build_rnn_model(seed=3)
        steps = np.stack([stack_pair(unit_spec(i), unit_spec(i + 20)) for i in range(3)])[None].astype(np.float32)
        onehots = np.zeros((1, 3, 5), dtype=np.float32)
        onehots[0, 1, 0] = 1.0
        onehots[0, 2, 3] = 1.0
        permuted = onehots[:, :, [1, 0, 2, 4, 3]]
        a = model.forward(steps, onehots)
        b = model.forward(steps, permuted)
        assert not np.allclose(a, b)

    def test_predict_builds_onehots_from_used(self):
        model = build_rnn_model(seed=1)
        states = [unit_spec(i) for i in range(3)]
        probs = model.predict(unit_spec(9), states, ["distortion", "reverb"])
        assert probs.shape == (5,)
        assert probs.sum() == pytest.approx(1.0, abs=1e-6)

    def test_shape_validation(self):
        model = build_rnn_model(seed=0)
        with pytest.raises(ValueError):
            model.forward(np.zeros((1, 2, 2, 64, 87), dtype=np.float32), np.zeros((1, 2, 5), dtype=np.float32))


class TestSerialization:
    def test_round_trip_bit_identical_predictions(self, tmp_path):
        model = build_effect_cnn("compressor", seed=5)
        trained = TrainedModel("effect_cnn", "compressor", model, [{"epoch": 0}], {"note": "t"})
        path = tmp_path / "compressor.sfxw"
        save_model(path, trained)
        loaded = load_model(path)
        probe_t, probe_c = unit_spec(7), unit_spec(8)
        a = model.predict(probe_t, probe_c)
        b = loaded.model.predict(probe_t, probe_c)
        assert a == b
        assert loaded.history == [{"epoch": 0}]

    def test_rnn_round_trip(self, tmp_path):
        model = build_rnn_model(seed=2)
        path = tmp_path / "next_effect.sfxw"
        save_model(path, TrainedModel("next_rnn", None, model))
        loaded = load_model(path, expect_kind="next_rnn")
        states = [unit_spec(1)]
        assert np.array_equal(
            model.predict(unit_spec(0), states, []), loaded.model.predict(unit_spec(0), states, [])
        )

    def test_effect_mismatch_error(self, tmp_path):
        model = build_effect_cnn("compressor", seed=0)
        path = tmp_path / "m.sfxw"
        save_model(path, TrainedModel("effect_cnn", "compressor", model))
        with pytest.raises(ModelMismatchError, match="compressor"):
            load_model(path, expect_effect="distortion")

    def test_kind_mismatch_error(self, tmp_path):
        model = build_rnn_model(seed=0)
        path = tmp_path / "m.sfxw"
        save_model(path, TrainedModel("next_rnn", None, model))
        with pytest.raises(ModelMismatchError):
            load_model(path, expect_kind="effect_cnn")
