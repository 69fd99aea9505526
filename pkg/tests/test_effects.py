"""Effects rack: schemas, sampling, unit maps, DSP contracts."""

import numpy as np
import pytest

from stepfx.audio import SAMPLE_RATE, AudioBuffer
from stepfx.effects import (
    DISTORTION_MODES,
    EFFECT_IDS,
    EffectChain,
    ParameterError,
    ParameterVector,
    apply_chain,
    apply_effect,
    apply_neutral,
    denormalize_params,
    effect_schema,
    normalize_params,
    sample_parameters,
    schema_json,
    validate_params,
)
from stepfx.features import mel_spectrogram
from stepfx.synth import render_standard
from stepfx.util import rng_from


def noise_probe(seed="fx-noise", n=44100, peak=0.9) -> AudioBuffer:
    rng = rng_from(seed)
    return AudioBuffer((rng.uniform(-1.0, 1.0, n) * peak).astype(np.float32))


def residual_db(a: AudioBuffer, b: AudioBuffer) -> float:
    diff = a.samples.astype(np.float64) - b.samples.astype(np.float64)
    ref = np.sqrt(np.mean(a.samples.astype(np.float64) ** 2))
    res = np.sqrt(np.mean(diff**2))
    return 20 * np.log10(max(res, 1e-30) / ref)


def mel_mae(a: AudioBuffer, b: AudioBuffer) -> float:
    da = mel_spectrogram(a).astype(np.float64)
    db = mel_spectrogram(b).astype(np.float64)
    return float(np.mean(np.abs(da - db)))


class TestSchemas:
    def test_five_effects_in_rack_order(self):
        assert EFFECT_IDS == ("compressor", "distortion", "eq", "phaser", "reverb")

    def test_compressor_three_continuous_unit_ranges(self):
        specs = effect_schema("compressor")
        assert len(specs) == 3
        for s in specs:
            assert s.kind == "continuous"
            assert s.ranges == ((0.0, 1.0),)

    def test_distortion_modes_and_drive(self):
        by_name = {s.name: s for s in effect_schema("distortion")}
        assert by_name["mode"].kind == "categorical"
        assert len(by_name["mode"].classes) == 12
        assert by_name["drive"].ranges == ((0.3, 1.0),)

    def test_eq_gain_disjoint_ranges(self):
        gain = {s.name: s for s in effect_schema("eq")}["gain"]
        assert gain.ranges == ((0.0, 0.4), (0.6, 1.0))

    def test_parameter_count_is_fourteen(self):
        assert sum(len(effect_schema(e)) for e in EFFECT_IDS) == 14

    def test_schema_json_round_trips(self):
        import json

        payload = json.loads(schema_json())
        assert payload["rack_order"] == list(EFFECT_IDS)
        assert len(payload["effects"]["distortion"][0]["classes"]) == 12

    def test_unknown_effect(self):
        with pytest.raises(ParameterError):
            effect_schema("chorus")


class TestSampling:
    def test_deterministic(self):
        assert sample_parameters("reverb", 7) == sample_parameters("reverb", 7)

    def test_drive_range(self):
        for seed in range(200):
            v = sample_parameters("distortion", seed)
            assert 0.3 <= v["drive"] <= 1.0
            assert 0 <= v["mode"] < 12

    def test_eq_gain_never_in_gap(self):
        for seed in range(500):
            g = sample_parameters("eq", seed)["gain"]
            assert not (0.4 < g < 0.6)

    def test_reverb_mix_uniform_stats(self):
        draws = np.array([sample_parameters("reverb", s)["mix"] for s in range(10_000)])
        assert draws.min() >= 0.3
        assert draws.max() <= 0.7
        assert abs(draws.mean() - 0.5) < 0.01

    def test_all_samples_validate(self):
        for effect in EFFECT_IDS:
            for seed in range(50):
                validate_params(effect, sample_parameters(effect, seed))


class TestUnitMaps:
    def test_eq_cutoff_midpoint_is_2khz(self):
        assert denormalize_params("eq", {"cutoff": 0.50, "resonance": 0.0, "gain": 0.0})[
            "cutoff"
        ] == pytest.approx(2000.0)

    def test_eq_cutoff_top_is_18khz(self):
        assert denormalize_params("eq", {"cutoff": 0.95, "resonance": 0.0, "gain": 0.0})[
            "cutoff"
        ] == pytest.approx(18000.0)

    def test_round_trip_all_effects(self):
        for effect in EFFECT_IDS:
            for seed in range(100):
                values = sample_parameters(effect, seed)
                back = normalize_params(effect, denormalize_params(effect, values))
                for name, v in values.items():
                    if isinstance(v, int):
                        assert back[name] == v
                    else:
                        assert back[name] == pytest.approx(v, abs=1e-6)

    def test_categorical_identity(self):
        phys = denormalize_params("distortion", {"mode": 11, "drive": 0.5})
        assert phys["mode"] == DISTORTION_MODES[11]
        assert normalize_params("distortion", phys)["mode"] == 11

    def test_out_of_range_named(self):
        with pytest.raises(ParameterError, match="drive"):
            validate_params("distortion", {"mode": 0, "drive": 1.5})
        with pytest.raises(ParameterError, match="gain"):
            validate_params("eq", {"cutoff": 0.6, "resonance": 0.5, "gain": 0.5})

    def test_missing_named(self):
        with pytest.raises(ParameterError, match="feedback"):
            validate_params("phaser", {"depth": 0.5, "frequency": 0.5})


class TestApplyEffect:
    def test_deterministic(self):
        x = render_standard("saw")
        for effect in EFFECT_IDS:
            params = sample_parameters(effect, 11)
            a = apply_effect(x, effect, params)
            b = apply_effect(x, effect, params)
            assert np.array_equal(a.samples, b.samples)

    def test_length_preserved_and_finite(self):
        x = render_standard("square")
        for effect in EFFECT_IDS:
            y = apply_effect(x, effect, sample_parameters(effect, 5))
            assert len(y) == len(x)
            assert np.all(np.isfinite(y.samples))

    def test_fuzz_no_nan_inf_any_preset(self):
        # random in-range vectors on every preset render stay finite
        from stepfx.synth import list_presets

        for i, preset in enumerate(list_presets()):
            x = render_standard(preset)
            for effect in EFFECT_IDS:
                y = apply_effect(x, effect, sample_parameters(effect, 100 + i))
                assert np.all(np.isfinite(y.samples)), (preset.id, effect)

    def test_peak_bounded(self):
        x = noise_probe()
        for effect in EFFECT_IDS:
            for seed in range(10):
                y = apply_effect(x, effect, sample_parameters(effect, seed))
                assert y.peak() <= 1.0

    def test_wrong_rate_rejected(self):
        x = AudioBuffer(np.zeros(1000, dtype=np.float32), sample_rate=22050)
        with pytest.raises(ValueError):
            apply_effect(x, "eq", sample_parameters("eq", 0))

    def test_compressor_neutral_is_identity(self):
        x = render_standard("saw")
        y = apply_effect(x, "compressor", {"low_band": 0.0, "mid_band": 0.0, "high_band": 0.0})
        assert residual_db(x, y) < -60.0


class TestNeutrality:
    @pytest.mark.parametrize("effect", EFFECT_IDS)
    def test_neutral_residual_below_minus_60db(self, effect):
        x = render_standard("saw")
        y = apply_neutral(x, effect)
        assert residual_db(x, y) < -60.0


class TestDistortionCharacter:
    def test_soft_clip_at_floor_raises_thd(self):
        x = render_standard("sine")
        y = apply_effect(x, "distortion", {"mode": DISTORTION_MODES.index("soft_clip"), "drive": 0.3})
        assert _thd(y) > _thd(x)

    def test_drive_monotone_audible_every_mode(self):
        saw = render_standard("saw")
        for mode in range(12):
            lo = apply_effect(saw, "distortion", {"mode": mode, "drive": 0.3})
            hi = apply_effect(saw, "distortion", {"mode": mode, "drive": 1.0})
            assert mel_mae(lo, hi) > 1.0, DISTORTION_MODES[mode]


def _thd(buf: AudioBuffer, f0: float = 261.6256) -> float:
    w = np.hanning(len(buf))
    mags = np.abs(np.fft.rfft(buf.samples.astype(np.float64) * w))
    freqs = np.fft.rfftfreq(len(buf), 1.0 / buf.sample_rate)

    def amp(f):
        i = int(np.abs(freqs - f).argmin())
        return mags[max(0, i - 3) : i + 4].max()

    fund = amp(f0)
    harm = np.sqrt(sum(amp(k * f0) ** 2 for k in range(2, 10)))
    return harm / fund


class TestEqCharacter:
    def test_full_cut_attenuates_above_cutoff(self):
        x = noise_probe()
        y = apply_effect(x, "eq", {"cutoff": 0.95, "resonance": 0.0, "gain": 0.0})

        def band_energy(buf):
            mags = np.abs(np.fft.rfft(buf.samples.astype(np.float64))) ** 2
            freqs = np.fft.rfftfreq(len(buf), 1.0 / SAMPLE_RATE)
            return mags[(freqs >= 18000)].sum()

        reduction = 10 * np.log10(band_energy(x) / band_energy(y))
        assert reduction >= 12.0


class TestMonotoneAudibility:
    # Broadband noise probe for the linear-ish processors; distortion has its
    # own tonal sweep above (harmonic generators barely recolor noise).
    @pytest.mark.parametrize("effect", ["compressor", "eq", "phaser", "reverb"])
    def test_continuous_sweeps_exceed_1db(self, effect):
        probe = noise_probe()
        specs = effect_schema(effect)
        base = {}
        for s in specs:
            if s.kind != "continuous":
                continue
            base[s.name] = 0.8 if len(s.ranges) > 1 else sum(s.ranges[0]) / 2
        for s in specs:
            if s.kind != "continuous":
                continue
            lo_v, hi_v = s.ranges[0][0], s.ranges[-1][1]
            out = []
            for v in (lo_v, hi_v):
                params = dict(base)
                params[s.name] = v
                out.append(apply_effect(probe, effect, params))
            assert mel_mae(out[0], out[1]) > 1.0, (effect, s.name)


class TestChains:
    def _chain(self, *pairs):
        return EffectChain(tuple(ParameterVector(e, v) for e, v in pairs))

    def test_empty_chain_is_identity(self):
        x = render_standard("sine")
        y = apply_chain(x, EffectChain())
        assert np.array_equal(x.samples, y.samples)

    def test_order_matters(self):
        x = render_standard("saw")
        dist = ("distortion", sample_parameters("distortion", 1))
        eq = ("eq", sample_parameters("eq", 2))
        ab = apply_chain(x, self._chain(dist, eq))
        ba = apply_chain(x, self._chain(eq, dist))
        assert mel_mae(ab, ba) > 0.0

    def test_all_five_closure(self):
        x = render_standard("square")
        chain = self._chain(*[(e, sample_parameters(e, 3)) for e in EFFECT_IDS])
        y = apply_chain(x, chain)
        assert len(y) == 44100
        assert np.all(np.isfinite(y.samples))

    def test_duplicate_effect_rejected(self):
        with pytest.raises(ParameterError):
            self._chain(
                ("eq", sample_parameters("eq", 0)),
                ("eq", sample_parameters("eq", 1)),
            )

    def test_canonical_reorders_to_rack_order(self):
        chain = self._chain(
            ("reverb", sample_parameters("reverb", 0)),
            ("distortion", sample_parameters("distortion", 0)),
        )
        assert chain.canonical().effects == ("distortion", "reverb")

    def test_chain_serialization_round_trip(self):
        chain = self._chain(*[(e, sample_parameters(e, 9)) for e in ("compressor", "phaser")])
        back = EffectChain.from_list(chain.to_list())
        assert back == chain
