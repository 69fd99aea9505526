"""Parameter vectors, effect chains, and deterministic application."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from stepfx.audio import SAMPLE_RATE, AudioBuffer
from stepfx.effects import dsp
from stepfx.effects.schema import (
    EFFECT_IDS,
    ParameterError,
    denormalize_params,
    validate_params,
)

# Above this peak the output is scaled back down so buffers stay in [-1, 1];
# a uniform gain is inaudible to the max-referenced Mel features.
SAFETY_PEAK = 0.999


@dataclass(frozen=True)
class ParameterVector:
    """One effect's complete parameter set in normalized knob units."""

    effect: str
    values: dict

    def __post_init__(self):
        clean = validate_params(self.effect, self.values)
        object.__setattr__(self, "values", clean)

    def to_dict(self) -> dict:
        return {"effect": self.effect, "values": dict(self.values)}

    @classmethod
    def from_dict(cls, d: dict) -> "ParameterVector":
        return cls(d["effect"], d["values"])


@dataclass(frozen=True)
class EffectChain:
    """An ordered, duplicate-free application of up to five effects."""

    steps: tuple[ParameterVector, ...] = ()

    def __post_init__(self):
        effects = [s.effect for s in self.steps]
        if len(set(effects)) != len(effects):
            raise ParameterError(f"duplicate effect in chain: {effects}")
        if len(effects) > len(EFFECT_IDS):
            raise ParameterError("chain longer than the rack")

    def __len__(self) -> int:
        return len(self.steps)

    @property
    def effects(self) -> tuple[str, ...]:
        return tuple(s.effect for s in self.steps)

    def canonical(self) -> "EffectChain":
        """Steps reordered into the fixed rack order."""
        order = {e: i for i, e in enumerate(EFFECT_IDS)}
        return EffectChain(tuple(sorted(self.steps, key=lambda s: order[s.effect])))

    def to_list(self) -> list[dict]:
        return [s.to_dict() for s in self.steps]

    @classmethod
    def from_list(cls, items: list[dict]) -> "EffectChain":
        return cls(tuple(ParameterVector.from_dict(d) for d in items))


def apply_effect(audio: AudioBuffer, effect: str, params: ParameterVector | dict) -> AudioBuffer:
    """Apply one effect deterministically; same length out, all finite."""
    if audio.sample_rate != SAMPLE_RATE:
        raise ValueError(f"expected {SAMPLE_RATE} Hz audio, got {audio.sample_rate}")
    if isinstance(params, ParameterVector):
        if params.effect != effect:
            raise ParameterError(f"vector is for {params.effect!r}, not {effect!r}")
        values = params.values
    else:
        values = validate_params(effect, params)
    phys = denormalize_params(effect, values)

    x = audio.samples.astype(np.float64)
    if effect == "compressor":
        y = dsp.compressor(x, phys["low_band"], phys["mid_band"], phys["high_band"])
    elif effect == "distortion":
        y = dsp.distortion(x, phys["mode"], phys["drive"])
    elif effect == "eq":
        y = dsp.eq(x, phys["cutoff"], phys["resonance"], phys["gain"])
    elif effect == "phaser":
        y = dsp.phaser(x, phys["depth"], phys["frequency"], phys["feedback"])
    elif effect == "reverb":
        y = dsp.reverb(x, phys["mix"], phys["low_cut"], phys["high_cut"])
    else:
        raise ParameterError(f"unknown effect {effect!r}")

    if not np.all(np.isfinite(y)):
        raise ArithmeticError(f"{effect} produced non-finite samples")
    peak = np.max(np.abs(y)) if y.size else 0.0
    if peak > SAFETY_PEAK:
        y = y * (SAFETY_PEAK / peak)
    return AudioBuffer(y.astype(np.float32), audio.sample_rate)


def apply_chain(audio: AudioBuffer, chain: EffectChain) -> AudioBuffer:
    """Left-fold of apply_effect in the chain's stored order."""
    out = audio
    for step in chain.steps:
        out = apply_effect(out, step.effect, step)
    return out


# Transparent configurations backing the neutrality property. EQ's neutral
# gain (0.5 -> 0 dB) sits inside the sampled range's excluded gap, and
# reverb's neutrality needs the bypass flag, so these are test/doc hooks
# rather than sampleable vectors.
NEUTRAL_PHYSICAL = {
    "compressor": {"low_band": 1.0, "mid_band": 1.0, "high_band": 1.0},
    "distortion": {"mode": "soft_clip", "drive": 1.0},
    "eq": {"cutoff": 2000.0, "resonance": 0.707, "gain": 0.0},
    "phaser": {"depth": 0.0, "frequency": 1.0, "feedback": 0.0},
    "reverb": None,  # bypass flag
}


def apply_neutral(audio: AudioBuffer, effect: str) -> AudioBuffer:
    """Run an effect in its documented transparent configuration."""
    x = audio.samples.astype(np.float64)
    phys = NEUTRAL_PHYSICAL[effect]
    if effect == "compressor":
        y = dsp.compressor(x, phys["low_band"], phys["mid_band"], phys["high_band"])
    elif effect == "distortion":
        y = dsp.distortion(x, phys["mode"], phys["drive"])
    elif effect == "eq":
        y = dsp.eq(x, phys["cutoff"], phys["resonance"], phys["gain"])
    elif effect == "phaser":
        y = dsp.phaser(x, phys["depth"], phys["frequency"], phys["feedback"])
    elif effect == "reverb":
        y = dsp.reverb(x, 0.5, 50.0, 16000.0, bypass=True)
    else:
        raise ParameterError(f"unknown effect {effect!r}")
    return AudioBuffer(y.astype(np.float32), audio.sample_rate)
