"""Deterministic surrogate synthesizer.

Twelve presets in three groups of four:

- ``basic``         single-oscillator sine / triangle / saw / square
- ``advanced``      four fixed dual-oscillator recipes
- ``advanced_mod``  the same recipes, each with one LFO routing

Saw and square oscillators are polyBLEP band-limited; renders are pure
functions of (preset, note, seed) and always 1 s at 44100 Hz, faded and
peak-normalized to 0.9.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from stepfx.audio import RENDER_SAMPLES, SAMPLE_RATE, AudioBuffer
from stepfx.util import rng_from

GROUPS = ("basic", "advanced", "advanced_mod")
OSC_SHAPES = ("sine", "triangle", "saw", "square")
LFO_DESTINATIONS = ("pitch", "amplitude", "osc-mix")

FADE_SECONDS = 0.005
TARGET_PEAK = 0.9

# LFO depth scaling: pitch depth 1.0 swings +/-120 cents; amplitude depth is
# the tremolo fraction; osc-mix depth is the crossfade swing around the
# preset's static levels.
PITCH_LFO_CENTS = 120.0


@dataclass(frozen=True)
class NoteEvent:
    midi_note: int = 60
    velocity: int = 127
    duration_s: float = 1.0

    def __post_init__(self):
        if not (0 <= self.midi_note <= 127):
            raise ValueError(f"midi_note {self.midi_note} outside 0..127")
        if not (1 <= self.velocity <= 127):
            raise ValueError(f"velocity {self.velocity} outside 1..127")
        if self.duration_s <= 0:
            raise ValueError("duration_s must be positive")


@dataclass(frozen=True)
class OscillatorConfig:
    shape: str
    detune_cents: float = 0.0
    level: float = 1.0

    def __post_init__(self):
        if self.shape not in OSC_SHAPES:
            raise ValueError(f"unknown oscillator shape {self.shape!r}")


@dataclass(frozen=True)
class LfoRouting:
    rate_hz: float
    depth: float
    destination: str

    def __post_init__(self):
        if self.destination not in LFO_DESTINATIONS:
            raise ValueError(f"unknown LFO destination {self.destination!r}")


@dataclass(frozen=True)
class PresetDescriptor:
    id: str
    group: str
    oscillators: tuple[OscillatorConfig, ...]
    modulation: LfoRouting | None = None

    def __post_init__(self):
        if self.group not in GROUPS:
            raise ValueError(f"unknown preset group {self.group!r}")
        if self.group == "basic":
            if len(self.oscillators) != 1 or self.modulation is not None:
                raise ValueError("basic presets are single-oscillator, unmodulated")
        if self.group == "advanced_mod" and self.modulation is None:
            raise ValueError("advanced_mod presets require a modulation routing")


def _dual(shape_a, shape_b, detune_cents, level_a, level_b):
    return (
        OscillatorConfig(shape_a, 0.0, level_a),
        OscillatorConfig(shape_b, detune_cents, level_b),
    )


# The four dual-oscillator recipes backing both advanced groups: a fifths
# stack, a detuned unison pair, an octave-down stab, and a bell-ish pair
# (second partial near 3x the fundamental).
_RECIPES = {
    "saw_fifths": _dual("saw", "saw", 700.0, 0.55, 0.45),
    "saw_unison": _dual("saw", "saw", 9.0, 0.5, 0.5),
    "square_sub": _dual("square", "saw", -1200.0, 0.5, 0.5),
    "bell_pair": _dual("sine", "sine", 1902.0, 0.6, 0.4),
}

_MOD_ROUTINGS = {
    "saw_fifths_vibrato": ("saw_fifths", LfoRouting(5.5, 0.6, "pitch")),
    "saw_unison_tremolo": ("saw_unison", LfoRouting(3.0, 0.8, "amplitude")),
    "square_sub_morph": ("square_sub", LfoRouting(2.0, 1.0, "osc-mix")),
    "bell_pair_warble": ("bell_pair", LfoRouting(0.5, 0.8, "pitch")),
}


def _build_presets() -> tuple[PresetDescriptor, ...]:
    presets = [
        PresetDescriptor(shape, "basic", (OscillatorConfig(shape),))
        for shape in OSC_SHAPES
    ]
    for name, oscs in _RECIPES.items():
        presets.append(PresetDescriptor(name, "advanced", oscs))
    for name, (recipe, lfo) in _MOD_ROUTINGS.items():
        presets.append(PresetDescriptor(name, "advanced_mod", _RECIPES[recipe], lfo))
    return tuple(presets)


_PRESETS = _build_presets()
_PRESETS_BY_ID = {p.id: p for p in _PRESETS}


def list_presets(group: str | None = None) -> tuple[PresetDescriptor, ...]:
    """All twelve presets, optionally filtered by group."""
    if group is None:
        return _PRESETS
    if group not in GROUPS:
        raise ValueError(f"unknown preset group {group!r}")
    return tuple(p for p in _PRESETS if p.group == group)


def get_preset(preset_id: str) -> PresetDescriptor:
    try:
        return _PRESETS_BY_ID[preset_id]
    except KeyError:
        raise KeyError(f"unknown preset {preset_id!r}") from None


def midi_to_freq(note: int) -> float:
    """Equal-tempered frequency of a MIDI note (A4 = 440 Hz)."""
    if not (0 <= note <= 127):
        raise ValueError(f"MIDI note {note} outside 0..127")
    return 440.0 * 2.0 ** ((note - 69) / 12.0)


def _polyblep(phase: np.ndarray, dt: np.ndarray) -> np.ndarray:
    """Two-sample polynomial band-limit correction at phase wraps."""
    out = np.zeros_like(phase)
    lo = phase < dt
    t = phase[lo] / dt[lo]
    out[lo] = t + t - t * t - 1.0
    hi = phase > 1.0 - dt
    t = (phase[hi] - 1.0) / dt[hi]
    out[hi] = t * t + t + t + 1.0
    return out


def _oscillator(shape: str, phase: np.ndarray, dt: np.ndarray) -> np.ndarray:
    if shape == "sine":
        return np.sin(2.0 * np.pi * phase)
    if shape == "triangle":
        return 2.0 * np.abs(2.0 * phase - 1.0) - 1.0
    if shape == "saw":
        return (2.0 * phase - 1.0) - _polyblep(phase, dt)
    if shape == "square":
        naive = np.where(phase < 0.5, 1.0, -1.0)
        return naive + _polyblep(phase, dt) - _polyblep((phase + 0.5) % 1.0, dt)
    raise ValueError(f"unknown oscillator shape {shape!r}")


def render_preset(
    preset: PresetDescriptor | str,
    note: NoteEvent | None = None,
    seed: int = 0,
) -> AudioBuffer:
    """Render a preset to a faded, peak-normalized buffer.

    Deterministic: identical (preset, note, seed) give a bit-identical
    buffer. The seed only randomizes oscillator start phases.
    """
    if isinstance(preset, str):
        preset = get_preset(preset)
    note = note or NoteEvent()
    n = round(note.duration_s * SAMPLE_RATE)
    if abs(n - note.duration_s * SAMPLE_RATE) > 1e-9:
        raise ValueError("duration must be an integer number of samples")

    rng = rng_from("render", preset.id, note.midi_note, note.velocity, seed)
    t = np.arange(n, dtype=np.float64) / SAMPLE_RATE
    f0 = midi_to_freq(note.midi_note)
    lfo = preset.modulation
    lfo_wave = (
        np.sin(2.0 * np.pi * lfo.rate_hz * t) if lfo is not None else None
    )

    mix = np.zeros(n, dtype=np.float64)
    n_osc = len(preset.oscillators)
    for idx, osc in enumerate(preset.oscillators):
        freq = np.full(n, f0 * 2.0 ** (osc.detune_cents / 1200.0))
        if lfo is not None and lfo.destination == "pitch":
            cents = PITCH_LFO_CENTS * lfo.depth * lfo_wave
            freq = freq * 2.0 ** (cents / 1200.0)
        dt = freq / SAMPLE_RATE
        phase = (rng.random() + np.cumsum(dt) - dt) % 1.0
        wave = _oscillator(osc.shape, phase, dt)

        level = np.full(n, osc.level)
        if lfo is not None and lfo.destination == "osc-mix" and n_osc == 2:
            # crossfade between the two oscillators around their static levels
            sway = 0.5 * lfo.depth * lfo_wave
            level = level + (sway if idx == 0 else -sway)
            level = np.clip(level, 0.0, 1.0)
        mix += level * wave

    if lfo is not None and lfo.destination == "amplitude":
        mix *= 1.0 - lfo.depth * 0.5 * (1.0 + lfo_wave)

    mix *= note.velocity / 127.0

    fade = int(FADE_SECONDS * SAMPLE_RATE)
    if fade > 0 and n >= 2 * fade:
        ramp = np.linspace(0.0, 1.0, fade, endpoint=False)
        mix[:fade] *= ramp
        mix[-fade:] *= ramp[::-1]

    peak = np.max(np.abs(mix))
    if peak > 0:
        mix *= TARGET_PEAK / peak
    return AudioBuffer(mix.astype(np.float32))


def render_standard(preset: PresetDescriptor | str, seed: int = 0) -> AudioBuffer:
    """The fixed render contract: C4, max velocity, 1 s."""
    return render_preset(preset, NoteEvent(), seed)
