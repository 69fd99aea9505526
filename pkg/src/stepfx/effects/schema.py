"""Parameter schemas for the five effects, sampling, and unit maps.

Values in a ParameterVector are "knob units": the normalized ranges the
dataset samples from. `denormalize_params` maps them to the physical
quantities the DSP bodies consume (Hz, dB, ratios); the maps are this
package's own definitions and are documented per-parameter in
`physical_map` strings (also exported as JSON for the UI).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from stepfx.util import rng_from

# Canonical rack order; chains are applied in this order during dataset
# generation regardless of how a user later sequences their steps.
EFFECT_IDS = ("compressor", "distortion", "eq", "phaser", "reverb")

DISTORTION_MODES = (
    "soft_clip",
    "hard_clip",
    "asym_clip",
    "foldback",
    "sine_fold",
    "half_rect",
    "full_rect",
    "bitcrush",
    "downsample",
    "diode",
    "cubic",
    "notch",
)


class ParameterError(ValueError):
    """A parameter value is missing, unknown, or outside its range."""


@dataclass(frozen=True)
class ParameterSpec:
    name: str
    kind: str  # continuous | categorical | binary
    ranges: tuple[tuple[float, float], ...] = ()
    classes: tuple[str, ...] = ()
    physical_map: str = ""

    def contains(self, value) -> bool:
        if self.kind == "categorical":
            return isinstance(value, (int, np.integer)) and 0 <= value < len(self.classes)
        if self.kind == "binary":
            return value in (0, 1)
        if not isinstance(value, (int, float, np.floating, np.integer)):
            return False
        v = float(value)
        return any(lo <= v <= hi for lo, hi in self.ranges)

    def span(self) -> float:
        return sum(hi - lo for lo, hi in self.ranges)


def _cont(name, lo, hi, physical_map):
    return ParameterSpec(name, "continuous", ((lo, hi),), (), physical_map)


SCHEMAS: dict[str, tuple[ParameterSpec, ...]] = {
    "compressor": (
        _cont("low_band", 0.0, 1.0, "ratio 1+7a, threshold -12-18a dB, band < 120 Hz"),
        _cont("mid_band", 0.0, 1.0, "ratio 1+7a, threshold -12-18a dB, band 120 Hz - 2.5 kHz"),
        _cont("high_band", 0.0, 1.0, "ratio 1+7a, threshold -12-18a dB, band > 2.5 kHz"),
    ),
    "distortion": (
        ParameterSpec(
            "mode",
            "categorical",
            (),
            DISTORTION_MODES,
            "waveshaper selection, 12 classes",
        ),
        _cont("drive", 0.3, 1.0, "pre-gain 10^(2d-0.6), output RMS matched to input"),
    ),
    "eq": (
        _cont("cutoff", 0.50, 0.95, "shelf corner 2000*9^((c-0.5)/0.45) Hz (2-18 kHz log)"),
        _cont("resonance", 0.0, 1.0, "shelf Q = 0.5 + 7.5r"),
        ParameterSpec(
            "gain",
            "continuous",
            ((0.0, 0.4), (0.6, 1.0)),
            (),
            "high-shelf gain -18+36g dB; (0.4, 0.6) excluded so shelves stay audible",
        ),
    ),
    "phaser": (
        _cont("depth", 0.0, 1.0, "scales the allpass center sweep, d*[200, 8000] Hz"),
        _cont("frequency", 0.0, 1.0, "LFO rate 0.1*80^f Hz (0.1-8 Hz exponential)"),
        _cont("feedback", 0.0, 1.0, "wet feedback 0.85*x"),
    ),
    "reverb": (
        _cont("mix", 0.3, 0.7, "dry/wet crossfade fraction"),
        _cont("low_cut", 0.0, 1.0, "input low-shelf corner 50*20^x Hz (50 Hz - 1 kHz log)"),
        _cont("high_cut", 0.0, 1.0, "input high-shelf corner 1000*16^x Hz (1-16 kHz log)"),
    ),
}


def effect_schema(effect: str) -> tuple[ParameterSpec, ...]:
    """The parameter specs for one effect, in canonical order."""
    _check_effect(effect)
    return SCHEMAS[effect]


def schema_json() -> str:
    """Machine-readable schema export consumed by the service and the UI."""
    payload = {
        "rack_order": list(EFFECT_IDS),
        "effects": {
            effect: [
                {
                    "name": spec.name,
                    "kind": spec.kind,
                    "ranges": [list(r) for r in spec.ranges],
                    "classes": list(spec.classes),
                    "physical_map": spec.physical_map,
                }
                for spec in specs
            ]
            for effect, specs in SCHEMAS.items()
        },
    }
    return json.dumps(payload, indent=2, sort_keys=True)


def _check_effect(effect: str) -> None:
    if effect not in SCHEMAS:
        raise ParameterError(f"unknown effect {effect!r}")


def validate_params(effect: str, values: dict) -> dict:
    """Check completeness and ranges; returns a plain-python copy."""
    _check_effect(effect)
    specs = SCHEMAS[effect]
    known = {s.name for s in specs}
    extra = set(values) - known
    if extra:
        raise ParameterError(f"unknown parameter {sorted(extra)[0]!r} for {effect}")
    clean = {}
    for spec in specs:
        if spec.name not in values:
            raise ParameterError(f"missing parameter {spec.name!r} for {effect}")
        v = values[spec.name]
        if not spec.contains(v):
            raise ParameterError(
                f"parameter {spec.name!r} value {v!r} outside its range for {effect}"
            )
        clean[spec.name] = int(v) if spec.kind in ("categorical", "binary") else float(v)
    return clean


def sample_parameters(effect: str, seed: int = 0) -> dict:
    """Uniform draw inside each spec's range(s); deterministic per seed.

    Disjoint continuous ranges pick a subinterval with probability
    proportional to its length, then sample uniformly inside it.
    """
    _check_effect(effect)
    rng = rng_from("params", effect, seed)
    values = {}
    for spec in SCHEMAS[effect]:
        if spec.kind == "categorical":
            values[spec.name] = int(rng.integers(len(spec.classes)))
        elif spec.kind == "binary":
            values[spec.name] = int(rng.integers(2))
        else:
            spans = np.array([hi - lo for lo, hi in spec.ranges])
            idx = int(rng.choice(len(spec.ranges), p=spans / spans.sum())) if len(spec.ranges) > 1 else 0
            lo, hi = spec.ranges[idx]
            values[spec.name] = float(lo + (hi - lo) * rng.random())
    return values


# --- normalized <-> physical unit maps -----------------------------------

def _eq_cutoff_hz(c: float) -> float:
    return 2000.0 * 9.0 ** ((c - 0.5) / 0.45)


def denormalize_params(effect: str, values: dict) -> dict:
    """Map knob units to the physical quantities the DSP bodies use."""
    clean = validate_params(effect, values)
    if effect == "compressor":
        return {k: 1.0 + 7.0 * v for k, v in clean.items()}  # ratios
    if effect == "distortion":
        return {
            "mode": DISTORTION_MODES[clean["mode"]],
            "drive": 10.0 ** (2.0 * clean["drive"] - 0.6),  # pre-gain
        }
    if effect == "eq":
        return {
            "cutoff": _eq_cutoff_hz(clean["cutoff"]),
            "resonance": 0.5 + 7.5 * clean["resonance"],  # Q
            "gain": -18.0 + 36.0 * clean["gain"],  # dB
        }
    if effect == "phaser":
        return {
            "depth": clean["depth"],
            "frequency": 0.1 * 80.0 ** clean["frequency"],  # LFO Hz
            "feedback": 0.85 * clean["feedback"],
        }
    return {
        "mix": clean["mix"],
        "low_cut": 50.0 * 20.0 ** clean["low_cut"],  # Hz
        "high_cut": 1000.0 * 16.0 ** clean["high_cut"],  # Hz
    }


def normalize_params(effect: str, physical: dict) -> dict:
    """Inverse of `denormalize_params`; raises if outside the mapped range."""
    _check_effect(effect)
    if effect == "compressor":
        values = {k: (v - 1.0) / 7.0 for k, v in physical.items()}
    elif effect == "distortion":
        mode = physical["mode"]
        if mode not in DISTORTION_MODES:
            raise ParameterError(f"unknown distortion mode {mode!r}")
        values = {
            "mode": DISTORTION_MODES.index(mode),
            "drive": (np.log10(physical["drive"]) + 0.6) / 2.0,
        }
    elif effect == "eq":
        values = {
            "cutoff": 0.5 + 0.45 * np.log(physical["cutoff"] / 2000.0) / np.log(9.0),
            "resonance": (physical["resonance"] - 0.5) / 7.5,
            "gain": (physical["gain"] + 18.0) / 36.0,
        }
    elif effect == "phaser":
        values = {
            "depth": physical["depth"],
            "frequency": np.log(physical["frequency"] / 0.1) / np.log(80.0),
            "feedback": physical["feedback"] / 0.85,
        }
    else:
        values = {
            "mix": physical["mix"],
            "low_cut": np.log(physical["low_cut"] / 50.0) / np.log(20.0),
            "high_cut": np.log(physical["high_cut"] / 1000.0) / np.log(16.0),
        }
    # snap float noise at range boundaries so exact-endpoint round-trips validate
    specs = {s.name: s for s in SCHEMAS[effect]}
    snapped = {}
    for name, v in values.items():
        spec = specs.get(name)
        if spec is not None and spec.kind == "continuous" and not isinstance(v, int):
            v = float(v)
            for lo, hi in spec.ranges:
                for bound in (lo, hi):
                    if abs(v - bound) < 1e-9:
                        v = bound
        snapped[name] = v
    return validate_params(effect, snapped)
