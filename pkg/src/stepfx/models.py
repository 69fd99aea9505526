"""The per-effect CNN parameter predictors and the next-effect RNN.

Both families consume stacked (target, current) unit-range Mel matrices,
shape (2, 128, 87). Heads are decoded so any raw network output lands
inside the sampled parameter ranges: continuous sigmoids are rescaled
into their range, the categorical head argmaxes, and the EQ gain is a
binary subinterval flag plus a magnitude positioned inside the chosen
subinterval (which is how the disjoint Table ranges stay unreachable in
between).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from stepfx.effects import EFFECT_IDS, ParameterVector
from stepfx.effects.schema import SCHEMAS
from stepfx.nn import (
    ELU,
    BiLSTM,
    Conv2D,
    Dense,
    Dropout,
    Flatten,
    GlobalAvgPool,
    MaxPool2D,
    Sequential,
    Sigmoid,
    Softmax,
    TimeDistributed,
)
from stepfx.nn.container import load_weights, save_weights
from stepfx.util import rng_from

INPUT_SHAPE = (2, 128, 87)
N_EFFECTS = len(EFFECT_IDS)

EQ_LOW_RANGE = (0.0, 0.4)
EQ_HIGH_RANGE = (0.6, 1.0)


# --- heads --------------------------------------------------------------------


@dataclass(frozen=True)
class HeadSpec:
    name: str
    kind: str  # continuous | binary | categorical
    out_dim: int
    loss: str  # mse | bce | cce


def head_specs(effect: str) -> tuple[HeadSpec, ...]:
    if effect == "eq":
        return (
            HeadSpec("cutoff", "continuous", 1, "mse"),
            HeadSpec("resonance", "continuous", 1, "mse"),
            HeadSpec("gain_flag", "binary", 1, "bce"),
            HeadSpec("gain_mag", "continuous", 1, "mse"),
        )
    heads = []
    for spec in SCHEMAS[effect]:
        if spec.kind == "categorical":
            heads.append(HeadSpec(spec.name, "categorical", len(spec.classes), "cce"))
        else:
            heads.append(HeadSpec(spec.name, "continuous", 1, "mse"))
    return tuple(heads)


def _cont_range(effect: str, name: str) -> tuple[float, float]:
    spec = next(s for s in SCHEMAS[effect] if s.name == name)
    return spec.ranges[0][0], spec.ranges[-1][1]


def encode_labels(effect: str, params: dict) -> dict:
    """Normalized-knob params -> per-head training targets in [0, 1]."""
    out = {}
    if effect == "eq":
        gain = params["gain"]
        high = gain >= EQ_HIGH_RANGE[0]
        lo, hi = EQ_HIGH_RANGE if high else EQ_LOW_RANGE
        out["gain_flag"] = 1.0 if high else 0.0
        out["gain_mag"] = (gain - lo) / (hi - lo)
        for name in ("cutoff", "resonance"):
            lo, hi = _cont_range(effect, name)
            out[name] = (params[name] - lo) / (hi - lo)
        return out
    for spec in SCHEMAS[effect]:
        if spec.kind == "categorical":
            out[spec.name] = int(params[spec.name])
        else:
            lo, hi = spec.ranges[0][0], spec.ranges[-1][1]
            out[spec.name] = (params[spec.name] - lo) / (hi - lo)
    return out


def decode_outputs(effect: str, outputs: dict) -> dict:
    """Per-head network outputs -> a complete in-range parameter dict."""
    params = {}
    if effect == "eq":
        flag = float(np.asarray(outputs["gain_flag"]).reshape(-1)[0])
        mag = float(np.clip(np.asarray(outputs["gain_mag"]).reshape(-1)[0], 0.0, 1.0))
        lo, hi = EQ_HIGH_RANGE if flag > 0.5 else EQ_LOW_RANGE
        params["gain"] = lo + mag * (hi - lo)
        for name in ("cutoff", "resonance"):
            lo, hi = _cont_range(effect, name)
            unit = float(np.clip(np.asarray(outputs[name]).reshape(-1)[0], 0.0, 1.0))
            params[name] = lo + unit * (hi - lo)
        return params
    for spec in SCHEMAS[effect]:
        raw = np.asarray(outputs[spec.name])
        if spec.kind == "categorical":
            params[spec.name] = int(raw.reshape(-1, raw.shape[-1]).argmax(axis=-1)[0])
        else:
            lo, hi = spec.ranges[0][0], spec.ranges[-1][1]
            unit = float(np.clip(raw.reshape(-1)[0], 0.0, 1.0))
            params[spec.name] = lo + unit * (hi - lo)
    return params


# --- per-effect CNN -------------------------------------------------------------

CNN_CHANNELS = (32, 64, 128, 128)
CNN_DENSE = (256, 128)


class EffectModel:
    """Conv trunk + one output head per parameter."""

    def __init__(self, effect: str, seed: int = 0):
        if effect not in EFFECT_IDS:
            raise ValueError(f"unknown effect {effect!r}")
        self.effect = effect
        self.seed = seed
        rng = rng_from("effect-cnn", effect, seed)
        blocks = []
        in_ch = INPUT_SHAPE[0]
        for ch in CNN_CHANNELS:
            blocks += [Conv2D(in_ch, ch, rng=rng), ELU(), MaxPool2D()]
            in_ch = ch
        h = INPUT_SHAPE[1] // 2 // 2 // 2 // 2
        w = INPUT_SHAPE[2] // 2 // 2 // 2 // 2
        flat = CNN_CHANNELS[-1] * h * w
        blocks += [Flatten(), Dense(flat, CNN_DENSE[0], rng=rng), ELU(), Dropout(0.5)]
        blocks += [Dense(CNN_DENSE[0], CNN_DENSE[1], rng=rng), ELU(), Dropout(0.5)]
        self.trunk = Sequential(*blocks)
        self.heads = {}
        for spec in head_specs(effect):
            activation = Softmax() if spec.kind == "categorical" else Sigmoid()
            self.heads[spec.name] = Sequential(
                Dense(CNN_DENSE[1], spec.out_dim, rng=rng), activation
            )

    def forward_heads(self, x: np.ndarray, train: bool = False, rng=None) -> dict:
        feat = self.trunk.forward(x, train=train, rng=rng)
        self._feat_shape = feat.shape
        return {name: head.forward(feat, train=train, rng=rng) for name, head in self.heads.items()}

    def backward_heads(self, head_grads: dict) -> None:
        dfeat = np.zeros(self._feat_shape, dtype=np.float32)
        for name, grad in head_grads.items():
            dfeat = dfeat + self.heads[name].backward(grad)
        self.trunk.backward(dfeat)

    def zero_grad(self):
        self.trunk.zero_grad()
        for head in self.heads.values():
            head.zero_grad()

    def named_parameters(self):
        yield from self.trunk.named_parameters("trunk.")
        for name, head in sorted(self.heads.items()):
            yield from head.named_parameters(f"head.{name}.")

    def predict(self, target_unit: np.ndarray, current_unit: np.ndarray) -> ParameterVector:
        x = stack_pair(target_unit, current_unit)[None].astype(np.float32)
        outputs = self.forward_heads(x, train=False)
        return ParameterVector(self.effect, decode_outputs(self.effect, outputs))


def build_effect_cnn(effect: str, seed: int = 0) -> EffectModel:
    return EffectModel(effect, seed)


def stack_pair(target_unit: np.ndarray, current_unit: np.ndarray) -> np.ndarray:
    """(target, current) unit-range matrices -> (2, 128, 87) float32."""
    target_unit = np.asarray(target_unit, dtype=np.float32)
    current_unit = np.asarray(current_unit, dtype=np.float32)
    if target_unit.shape != INPUT_SHAPE[1:] or current_unit.shape != INPUT_SHAPE[1:]:
        raise ValueError(
            f"expected two {INPUT_SHAPE[1:]} matrices, got {target_unit.shape} and {current_unit.shape}"
        )
    return np.stack([target_unit, current_unit])


# --- next-effect RNN -------------------------------------------------------------

RNN_CNN_CHANNELS = (16, 32, 64)
RNN_EMBED = 128
RNN_HIDDEN = 128


class NextEffectModel:
    """Time-distributed CNN embedding + BiLSTM + softmax over the rack."""

    def __init__(self, seed: int = 0):
        self.seed = seed
        rng = rng_from("next-effect-rnn", seed)
        blocks = []
        in_ch = INPUT_SHAPE[0]
        for ch in RNN_CNN_CHANNELS:
            blocks += [Conv2D(in_ch, ch, rng=rng), ELU(), MaxPool2D()]
            in_ch = ch
        blocks += [GlobalAvgPool(), Dense(RNN_CNN_CHANNELS[-1], RNN_EMBED, rng=rng), ELU()]
        self.step_cnn = TimeDistributed(Sequential(*blocks))
        self.lstm = BiLSTM(RNN_EMBED + N_EFFECTS, RNN_HIDDEN, rng=rng)
        self.head = Sequential(
            Dense(2 * RNN_HIDDEN, 128, rng=rng),
            ELU(),
            Dropout(0.5),
            Dense(128, N_EFFECTS, rng=rng),
            Softmax(),
        )

    def forward(self, steps: np.ndarray, used_onehots: np.ndarray, train: bool = False, rng=None):
        """steps (B, T, 2, 128, 87) + one-hots (B, T, 5) -> probabilities (B, 5)."""
        if steps.ndim != 5 or steps.shape[2:] != INPUT_SHAPE:
            raise ValueError(f"expected (B, T, 2, 128, 87) steps, got {steps.shape}")
        if used_onehots.shape != (*steps.shape[:2], N_EFFECTS):
            raise ValueError(f"one-hot shape {used_onehots.shape} does not match steps")
        embed = self.step_cnn.forward(steps, train=train, rng=rng)
        seq = np.concatenate([embed, used_onehots.astype(embed.dtype)], axis=-1)
        out = self.lstm.forward(seq, train=train, rng=rng)
        final = np.concatenate([out[:, -1, :RNN_HIDDEN], out[:, 0, RNN_HIDDEN:]], axis=-1)
        self._out_shape = out.shape
        return self.head.forward(final, train=train, rng=rng)

    def backward(self, dprobs: np.ndarray) -> None:
        dfinal = self.head.backward(dprobs)
        dout = np.zeros(self._out_shape, dtype=dfinal.dtype)
        dout[:, -1, :RNN_HIDDEN] += dfinal[:, :RNN_HIDDEN]
        dout[:, 0, RNN_HIDDEN:] += dfinal[:, RNN_HIDDEN:]
        dseq = self.lstm.backward(dout)
        self.step_cnn.backward(dseq[..., :RNN_EMBED])

    def zero_grad(self):
        self.step_cnn.module.zero_grad()
        self.lstm.zero_grad()
        self.head.zero_grad()

    def named_parameters(self):
        yield from self.step_cnn.module.named_parameters("cnn.")
        for name in self.lstm.params:
            yield f"lstm.{name}", self.lstm, name
        yield from self.head.named_parameters("head.")

    def predict(self, target_unit: np.ndarray, state_units: list, used: list) -> np.ndarray:
        """Probabilities for the next effect given the walked states so far."""
        steps = np.stack([stack_pair(target_unit, s) for s in state_units])[None]
        onehots = np.zeros((1, len(state_units), N_EFFECTS), dtype=np.float32)
        for t, effect in enumerate(used):
            onehots[0, t + 1, EFFECT_IDS.index(effect)] = 1.0
        return self.forward(steps.astype(np.float32), onehots)[0]


def build_rnn_model(seed: int = 0) -> NextEffectModel:
    return NextEffectModel(seed)


# --- serialization ----------------------------------------------------------------


@dataclass
class TrainedModel:
    kind: str  # "effect_cnn" | "next_rnn"
    effect: str | None
    model: object
    history: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)


class ModelMismatchError(RuntimeError):
    """Loaded container does not match the expected model kind/effect."""


def save_model(path: str | Path, trained: TrainedModel) -> None:
    arrays = {name: layer.params[pname] for name, layer, pname in trained.model.named_parameters()}
    manifest = {
        "kind": trained.kind,
        "effect": trained.effect,
        "seed": getattr(trained.model, "seed", 0),
        "history": trained.history,
        "meta": trained.meta,
        "architecture": {
            "input_shape": list(INPUT_SHAPE),
            "cnn_channels": list(CNN_CHANNELS if trained.kind == "effect_cnn" else RNN_CNN_CHANNELS),
            "hidden": RNN_HIDDEN if trained.kind == "next_rnn" else CNN_DENSE[1],
        },
    }
    save_weights(path, manifest, arrays)


def load_model(path: str | Path, expect_kind: str | None = None, expect_effect: str | None = None) -> TrainedModel:
    manifest, arrays = load_weights(path)
    kind = manifest.get("kind")
    effect = manifest.get("effect")
    if expect_kind is not None and kind != expect_kind:
        raise ModelMismatchError(f"{path}: contains a {kind!r} model, expected {expect_kind!r}")
    if expect_effect is not None and effect != expect_effect:
        raise ModelMismatchError(f"{path}: model is for {effect!r}, expected {expect_effect!r}")
    if kind == "effect_cnn":
        model = EffectModel(effect, seed=manifest.get("seed", 0))
    elif kind == "next_rnn":
        model = NextEffectModel(seed=manifest.get("seed", 0))
    else:
        raise ModelMismatchError(f"{path}: unknown model kind {kind!r}")
    for name, layer, pname in model.named_parameters():
        if name not in arrays:
            raise ModelMismatchError(f"{path}: missing weights for {name}")
        if arrays[name].shape != layer.params[pname].shape:
            raise ModelMismatchError(f"{path}: shape mismatch for {name}")
        layer.params[pname] = arrays[name]
    return TrainedModel(kind, effect, model, manifest.get("history", []), manifest.get("meta", {}))


def dataset_fingerprint(examples: list) -> str:
    """Stable digest of the example identities feeding a training run."""
    h = hashlib.sha256()
    for ex in examples:
        h.update(json.dumps(ex.to_dict(), sort_keys=True).encode())
    return h.hexdigest()[:16]
