"""The iterative matching loop: suggest an effect, predict parameters,
apply, record metric deltas.

Sessions are functional: `apply_step`/`undo_step` return new states, and
the current audio always equals the input replayed through the history
(undo is a replay, not an inverse filter). Suggestion is pure and uses a
masked argmax over the RNN probabilities, renormalized to the effects not
yet used.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from stepfx.audio import AudioBuffer
from stepfx.effects import EFFECT_IDS, EffectChain, ParameterVector, apply_effect
from stepfx.features import MetricReport, compute_metrics, mel_spectrogram, normalize_for_model
from stepfx.models import TrainedModel, load_model

DEFAULT_EPSILON_MAE_DB = 0.5
MAX_STEPS = 5


class ExhaustedError(RuntimeError):
    """Every effect has been used in this session."""


class MissingModelError(RuntimeError):
    """A required model is absent from the registry."""


@dataclass
class ModelRegistry:
    """Read-only bundle of the five effect models plus the next-effect RNN."""

    effect_models: dict
    rnn: object

    @classmethod
    def load(cls, models_dir: str | Path) -> "ModelRegistry":
        models_dir = Path(models_dir)
        effect_models = {}
        for effect in EFFECT_IDS:
            path = models_dir / f"{effect}.sfxw"
            if not path.exists():
                raise MissingModelError(f"missing model file {path}")
            effect_models[effect] = load_model(path, expect_kind="effect_cnn", expect_effect=effect).model
        rnn_path = models_dir / "next_effect.sfxw"
        if not rnn_path.exists():
            raise MissingModelError(f"missing model file {rnn_path}")
        return cls(effect_models, load_model(rnn_path, expect_kind="next_rnn").model)

    @classmethod
    def untrained(cls, seed: int = 0) -> "ModelRegistry":
        """Randomly initialized ensemble (demo/testing; predictions are noise)."""
        from stepfx.models import build_effect_cnn, build_rnn_model

        return cls(
            {effect: build_effect_cnn(effect, seed) for effect in EFFECT_IDS},
            build_rnn_model(seed),
        )


@dataclass(frozen=True)
class StepRecord:
    index: int  # 1-based
    effect: str
    params: dict
    probabilities: tuple[float, ...]
    before: MetricReport
    after: MetricReport
    marginal: bool = False

    @property
    def deltas(self) -> dict:
        return {
            name: getattr(self.after, name) - getattr(self.before, name)
            for name in MetricReport.NAMES
        }

    @property
    def spectrogram_ref(self) -> str:
        return f"step{self.index}"

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "effect": self.effect,
            "params": dict(self.params),
            "probabilities": list(self.probabilities),
            "before": self.before.to_dict(),
            "after": self.after.to_dict(),
            "deltas": self.deltas,
            "marginal": self.marginal,
            "spectrogram_ref": self.spectrogram_ref,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StepRecord":
        return cls(
            d["index"],
            d["effect"],
            d["params"],
            tuple(d["probabilities"]),
            MetricReport.from_dict(d["before"]),
            MetricReport.from_dict(d["after"]),
            d.get("marginal", False),
        )

    def describe(self) -> str:
        parts = ", ".join(
            f"{k}={v}" if isinstance(v, int) else f"{k}={v:.3f}" for k, v in self.params.items()
        )
        tag = " [marginal]" if self.marginal else ""
        return (
            f"Step {self.index}: {self.effect}, {parts}, "
            f"MAE {self.before.mae:.3f}->{self.after.mae:.3f}{tag}"
        )


@dataclass(frozen=True)
class SessionState:
    input_audio: AudioBuffer
    target_audio: AudioBuffer
    current_audio: AudioBuffer
    history: tuple[StepRecord, ...] = ()

    @classmethod
    def start(cls, input_audio: AudioBuffer, target_audio: AudioBuffer) -> "SessionState":
        if len(input_audio) != len(target_audio):
            raise ValueError("input and target must share length")
        return cls(input_audio, target_audio, input_audio)

    @property
    def used_effects(self) -> tuple[str, ...]:
        return tuple(r.effect for r in self.history)

    @property
    def unused_effects(self) -> tuple[str, ...]:
        used = set(self.used_effects)
        return tuple(e for e in EFFECT_IDS if e not in used)

    def metrics(self) -> MetricReport:
        if self.history:
            return self.history[-1].after
        return compute_metrics(self.current_audio, self.target_audio)

    def applied_chain(self) -> EffectChain:
        return EffectChain(
            tuple(ParameterVector(r.effect, r.params) for r in self.history)
        )

    def state_audios(self) -> list[AudioBuffer]:
        """Input plus the audio after each applied step (replayed)."""
        audios = [self.input_audio]
        audio = self.input_audio
        for rec in self.history:
            audio = apply_effect(audio, rec.effect, ParameterVector(rec.effect, rec.params))
            audios.append(audio)
        return audios


def _masked_probabilities(registry: ModelRegistry, state: SessionState) -> np.ndarray:
    target_unit = normalize_for_model(mel_spectrogram(state.target_audio))
    state_units = [normalize_for_model(mel_spectrogram(a)) for a in state.state_audios()]
    probs = np.asarray(
        registry.rnn.predict(target_unit, state_units, list(state.used_effects)),
        dtype=np.float64,
    )
    mask = np.array([e in state.unused_effects for e in EFFECT_IDS])
    masked = probs * mask
    total = masked.sum()
    if total <= 0:  # defensive: softmax outputs are positive
        masked = mask.astype(np.float64)
        total = masked.sum()
    return masked / total


def suggest_step(registry: ModelRegistry, state: SessionState):
    """Propose (effect, params, probabilities); pure, no state mutation."""
    if not state.unused_effects:
        raise ExhaustedError("all five effects have been used")
    probs = _masked_probabilities(registry, state)
    effect = EFFECT_IDS[int(probs.argmax())]
    model = registry.effect_models.get(effect)
    if model is None:
        raise MissingModelError(f"no model loaded for {effect}")
    target_unit = normalize_for_model(mel_spectrogram(state.target_audio))
    current_unit = normalize_for_model(mel_spectrogram(state.current_audio))
    params = model.predict(target_unit, current_unit)
    return effect, params, tuple(float(p) for p in probs)


def apply_step(
    registry: ModelRegistry,
    state: SessionState,
    effect: str,
    params: ParameterVector | dict,
    probabilities: tuple[float, ...] | None = None,
    epsilon: float = DEFAULT_EPSILON_MAE_DB,
):
    """Apply one effect (suggested or user-tweaked) and record the step."""
    if effect in state.used_effects:
        raise ValueError(f"effect {effect!r} already used in this session")
    vector = params if isinstance(params, ParameterVector) else ParameterVector(effect, params)
    if vector.effect != effect:
        raise ValueError(f"parameter vector is for {vector.effect!r}, not {effect!r}")
    if probabilities is None:
        probabilities = tuple(float(p) for p in _masked_probabilities(registry, state))
    before = state.metrics()
    new_audio = apply_effect(state.current_audio, effect, vector)
    after = compute_metrics(new_audio, state.target_audio)
    record = StepRecord(
        index=len(state.history) + 1,
        effect=effect,
        params=dict(vector.values),
        probabilities=probabilities,
        before=before,
        after=after,
        marginal=(before.mae - after.mae) < epsilon,
    )
    new_state = replace(
        state, current_audio=new_audio, history=state.history + (record,)
    )
    return new_state, record


def undo_step(state: SessionState) -> SessionState:
    """Drop the last step by replaying the input through the rest."""
    if not state.history:
        raise ValueError("history is empty")
    audio = state.input_audio
    for rec in state.history[:-1]:
        audio = apply_effect(audio, rec.effect, ParameterVector(rec.effect, rec.params))
    return replace(state, current_audio=audio, history=state.history[:-1])


def run_full(
    registry: ModelRegistry,
    input_audio: AudioBuffer,
    target_audio: AudioBuffer,
    max_steps: int = MAX_STEPS,
    epsilon: float = DEFAULT_EPSILON_MAE_DB,
) -> tuple[SessionState, list[StepRecord]]:
    """Loop suggest+apply until exhaustion, a marginal step, or the cap."""
    state = SessionState.start(input_audio, target_audio)
    records: list[StepRecord] = []
    while state.unused_effects and len(records) < max_steps:
        effect, params, probs = suggest_step(registry, state)
        state, record = apply_step(registry, state, effect, params, probs, epsilon=epsilon)
        records.append(record)
        if record.marginal:
            break
    return state, records


def plan_text(records: list[StepRecord]) -> str:
    """Human-readable step plan."""
    if not records:
        return "No steps taken.\n"
    return "\n".join(r.describe() for r in records) + "\n"
