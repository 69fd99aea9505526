"""Evaluation tables, report CSVs, and spectrogram progression rendering.

Three report families mirror the system's three claims: per-effect error
reduction (CNNs), next-effect prediction accuracy (RNN), and whole-system
initial/final error with per-step deltas. Every aggregate cell is
recomputable from the raw per-pair CSV emitted next to it; wall-clock
latency is reported in the text summary only so CSVs stay byte-stable
across reruns.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from stepfx.audio import AudioBuffer
from stepfx.dataset import Manifest, PairExample, SequenceExample, sample_chain
from stepfx.effects import EFFECT_IDS, EffectChain, apply_chain, apply_effect
from stepfx.engine import ModelRegistry, StepRecord, run_full
from stepfx.features import (
    MetricReport,
    compute_metrics,
    mel_spectrogram,
    normalize_for_model,
    spectrogram_png,
)
from stepfx.synth import render_standard
from stepfx.util import seed_from

PHASER_CAVEAT = (
    "phaser rows: magnitude features carry little phase information, so these "
    "error deltas understate audible improvement"
)


def _csv(rows: list[dict], fields: list[str]) -> str:
    # floats use repr (shortest round-trip) so aggregates recompute exactly
    lines = [",".join(fields)]
    for row in rows:
        cells = []
        for f in fields:
            v = row.get(f, "")
            cells.append(repr(v) if isinstance(v, float) else str(v))
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


# --- per-effect CNN evaluation (error-reduction table) ---------------------------


@dataclass
class EffectEvalReport:
    mode: str  # "trained" | "oracle"
    raw_rows: list[dict]
    note: str = PHASER_CAVEAT

    def mean_delta(self, effect: str, metric: str) -> float:
        vals = [r[f"delta_{metric}"] for r in self.raw_rows if r["effect"] == effect]
        return float(np.mean(vals)) if vals else float("nan")

    def effects(self) -> list[str]:
        return [e for e in EFFECT_IDS if any(r["effect"] == e for r in self.raw_rows)]

    def to_csv(self) -> str:
        rows = [
            {"effect": e, "metric": m, "mean_delta": self.mean_delta(e, m)}
            for e in self.effects()
            for m in MetricReport.NAMES
        ]
        return _csv(rows, ["effect", "metric", "mean_delta"])

    def raw_csv(self) -> str:
        fields = ["effect", "pair", *(f"delta_{m}" for m in MetricReport.NAMES)]
        return _csv(self.raw_rows, fields)

    def to_text(self) -> str:
        lines = [f"Per-effect mean error delta against target audio ({self.mode} predictor)"]
        header = f"{'effect':12s}" + "".join(f"{m:>12s}" for m in MetricReport.NAMES)
        lines.append(header)
        for e in self.effects():
            label = e + "*" if e == "phaser" else e
            lines.append(
                f"{label:12s}"
                + "".join(f"{self.mean_delta(e, m):12.4f}" for m in MetricReport.NAMES)
            )
        lines.append(f"* {self.note}")
        return "\n".join(lines) + "\n"


def evaluate_effect_models(
    registry: ModelRegistry,
    manifest: Manifest,
    pairs_by_effect: dict[str, list[PairExample]],
    oracle: bool = False,
) -> EffectEvalReport:
    """Mean metric delta from applying predicted (or true) parameters.

    Delta = metric(applied, target) - metric(current, target); negative
    means the prediction moved the clip closer.
    """
    by_id = {rec.clip_id: rec for rec in manifest.records}
    raw_rows = []
    for effect in EFFECT_IDS:
        pairs = pairs_by_effect.get(effect)
        if not pairs:
            continue
        if not oracle and effect not in registry.effect_models:
            raise ValueError(f"no model loaded for {effect}")
        for pair in pairs:
            current = by_id[pair.current_id].load_audio(manifest.root)
            target = by_id[pair.target_id].load_audio(manifest.root)
            if oracle:
                params = pair.params
            else:
                model = registry.effect_models[effect]
                params = model.predict(
                    normalize_for_model(mel_spectrogram(target)),
                    normalize_for_model(mel_spectrogram(current)),
                ).values
            applied = apply_effect(current, effect, params)
            base = compute_metrics(current, target)
            got = compute_metrics(applied, target)
            row = {"effect": effect, "pair": f"{pair.current_id}->{pair.target_id}"}
            for m in MetricReport.NAMES:
                row[f"delta_{m}"] = getattr(got, m) - getattr(base, m)
            raw_rows.append(row)
    return EffectEvalReport("oracle" if oracle else "trained", raw_rows)


# --- RNN evaluation (per-step accuracy table) --------------------------------------


@dataclass
class RnnEvalReport:
    raw_rows: list[dict]  # {"chain_id", "step", "label", "predicted", "correct"}

    def accuracy(self, step: int | None = None) -> float:
        rows = self.raw_rows if step is None else [r for r in self.raw_rows if r["step"] == step]
        if not rows:
            return float("nan")
        return float(np.mean([r["correct"] for r in rows]))

    def steps(self) -> list[int]:
        return sorted({r["step"] for r in self.raw_rows})

    def to_csv(self) -> str:
        rows = [
            {"step": str(s), "accuracy": self.accuracy(s), "n": sum(r["step"] == s for r in self.raw_rows)}
            for s in self.steps()
        ]
        rows.append({"step": "all", "accuracy": self.accuracy(), "n": len(self.raw_rows)})
        return _csv(rows, ["step", "accuracy", "n"])

    def raw_csv(self) -> str:
        return _csv(self.raw_rows, ["chain_id", "step", "label", "predicted", "correct"])

    def to_text(self) -> str:
        lines = ["Next-effect prediction accuracy by step", f"{'step':>6s}{'accuracy':>10s}{'n':>7s}"]
        for s in self.steps():
            n = sum(r["step"] == s for r in self.raw_rows)
            lines.append(f"{s:6d}{self.accuracy(s):10.3f}{n:7d}")
        lines.append(f"{'All':>6s}{self.accuracy():10.3f}{len(self.raw_rows):7d}")
        return "\n".join(lines) + "\n"


def evaluate_rnn(registry: ModelRegistry, sequences: list[SequenceExample], store) -> RnnEvalReport:
    """Raw next-effect accuracy per step index (prefix length + 1)."""
    from stepfx.models import stack_pair

    raw_rows = []
    for ex in sequences:
        steps = np.stack(
            [stack_pair(store.get(ex.target_features), store.get(s)) for s in ex.state_features]
        )[None].astype(np.float32)
        onehots = np.zeros((1, len(ex.state_features), len(EFFECT_IDS)), dtype=np.float32)
        for t, effect in enumerate(ex.used):
            onehots[0, t + 1, EFFECT_IDS.index(effect)] = 1.0
        probs = registry.rnn.forward(steps, onehots)
        predicted = EFFECT_IDS[int(probs[0].argmax())]
        raw_rows.append(
            {
                "chain_id": ex.chain_id,
                "step": len(ex.used) + 1,
                "label": ex.label,
                "predicted": predicted,
                "correct": int(predicted == ex.label),
            }
        )
    return RnnEvalReport(raw_rows)


# --- whole-system evaluation (Table-1-style) -----------------------------------------


@dataclass(frozen=True)
class EvalCase:
    """One evaluation pair: dry input vs the same preset with a hidden chain."""

    preset_id: str
    chain: EffectChain
    case_id: str


def make_eval_cases(group: str, n_cases: int, seed: int) -> list[EvalCase]:
    """Freshly sampled chains (disjoint seed stream from any training set)."""
    from stepfx.synth import list_presets

    presets = [p.id for p in list_presets(group)]
    cases = []
    for i in range(n_cases):
        chain = sample_chain(seed_from("eval-cases", seed), i)
        preset = presets[i % len(presets)]
        cases.append(EvalCase(preset, chain, f"{preset}__eval{i:04d}"))
    return cases


@dataclass
class SystemEvalReport:
    group: str
    session_rows: list[dict]  # per case: init/final metrics
    step_rows: list[dict]  # per case x executed step: deltas
    latency_s: dict = field(default_factory=dict)

    def mean_initial(self, metric: str) -> float:
        return float(np.mean([r[f"init_{metric}"] for r in self.session_rows]))

    def mean_final(self, metric: str) -> float:
        return float(np.mean([r[f"final_{metric}"] for r in self.session_rows]))

    def mean_delta(self, metric: str) -> float:
        return self.mean_final(metric) - self.mean_initial(metric)

    def step_delta(self, metric: str, step: int) -> float:
        vals = [r[f"delta_{metric}"] for r in self.step_rows if r["step"] == step]
        return float(np.mean(vals)) if vals else float("nan")

    def steps(self) -> list[int]:
        return sorted({r["step"] for r in self.step_rows})

    def to_csv(self) -> str:
        rows = []
        for m in MetricReport.NAMES:
            row = {
                "metric": m,
                "init": self.mean_initial(m),
                "final": self.mean_final(m),
                "delta": self.mean_delta(m),
            }
            for s in range(1, 6):
                row[f"step{s}_delta"] = self.step_delta(m, s)
            rows.append(row)
        return _csv(rows, ["metric", "init", "final", "delta", *(f"step{s}_delta" for s in range(1, 6))])

    def raw_csv(self) -> str:
        fields = ["case_id", "n_steps"]
        for m in MetricReport.NAMES:
            fields += [f"init_{m}", f"final_{m}"]
        return _csv(self.session_rows, fields)

    def raw_steps_csv(self) -> str:
        fields = ["case_id", "step", "effect", "marginal", *(f"delta_{m}" for m in MetricReport.NAMES)]
        return _csv(self.step_rows, fields)

    def to_text(self) -> str:
        lines = [
            f"System evaluation, {self.group} presets, {len(self.session_rows)} sessions",
            f"{'metric':>10s}{'init':>12s}{'final':>12s}{'delta':>12s}",
        ]
        for m in MetricReport.NAMES:
            lines.append(
                f"{m:>10s}{self.mean_initial(m):12.4f}{self.mean_final(m):12.4f}{self.mean_delta(m):12.4f}"
            )
        lines.append("")
        lines.append("Mean error delta per executed step (early halts leave later steps out)")
        lines.append(f"{'metric':>10s}" + "".join(f"{'step ' + str(s):>12s}" for s in range(1, 6)))
        for m in MetricReport.NAMES:
            cells = []
            for s in range(1, 6):
                v = self.step_delta(m, s)
                cells.append(f"{v:12.4f}" if np.isfinite(v) else f"{'-':>12s}")
            lines.append(f"{m:>10s}" + "".join(cells))
        if self.latency_s:
            lines.append("")
            lines.append(
                "Mean suggest+apply latency per step (wall clock, not part of the CSVs): "
                f"{self.latency_s['suggest_apply_per_step']*1e3:.0f} ms"
            )
        return "\n".join(lines) + "\n"


def evaluate_system(
    registry: ModelRegistry,
    cases: list[EvalCase],
    group: str,
    max_steps: int = 5,
    epsilon: float = 0.5,
) -> SystemEvalReport:
    """Run the full loop on each case and aggregate Table-1-style numbers."""
    if not cases:
        raise ValueError("no evaluation cases supplied")
    session_rows, step_rows = [], []
    apply_time, n_steps_total = 0.0, 0
    for case in cases:
        dry = render_standard(case.preset_id, seed_from("dry-eval", case.case_id))
        target = apply_chain(dry, case.chain.canonical())
        t0 = time.perf_counter()
        state, records = run_full(registry, dry, target, max_steps=max_steps, epsilon=epsilon)
        elapsed = time.perf_counter() - t0
        init = records[0].before if records else compute_metrics(dry, target)
        final = state.metrics()
        row = {"case_id": case.case_id, "n_steps": len(records)}
        for m in MetricReport.NAMES:
            row[f"init_{m}"] = getattr(init, m)
            row[f"final_{m}"] = getattr(final, m)
        session_rows.append(row)
        for rec in records:
            srow = {
                "case_id": case.case_id,
                "step": rec.index,
                "effect": rec.effect,
                "marginal": int(rec.marginal),
            }
            for m, d in rec.deltas.items():
                srow[f"delta_{m}"] = d
            step_rows.append(srow)
        n_steps_total += len(records)
        apply_time += elapsed
    latency = {"suggest_apply_per_step": apply_time / max(n_steps_total, 1)}
    return SystemEvalReport(group, session_rows, step_rows, latency)


# --- spectrogram progressions ---------------------------------------------------------


def render_progression(
    input_audio: AudioBuffer,
    target_audio: AudioBuffer,
    records: list[StepRecord],
    out_dir: str | Path,
) -> list[Path]:
    """One annotated PNG per panel (input, each step, target) plus a strip."""
    if records is None:
        raise ValueError("records must be a list (possibly empty)")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    panels: list[tuple[str, str, AudioBuffer]] = []
    init_metrics = records[0].before if records else compute_metrics(input_audio, target_audio)
    panels.append(("input", f"MAE vs target {init_metrics.mae:.3f}", input_audio))
    audio = input_audio
    for rec in records:
        audio = apply_effect(audio, rec.effect, rec.params)
        panels.append(
            (
                f"step{rec.index}_{rec.effect}",
                f"MAE {rec.before.mae:.3f}->{rec.after.mae:.3f}",
                audio,
            )
        )
    panels.append(("target", "", target_audio))

    paths = []
    images = []
    for i, (name, footer, buf) in enumerate(panels):
        png = spectrogram_png(mel_spectrogram(buf), title=name, footer=footer)
        path = out_dir / f"{i:02d}_{name}.png"
        path.write_bytes(png)
        paths.append(path)
        images.append(png)

    from PIL import Image
    import io

    imgs = [Image.open(io.BytesIO(b)).convert("RGB") for b in images]
    heights = max(im.height for im in imgs)
    total_w = sum(im.width for im in imgs) + 4 * (len(imgs) - 1)
    strip = Image.new("RGB", (total_w, heights), (0, 0, 0))
    x = 0
    for im in imgs:
        strip.paste(im, (x, 0))
        x += im.width + 4
    strip_path = out_dir / "progression.png"
    strip.save(strip_path, format="PNG")
    paths.append(strip_path)
    return paths
