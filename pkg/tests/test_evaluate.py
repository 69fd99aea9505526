"""Evaluation harness: tables, CSV reproducibility, progression rendering."""

import numpy as np
import pytest

from stepfx.dataset import build_effect_pairs, build_rnn_sequences, generate_clips
from stepfx.effects import EFFECT_IDS
from stepfx.engine import ModelRegistry, run_full
from stepfx.evaluate import (
    EvalCase,
    evaluate_effect_models,
    evaluate_rnn,
    evaluate_system,
    make_eval_cases,
    render_progression,
)
from stepfx.features import MetricReport
from stepfx.synth import render_standard
from stepfx.training import FeatureStore


@pytest.fixture(scope="module")
def setup(tmp_path_factory):
    out = tmp_path_factory.mktemp("evaldata")
    manifest = generate_clips("basic", n_chains=8, seed=31, out_dir=out, presets=("saw", "square"))
    registry = ModelRegistry.untrained(seed=0)
    store = FeatureStore(manifest.root)
    return manifest, registry, store


class TestEffectEval:
    def test_oracle_deltas_non_positive(self, setup):
        manifest, registry, _ = setup
        pairs_by_effect = {}
        for effect in EFFECT_IDS:
            try:
                pairs_by_effect[effect] = build_effect_pairs(manifest, effect)[:3]
            except ValueError:
                pass
        report = evaluate_effect_models(registry, manifest, pairs_by_effect, oracle=True)
        assert report.raw_rows
        for effect in report.effects():
            for metric in MetricReport.NAMES:
                assert report.mean_delta(effect, metric) <= 1e-12, (effect, metric)

    def test_untrained_worse_than_oracle(self, setup):
        manifest, registry, _ = setup
        effect = next(e for e in EFFECT_IDS if _present(manifest, e))
        pairs = {effect: build_effect_pairs(manifest, effect)[:3]}
        oracle = evaluate_effect_models(registry, manifest, pairs, oracle=True)
        trained = evaluate_effect_models(registry, manifest, pairs, oracle=False)
        assert trained.mean_delta(effect, "mae") > oracle.mean_delta(effect, "mae")

    def test_report_carries_phaser_caveat(self, setup):
        manifest, registry, _ = setup
        effect = next(e for e in EFFECT_IDS if _present(manifest, e))
        pairs = {effect: build_effect_pairs(manifest, effect)[:2]}
        report = evaluate_effect_models(registry, manifest, pairs, oracle=True)
        assert "phase" in report.to_text()

    def test_csv_cells_recompute_from_raw(self, setup):
        manifest, registry, _ = setup
        effect = next(e for e in EFFECT_IDS if _present(manifest, e))
        pairs = {effect: build_effect_pairs(manifest, effect)[:3]}
        report = evaluate_effect_models(registry, manifest, pairs, oracle=True)
        raw_lines = report.raw_csv().strip().split("\n")[1:]
        mae_idx = report.raw_csv().split("\n")[0].split(",").index("delta_mae")
        mean_from_raw = np.mean([float(l.split(",")[mae_idx]) for l in raw_lines])
        assert report.mean_delta(effect, "mae") == pytest.approx(mean_from_raw, abs=1e-12)


def _present(manifest, effect):
    return any(effect in r.chain.effects for r in manifest.records)


class TestRnnEval:
    def test_table_and_pooled_row(self, setup):
        manifest, registry, store = setup
        seqs = build_rnn_sequences(manifest, seed=0)
        report = evaluate_rnn(registry, seqs, store)
        assert len(report.raw_rows) == len(seqs)
        # pooled accuracy equals the count-weighted mean of the step rows
        weighted = sum(
            report.accuracy(s) * sum(r["step"] == s for r in report.raw_rows)
            for s in report.steps()
        ) / len(report.raw_rows)
        assert report.accuracy() == pytest.approx(weighted, abs=1e-12)

    def test_csv_layout(self, setup):
        manifest, registry, store = setup
        seqs = build_rnn_sequences(manifest, seed=0)
        report = evaluate_rnn(registry, seqs, store)
        lines = report.to_csv().strip().split("\n")
        assert lines[0] == "step,accuracy,n"
        assert lines[-1].startswith("all,")


class TestSystemEval:
    def test_eval_cases_deterministic(self):
        a = make_eval_cases("basic", 6, seed=3)
        b = make_eval_cases("basic", 6, seed=3)
        assert a == b
        assert len({c.case_id for c in a}) == 6

    def test_report_layout_and_reproducibility(self, setup):
        _, registry, _ = setup
        cases = make_eval_cases("basic", 3, seed=5)
        r1 = evaluate_system(registry, cases, "basic", max_steps=3)
        r2 = evaluate_system(registry, cases, "basic", max_steps=3)
        assert r1.to_csv() == r2.to_csv()
        assert r1.raw_csv() == r2.raw_csv()
        assert r1.raw_steps_csv() == r2.raw_steps_csv()
        header = r1.to_csv().split("\n")[0].split(",")
        assert header == ["metric", "init", "final", "delta", "step1_delta", "step2_delta", "step3_delta", "step4_delta", "step5_delta"]
        assert len(r1.to_csv().strip().split("\n")) == 5  # header + 4 metrics

    def test_aggregates_recompute_from_raw(self, setup):
        _, registry, _ = setup
        cases = make_eval_cases("basic", 3, seed=6)
        report = evaluate_system(registry, cases, "basic", max_steps=2)
        init_mae = np.mean([row["init_mae"] for row in report.session_rows])
        assert report.mean_initial("mae") == pytest.approx(init_mae, abs=1e-12)
        assert report.mean_delta("mae") == pytest.approx(
            report.mean_final("mae") - report.mean_initial("mae"), abs=1e-12
        )

    def test_empty_cases_rejected(self, setup):
        _, registry, _ = setup
        with pytest.raises(ValueError):
            evaluate_system(registry, [], "basic")


class TestProgression:
    def test_panel_count_and_determinism(self, setup, tmp_path):
        _, registry, _ = setup
        saw = render_standard("saw")
        target = render_standard("square")
        state, records = run_full(registry, saw, target, max_steps=3)
        out1 = tmp_path / "a"
        out2 = tmp_path / "b"
        paths1 = render_progression(saw, target, records, out1)
        paths2 = render_progression(saw, target, records, out2)
        # input + steps + target panels plus the composite strip
        assert len(paths1) == len(records) + 3
        assert paths1[-1].name == "progression.png"
        for p1, p2 in zip(paths1, paths2):
            assert p1.read_bytes() == p2.read_bytes()

    def test_silence_input_floors(self, setup, tmp_path):
        from stepfx.audio import AudioBuffer

        silence = AudioBuffer(np.zeros(44100, dtype=np.float32))
        paths = render_progression(silence, render_standard("sine"), [], tmp_path)
        assert len(paths) == 3
