"""Reduced-scale end-to-end pipeline run: generate -> train -> evaluate.

Development aid for timing and integration checking; the full-scale run
lives in tests/test_acceptance.py.
"""

import json
import sys
import time
from pathlib import Path

from stepfx.dataset import (
    Manifest,
    build_effect_pairs,
    build_rnn_sequences,
    generate_clips,
    load_examples,
    save_examples,
    split_dataset,
)
from stepfx.effects import EFFECT_IDS
from stepfx.engine import ModelRegistry
from stepfx.evaluate import evaluate_effect_models, evaluate_rnn, evaluate_system, make_eval_cases
from stepfx.models import TrainedModel, build_effect_cnn, build_rnn_model, save_model
from stepfx.training import FeatureStore, TrainConfig, train_effect_model, train_rnn


def main(workdir: str, chains: int = 40, cnn_epochs: int = 4, rnn_epochs: int = 4, cases: int = 6):
    workdir = Path(workdir)
    data_dir = workdir / "data"
    models_dir = workdir / "models"
    models_dir.mkdir(parents=True, exist_ok=True)
    t0 = time.time()

    if (data_dir / "manifest.jsonl").exists():
        manifest = Manifest.load(data_dir)
        print(f"[reuse] manifest with {len(manifest.records)} clips")
    else:
        manifest = generate_clips("basic", chains, seed=11, out_dir=data_dir)
        print(f"[{time.time() - t0:7.1f}s] generated {len(manifest.records)} clips")
    store = FeatureStore(manifest.root)

    registry_models = {}
    for effect in EFFECT_IDS:
        pairs = build_effect_pairs(manifest, effect, cap=20_000, seed=11)
        train, val, test = split_dataset(pairs, seed=11)
        cfg = TrainConfig(batch_size=128, max_epochs=cnn_epochs, patience=5, lr=1e-3, seed=11)
        trained = train_effect_model(build_effect_cnn(effect, seed=11), train, val, cfg, store)
        save_model(models_dir / f"{effect}.sfxw", trained)
        registry_models[effect] = trained.model
        last = trained.history[-1]
        print(
            f"[{time.time() - t0:7.1f}s] {effect}: {len(pairs)} pairs, "
            f"{len(trained.history)} epochs, train {last['train_total']:.4f} val {last.get('val_total', float('nan')):.4f}"
        )

    seq_path = data_dir / "sequences-greedy-improvement-11.jsonl"
    if seq_path.exists():
        sequences = load_examples(seq_path, "sequence")
        print(f"[reuse] {len(sequences)} sequences")
    else:
        sequences = build_rnn_sequences(manifest, seed=11)
        save_examples(seq_path, sequences)
        print(f"[{time.time() - t0:7.1f}s] built {len(sequences)} sequences")
    seq_train, seq_val, seq_test = split_dataset(sequences, seed=11)
    cfg = TrainConfig(batch_size=32, max_epochs=rnn_epochs, patience=4, lr=1e-3, seed=11)
    trained_rnn = train_rnn(build_rnn_model(seed=11), seq_train, seq_val, cfg, store)
    save_model(models_dir / "next_effect.sfxw", trained_rnn)
    last = trained_rnn.history[-1]
    print(
        f"[{time.time() - t0:7.1f}s] rnn: {len(trained_rnn.history)} epochs, "
        f"acc {last['train_acc']:.3f} val_acc {last.get('val_acc', float('nan')):.3f}"
    )

    registry = ModelRegistry(registry_models, trained_rnn.model)
    rnn_report = evaluate_rnn(registry, seq_test, store)
    print(f"[{time.time() - t0:7.1f}s] rnn held-out accuracy: all={rnn_report.accuracy():.3f}")

    pairs_by_effect = {}
    for effect in EFFECT_IDS:
        pairs = build_effect_pairs(manifest, effect, cap=20_000, seed=11)
        _, _, test = split_dataset(pairs, seed=11)
        pairs_by_effect[effect] = test[:10]
    oracle = evaluate_effect_models(registry, manifest, pairs_by_effect, oracle=True)
    trained_rep = evaluate_effect_models(registry, manifest, pairs_by_effect, oracle=False)
    for effect in trained_rep.effects():
        print(
            f"  {effect:11s} oracle dMAE {oracle.mean_delta(effect, 'mae'):8.3f}"
            f"  trained dMAE {trained_rep.mean_delta(effect, 'mae'):8.3f}"
        )

    eval_cases = make_eval_cases("basic", cases, seed=77)
    report = evaluate_system(registry, eval_cases, "basic")
    print(f"[{time.time() - t0:7.1f}s] system eval on {cases} cases:")
    print(report.to_text())


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "/tmp/stepfx-smoke")
