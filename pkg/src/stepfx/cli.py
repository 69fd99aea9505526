"""The ``stepfx`` command line.

Subcommands: gen-data, train-effect, train-rnn, eval-effects, eval-rnn,
eval-system, run, render-fig, serve. Global flags --seed, --config (JSON
file whose keys provide option defaults), --data-dir, --models-dir.

Exit codes: 0 success, 2 validation problem, 3 missing artifact.
"""

from __future__ import annotations

import functools
import json
import sys
from pathlib import Path

import click

from stepfx.effects import EFFECT_IDS, ParameterError

EXIT_VALIDATION = 2
EXIT_MISSING = 3

CONFIG_KEYS = (
    "seed",
    "data_dir",
    "models_dir",
    "chains",
    "group",
    "epochs",
    "batch_size",
    "patience",
    "lr",
    "pair_cap",
    "policy",
    "cases",
    "host",
    "port",
)


def _fail(code: int, message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def handle_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        from stepfx.engine import MissingModelError
        from stepfx.models import ModelMismatchError
        from stepfx.nn import CorruptModelError

        try:
            return fn(*args, **kwargs)
        except (ParameterError, ValueError) as exc:
            _fail(EXIT_VALIDATION, str(exc))
        except (FileNotFoundError, MissingModelError, ModelMismatchError, CorruptModelError) as exc:
            _fail(EXIT_MISSING, str(exc))

    return wrapper


class ConfigDefaults(click.Group):
    """Lets --config supply defaults for any subcommand option."""

    def invoke(self, ctx):
        config_path = ctx.params.get("config")
        if config_path:
            with open(config_path) as fh:
                loaded = json.load(fh)
            bad = set(loaded) - set(CONFIG_KEYS)
            if bad:
                _fail(EXIT_VALIDATION, f"unknown config keys: {sorted(bad)}")
            ctx.default_map = {cmd.name: loaded for cmd in self.commands.values()}
            for cmd in self.commands.values():
                ctx.default_map[cmd.name] = {
                    k.replace("data_dir", "data").replace("models_dir", "models"): v
                    for k, v in loaded.items()
                }
        return super().invoke(ctx)


@click.group(cls=ConfigDefaults)
@click.option("--config", type=click.Path(exists=True), default=None, help="JSON config file")
def main(config):
    """White-box, step-by-step audio effect matching."""


_data_opt = click.option("--data", "data_dir", type=click.Path(), required=True, help="dataset directory")
_models_opt = click.option("--models", "models_dir", type=click.Path(), required=True, help="model directory")
_seed_opt = click.option("--seed", type=int, default=0, show_default=True)


@main.command("gen-data")
@click.option("--group", type=click.Choice(["basic", "advanced", "advanced_mod"]), default="basic", show_default=True)
@click.option("--chains", type=int, default=500, show_default=True)
@_seed_opt
@click.option("--out", "out_dir", type=click.Path(), required=True)
@handle_errors
def gen_data(group, chains, seed, out_dir):
    """Render labeled clips for every prefix of sampled effect chains."""
    from stepfx.dataset import generate_clips

    manifest = generate_clips(group, chains, seed, out_dir)
    click.echo(f"wrote {len(manifest.records)} clips to {out_dir}")


def _train_common(fn):
    for opt in (
        click.option("--epochs", type=int, default=100, show_default=True),
        click.option("--batch-size", type=int, default=None, help="default: 128 CNN / 32 RNN"),
        click.option("--patience", type=int, default=10, show_default=True),
        click.option("--lr", type=float, default=0.001, show_default=True),
        _seed_opt,
        _models_opt,
        _data_opt,
    ):
        fn = opt(fn)
    return fn


@main.command("train-effect")
@click.option("--effect", type=click.Choice(list(EFFECT_IDS) + ["all"]), default="all", show_default=True)
@click.option("--pair-cap", type=int, default=20_000, show_default=True)
@_train_common
@handle_errors
def train_effect(effect, pair_cap, data_dir, models_dir, seed, lr, patience, batch_size, epochs):
    """Train per-effect parameter predictors from a generated dataset."""
    from stepfx.dataset import Manifest, build_effect_pairs, split_dataset
    from stepfx.models import TrainedModel, build_effect_cnn, save_model
    from stepfx.training import FeatureStore, TrainConfig, history_csv, train_effect_model

    manifest = Manifest.load(data_dir)
    store = FeatureStore(manifest.root)
    models_dir = Path(models_dir)
    models_dir.mkdir(parents=True, exist_ok=True)
    cfg = TrainConfig(batch_size=batch_size or 128, max_epochs=epochs, patience=patience, lr=lr, seed=seed)
    effects = list(EFFECT_IDS) if effect == "all" else [effect]
    for eff in effects:
        pairs = build_effect_pairs(manifest, eff, cap=pair_cap, seed=seed)
        train, val, test = split_dataset(pairs, seed=seed)
        model = build_effect_cnn(eff, seed=seed)
        trained = train_effect_model(model, train, val, cfg, store)
        trained.meta["n_test"] = len(test)
        path = models_dir / f"{eff}.sfxw"
        save_model(path, trained)
        (models_dir / f"{eff}_history.csv").write_text(history_csv(trained.history))
        (models_dir / f"{eff}_summary.json").write_text(
            json.dumps({"effect": eff, "meta": trained.meta, "epochs": len(trained.history)}, indent=2, sort_keys=True)
        )
        click.echo(
            f"{eff}: {len(trained.history)} epochs, best {trained.meta['best_epoch']}, saved {path}"
        )


@main.command("train-rnn")
@click.option("--policy", type=click.Choice(["greedy-improvement", "random-permutation"]), default="greedy-improvement", show_default=True)
@_train_common
@handle_errors
def train_rnn_cmd(policy, data_dir, models_dir, seed, lr, patience, batch_size, epochs):
    """Train the next-effect model on policy-ordered chain walks."""
    from stepfx.dataset import Manifest, build_rnn_sequences, load_examples, save_examples, split_dataset
    from stepfx.models import TrainedModel, build_rnn_model, save_model
    from stepfx.training import FeatureStore, TrainConfig, history_csv, train_rnn

    manifest = Manifest.load(data_dir)
    store = FeatureStore(manifest.root)
    seq_path = Path(data_dir) / f"sequences-{policy}-{seed}.jsonl"
    if seq_path.exists():
        sequences = load_examples(seq_path, "sequence")
    else:
        sequences = build_rnn_sequences(manifest, policy=policy, seed=seed)
        save_examples(seq_path, sequences)
    train, val, test = split_dataset(sequences, seed=seed)
    cfg = TrainConfig(batch_size=batch_size or 32, max_epochs=epochs, patience=patience, lr=lr, seed=seed)
    model = build_rnn_model(seed=seed)
    trained = train_rnn(model, train, val, cfg, store)
    trained.meta["n_test"] = len(test)
    trained.meta["policy"] = policy
    models_dir = Path(models_dir)
    models_dir.mkdir(parents=True, exist_ok=True)
    path = models_dir / "next_effect.sfxw"
    save_model(path, trained)
    (models_dir / "next_effect_history.csv").write_text(history_csv(trained.history))
    (models_dir / "next_effect_summary.json").write_text(
        json.dumps({"meta": trained.meta, "epochs": len(trained.history)}, indent=2, sort_keys=True)
    )
    click.echo(f"rnn: {len(trained.history)} epochs, best {trained.meta['best_epoch']}, saved {path}")


@main.command("eval-effects")
@click.option("--oracle", is_flag=True, help="use true labels instead of model predictions")
@click.option("--pair-cap", type=int, default=200, show_default=True, help="held-out pairs per effect")
@click.option("--out", "out_dir", type=click.Path(), required=True)
@_seed_opt
@_models_opt
@_data_opt
@handle_errors
def eval_effects(oracle, pair_cap, out_dir, seed, models_dir, data_dir):
    """Per-effect mean error-reduction table from held-out pairs."""
    from stepfx.dataset import Manifest, build_effect_pairs, split_dataset
    from stepfx.engine import ModelRegistry
    from stepfx.evaluate import evaluate_effect_models

    manifest = Manifest.load(data_dir)
    registry = ModelRegistry.load(models_dir) if not oracle else ModelRegistry.untrained(seed)
    pairs_by_effect = {}
    for effect in EFFECT_IDS:
        try:
            pairs = build_effect_pairs(manifest, effect, cap=20_000, seed=seed)
        except ValueError:
            continue
        _, _, test = split_dataset(pairs, seed=seed)
        pairs_by_effect[effect] = test[:pair_cap]
    report = evaluate_effect_models(registry, manifest, pairs_by_effect, oracle=oracle)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "effects_table.csv").write_text(report.to_csv())
    (out / "effects_raw.csv").write_text(report.raw_csv())
    (out / "effects_report.txt").write_text(report.to_text())
    click.echo(report.to_text())


@main.command("eval-rnn")
@click.option("--policy", default="greedy-improvement", show_default=True)
@click.option("--out", "out_dir", type=click.Path(), required=True)
@_seed_opt
@_models_opt
@_data_opt
@handle_errors
def eval_rnn_cmd(policy, out_dir, seed, models_dir, data_dir):
    """Held-out next-effect accuracy per step plus the pooled row."""
    from stepfx.dataset import Manifest, build_rnn_sequences, load_examples, save_examples, split_dataset
    from stepfx.engine import ModelRegistry
    from stepfx.evaluate import evaluate_rnn
    from stepfx.training import FeatureStore

    manifest = Manifest.load(data_dir)
    registry = ModelRegistry.load(models_dir)
    seq_path = Path(data_dir) / f"sequences-{policy}-{seed}.jsonl"
    if seq_path.exists():
        sequences = load_examples(seq_path, "sequence")
    else:
        sequences = build_rnn_sequences(manifest, policy=policy, seed=seed)
        save_examples(seq_path, sequences)
    _, _, test = split_dataset(sequences, seed=seed)
    report = evaluate_rnn(registry, test, FeatureStore(manifest.root))
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "rnn_table.csv").write_text(report.to_csv())
    (out / "rnn_raw.csv").write_text(report.raw_csv())
    (out / "rnn_report.txt").write_text(report.to_text())
    click.echo(report.to_text())


@main.command("eval-system")
@click.option("--group", type=click.Choice(["basic", "advanced", "advanced_mod"]), default="basic", show_default=True)
@click.option("--cases", type=int, default=40, show_default=True)
@click.option("--max-steps", type=int, default=5, show_default=True)
@click.option("--epsilon", type=float, default=0.5, show_default=True, help="MAE improvement floor (dB)")
@click.option("--out", "out_dir", type=click.Path(), required=True)
@_seed_opt
@_models_opt
@handle_errors
def eval_system(group, cases, max_steps, epsilon, out_dir, seed, models_dir):
    """End-to-end evaluation: initial/final errors and per-step deltas."""
    from stepfx.engine import ModelRegistry
    from stepfx.evaluate import evaluate_system, make_eval_cases

    registry = ModelRegistry.load(models_dir)
    eval_cases = make_eval_cases(group, cases, seed)
    report = evaluate_system(registry, eval_cases, group, max_steps=max_steps, epsilon=epsilon)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "system_table.csv").write_text(report.to_csv())
    (out / "system_sessions.csv").write_text(report.raw_csv())
    (out / "system_steps.csv").write_text(report.raw_steps_csv())
    (out / "system_report.txt").write_text(report.to_text())
    click.echo(report.to_text())


def _clip_from_arg(arg: str, seed: int, chain_json: str | None = None):
    from stepfx.audio import read_wav
    from stepfx.effects import apply_chain
    from stepfx.service import _chain_from_json
    from stepfx.synth import render_standard

    if arg.endswith(".wav"):
        if not Path(arg).exists():
            raise FileNotFoundError(f"no such wav file {arg}")
        return read_wav(arg)
    audio = render_standard(arg, seed)
    if chain_json:
        payload = json.loads(Path(chain_json).read_text() if Path(chain_json).exists() else chain_json)
        audio = apply_chain(audio, _chain_from_json(payload))
    return audio


@main.command("run")
@click.option("--input", "input_arg", required=True, help="wav path or preset id")
@click.option("--target", "target_arg", required=True, help="wav path or preset id")
@click.option("--target-chain", default=None, help="JSON chain (file or inline) applied to a preset target")
@click.option("--max-steps", type=int, default=5, show_default=True)
@click.option("--epsilon", type=float, default=0.5, show_default=True)
@click.option("--out", "out_dir", type=click.Path(), required=True)
@_seed_opt
@_models_opt
@handle_errors
def run_cmd(input_arg, target_arg, target_chain, max_steps, epsilon, out_dir, seed, models_dir):
    """One-shot inference: suggest and apply steps, write records and figures."""
    from stepfx.audio import write_wav
    from stepfx.engine import ModelRegistry, plan_text, run_full
    from stepfx.evaluate import render_progression

    registry = ModelRegistry.load(models_dir)
    input_audio = _clip_from_arg(input_arg, seed)
    target_audio = _clip_from_arg(target_arg, seed + 1 if target_arg == input_arg else seed, target_chain)
    state, records = run_full(registry, input_audio, target_audio, max_steps=max_steps, epsilon=epsilon)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "records.json").write_text(
        json.dumps([r.to_dict() for r in records], indent=2, sort_keys=True)
    )
    (out / "plan.txt").write_text(plan_text(records))
    write_wav(state.input_audio, out / "input.wav")
    write_wav(state.target_audio, out / "target.wav")
    write_wav(state.current_audio, out / "final.wav")
    for k, audio in enumerate(state.state_audios()[1:], start=1):
        write_wav(audio, out / f"step{k}.wav")
    render_progression(input_audio, target_audio, records, out / "figures")
    click.echo(plan_text(records))


@main.command("render-fig")
@click.option("--records", "records_path", type=click.Path(exists=True), required=True)
@click.option("--input", "input_wav", type=click.Path(exists=True), required=True)
@click.option("--target", "target_wav", type=click.Path(exists=True), required=True)
@click.option("--out", "out_dir", type=click.Path(), required=True)
@handle_errors
def render_fig(records_path, input_wav, target_wav, out_dir):
    """Spectrogram progression PNGs from saved step records."""
    from stepfx.audio import read_wav
    from stepfx.engine import StepRecord
    from stepfx.evaluate import render_progression

    records = [StepRecord.from_dict(d) for d in json.loads(Path(records_path).read_text())]
    paths = render_progression(read_wav(input_wav), read_wav(target_wav), records, out_dir)
    click.echo(f"wrote {len(paths)} images to {out_dir}")


@main.command("serve")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8765, show_default=True)
@click.option("--models", "models_dir", type=click.Path(), default=None, help="omit for untrained demo models")
@click.option("--persist-dir", type=click.Path(), default=None)
@_seed_opt
@handle_errors
def serve_cmd(host, port, models_dir, persist_dir, seed):
    """Run the local HTTP session service."""
    from stepfx.service import ServiceConfig, serve

    if models_dir is None:
        click.echo("no --models given: serving randomly initialized demo models", err=True)
    serve(ServiceConfig(models_dir=models_dir, seed=seed, persist_dir=persist_dir), host=host, port=port)


if __name__ == "__main__":
    main()
