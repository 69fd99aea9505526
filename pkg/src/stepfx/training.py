"""Training loops for the effect CNNs and the next-effect RNN.

Early stopping watches the validation total loss with a configurable
patience and restores the best-epoch weights. Everything is seeded: batch
shuffles, dropout masks and weight init derive from the config seed, so a
rerun reproduces the history byte for byte.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from stepfx.dataset import PairExample, SequenceExample, read_feature
from stepfx.features import normalize_for_model
from stepfx.models import (
    EffectModel,
    NextEffectModel,
    TrainedModel,
    dataset_fingerprint,
    encode_labels,
    head_specs,
    stack_pair,
)
from stepfx.nn import Adam, TrainingError
from stepfx.nn.losses import LOSSES
from stepfx.effects import EFFECT_IDS
from stepfx.util import rng_from


@dataclass
class TrainConfig:
    batch_size: int = 128
    max_epochs: int = 100
    patience: int = 10
    lr: float = 0.001
    seed: int = 0
    # optional goal-based stops used by the overfit sanity runs
    stop_train_mse: float | None = None
    stop_train_acc: float | None = None

    def __post_init__(self):
        if self.batch_size < 1 or self.max_epochs < 1 or self.lr <= 0:
            raise ValueError("batch_size, max_epochs and lr must be positive")


RNN_BATCH_SIZE = 32


class FeatureStore:
    """Loads .sfxf features, normalized to [0, 1], cached by path."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self._cache: dict[str, np.ndarray] = {}

    def get(self, rel_path: str) -> np.ndarray:
        hit = self._cache.get(rel_path)
        if hit is None:
            hit = normalize_for_model(read_feature(self.root / rel_path))
            self._cache[rel_path] = hit
        return hit


def _snapshot(model) -> dict:
    return {name: layer.params[pname].copy() for name, layer, pname in model.named_parameters()}


def _restore(model, snapshot: dict) -> None:
    for name, layer, pname in model.named_parameters():
        layer.params[pname] = snapshot[name].copy()


# --- effect CNN -----------------------------------------------------------------


def _pair_batch(pairs, encoded, idxs, store, effect):
    x = np.stack(
        [stack_pair(store.get(pairs[i].target_features), store.get(pairs[i].current_features)) for i in idxs]
    )
    targets = {}
    for spec in head_specs(effect):
        if spec.kind == "categorical":
            onehot = np.zeros((len(idxs), spec.out_dim), dtype=np.float32)
            for row, i in enumerate(idxs):
                onehot[row, encoded[i][spec.name]] = 1.0
            targets[spec.name] = onehot
        else:
            targets[spec.name] = np.array(
                [[encoded[i][spec.name]] for i in idxs], dtype=np.float32
            )
    return x, targets


def _head_losses(effect, outputs, targets):
    total = 0.0
    mse_sum, mse_n = 0.0, 0
    grads = {}
    for spec in head_specs(effect):
        loss, grad = LOSSES[spec.loss](outputs[spec.name], targets[spec.name])
        total += loss
        grads[spec.name] = grad
        if spec.loss == "mse":
            mse_sum += loss
            mse_n += 1
    return total, (mse_sum / mse_n if mse_n else 0.0), grads


def _eval_effect(model: EffectModel, pairs, encoded, store, batch_size):
    if not pairs:
        return None, None
    total, mse_total, n_batches = 0.0, 0.0, 0
    for start in range(0, len(pairs), batch_size):
        idxs = range(start, min(start + batch_size, len(pairs)))
        x, targets = _pair_batch(pairs, encoded, list(idxs), store, model.effect)
        outputs = model.forward_heads(x, train=False)
        t, m, _ = _head_losses(model.effect, outputs, targets)
        total += t
        mse_total += m
        n_batches += 1
    return total / n_batches, mse_total / n_batches


def train_effect_model(
    model: EffectModel,
    train_pairs: list[PairExample],
    val_pairs: list[PairExample] | None,
    cfg: TrainConfig,
    store: FeatureStore,
) -> TrainedModel:
    effect = model.effect
    encoded_train = [encode_labels(effect, p.params) for p in train_pairs]
    encoded_val = [encode_labels(effect, p.params) for p in (val_pairs or [])]
    opt = Adam(lr=cfg.lr)
    history: list[dict] = []
    best_val = np.inf
    best_weights = None
    best_epoch = -1
    since_best = 0

    for epoch in range(cfg.max_epochs):
        order = rng_from("fx-shuffle", cfg.seed, epoch).permutation(len(train_pairs))
        epoch_total, epoch_mse, seen = 0.0, 0.0, 0
        for b, start in enumerate(range(0, len(order), cfg.batch_size)):
            idxs = order[start : start + cfg.batch_size].tolist()
            x, targets = _pair_batch(train_pairs, encoded_train, idxs, store, effect)
            model.zero_grad()
            outputs = model.forward_heads(x, train=True, rng=rng_from("fx-drop", cfg.seed, epoch, b))
            total, mse, grads = _head_losses(effect, outputs, targets)
            if not np.isfinite(total):
                raise TrainingError(f"{effect} loss diverged at epoch {epoch} batch {b}")
            model.backward_heads(grads)
            opt.step(list(model.named_parameters()))
            epoch_total += total * len(idxs)
            epoch_mse += mse * len(idxs)
            seen += len(idxs)

        row = {
            "epoch": epoch,
            "train_total": epoch_total / seen,
            "train_mse": epoch_mse / seen,
        }
        val_total, val_mse = _eval_effect(model, val_pairs or [], encoded_val, store, cfg.batch_size)
        if val_total is not None:
            row["val_total"] = val_total
            row["val_mse"] = val_mse
        history.append(row)

        if val_total is not None:
            if val_total < best_val:
                best_val, best_epoch, since_best = val_total, epoch, 0
                best_weights = _snapshot(model)
            else:
                since_best += 1
                if since_best >= cfg.patience:
                    break
        if cfg.stop_train_mse is not None and row["train_mse"] < cfg.stop_train_mse:
            break

    if best_weights is not None:
        _restore(model, best_weights)
    meta = {
        "seed": cfg.seed,
        "lr": cfg.lr,
        "batch_size": cfg.batch_size,
        "best_epoch": best_epoch if best_weights is not None else len(history) - 1,
        "data_fingerprint": dataset_fingerprint(train_pairs),
        "n_train": len(train_pairs),
        "n_val": len(val_pairs or []),
    }
    return TrainedModel("effect_cnn", effect, model, history, meta)


# --- next-effect RNN ---------------------------------------------------------------


def _sequence_batch(seqs: list[SequenceExample], idxs, store):
    batch = [seqs[i] for i in idxs]
    t_len = len(batch[0].state_features)
    steps = np.stack(
        [
            np.stack([stack_pair(store.get(ex.target_features), store.get(s)) for s in ex.state_features])
            for ex in batch
        ]
    )
    onehots = np.zeros((len(batch), t_len, len(EFFECT_IDS)), dtype=np.float32)
    labels = np.zeros((len(batch), len(EFFECT_IDS)), dtype=np.float32)
    for row, ex in enumerate(batch):
        for t, effect in enumerate(ex.used):
            onehots[row, t + 1, EFFECT_IDS.index(effect)] = 1.0
        labels[row, EFFECT_IDS.index(ex.label)] = 1.0
    return steps, onehots, labels


def _length_batches(seqs, batch_size, rng=None):
    buckets: dict[int, list[int]] = {}
    for i, ex in enumerate(seqs):
        buckets.setdefault(len(ex.state_features), []).append(i)
    batches = []
    for length in sorted(buckets):
        idxs = buckets[length]
        if rng is not None:
            idxs = [idxs[j] for j in rng.permutation(len(idxs))]
        for start in range(0, len(idxs), batch_size):
            batches.append(idxs[start : start + batch_size])
    if rng is not None:
        batches = [batches[j] for j in rng.permutation(len(batches))]
    return batches


def _eval_rnn(model: NextEffectModel, seqs, store, batch_size):
    if not seqs:
        return None, None
    loss_sum, correct, seen = 0.0, 0, 0
    for idxs in _length_batches(seqs, batch_size):
        steps, onehots, labels = _sequence_batch(seqs, idxs, store)
        probs = model.forward(steps, onehots, train=False)
        loss, _ = LOSSES["cce"](probs, labels)
        loss_sum += loss * len(idxs)
        correct += int((probs.argmax(axis=1) == labels.argmax(axis=1)).sum())
        seen += len(idxs)
    return loss_sum / seen, correct / seen


def train_rnn(
    model: NextEffectModel,
    train_seqs: list[SequenceExample],
    val_seqs: list[SequenceExample] | None,
    cfg: TrainConfig,
    store: FeatureStore,
) -> TrainedModel:
    opt = Adam(lr=cfg.lr)
    history: list[dict] = []
    best_val = np.inf
    best_weights = None
    best_epoch = -1
    since_best = 0

    for epoch in range(cfg.max_epochs):
        rng = rng_from("rnn-shuffle", cfg.seed, epoch)
        loss_sum, correct, seen = 0.0, 0, 0
        for b, idxs in enumerate(_length_batches(train_seqs, cfg.batch_size, rng)):
            steps, onehots, labels = _sequence_batch(train_seqs, idxs, store)
            model.zero_grad()
            probs = model.forward(steps, onehots, train=True, rng=rng_from("rnn-drop", cfg.seed, epoch, b))
            loss, dprobs = LOSSES["cce"](probs, labels)
            if not np.isfinite(loss):
                raise TrainingError(f"rnn loss diverged at epoch {epoch} batch {b}")
            model.backward(dprobs)
            opt.step(list(model.named_parameters()))
            loss_sum += loss * len(idxs)
            correct += int((probs.argmax(axis=1) == labels.argmax(axis=1)).sum())
            seen += len(idxs)

        row = {
            "epoch": epoch,
            "train_loss": loss_sum / seen,
            "train_acc": correct / seen,
        }
        val_loss, val_acc = _eval_rnn(model, val_seqs or [], store, cfg.batch_size)
        if val_loss is not None:
            row["val_loss"] = val_loss
            row["val_acc"] = val_acc
        history.append(row)

        if val_loss is not None:
            if val_loss < best_val:
                best_val, best_epoch, since_best = val_loss, epoch, 0
                best_weights = _snapshot(model)
            else:
                since_best += 1
                if since_best >= cfg.patience:
                    break
        if cfg.stop_train_acc is not None and row["train_acc"] >= cfg.stop_train_acc:
            break

    if best_weights is not None:
        _restore(model, best_weights)
    meta = {
        "seed": cfg.seed,
        "lr": cfg.lr,
        "batch_size": cfg.batch_size,
        "best_epoch": best_epoch if best_weights is not None else len(history) - 1,
        "data_fingerprint": dataset_fingerprint(train_seqs),
        "n_train": len(train_seqs),
        "n_val": len(val_seqs or []),
    }
    return TrainedModel("next_rnn", None, model, history, meta)


def history_csv(history: list[dict]) -> str:
    """Per-epoch history as CSV text."""
    if not history:
        return ""
    fields = list(history[0].keys())
    lines = [",".join(fields)]
    for row in history:
        lines.append(",".join(format(row.get(f, ""), ".9g") if isinstance(row.get(f), float) else str(row.get(f, "")) for f in fields))
    return "\n".join(lines) + "\n"
