"""Labeled clip generation, CNN pair building, RNN sequence building.

Layout produced by `generate_clips`:

    out_dir/
      manifest.jsonl      one header line, then one ClipRecord per line
      audio/<clip_id>.wav
      features/<clip_id>.sfxf

Chains are duplicate-free subsets of the five effects, sampled uniformly
over the 31 non-empty subsets and applied in canonical rack order. Every
prefix state of a chain is stored as its own clip, and the dry render is
shared per preset, so consecutive prefixes provide exactly-reproducible
(current, target) training pairs.

Feature files (.sfxf) are raw little-endian float32 matrices:
magic ``SFXF`` | u8 version (1) | u8 dtype (1 = float32) | u8 ndim |
u8 zero pad | ndim x u32-LE dims | row-major payload.
"""

from __future__ import annotations

import itertools
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from stepfx.audio import AudioBuffer, read_wav, write_wav
from stepfx.effects import EFFECT_IDS, EffectChain, ParameterVector, apply_chain, apply_effect
from stepfx.effects.schema import sample_parameters
from stepfx.features import compute_metrics, mel_spectrogram
from stepfx.synth import list_presets, render_standard
from stepfx.util import rng_from, seed_from

MANIFEST_NAME = "manifest.jsonl"
FEATURE_MAGIC = b"SFXF"

# All non-empty subsets of the rack, in a fixed order (singletons first).
ALL_CHAIN_SUBSETS: tuple[tuple[str, ...], ...] = tuple(
    subset
    for size in range(1, len(EFFECT_IDS) + 1)
    for subset in itertools.combinations(EFFECT_IDS, size)
)


# --- feature file format ------------------------------------------------------


def write_feature(path: str | Path, matrix: np.ndarray) -> None:
    matrix = np.ascontiguousarray(matrix, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(FEATURE_MAGIC)
        fh.write(struct.pack("<BBBB", 1, 1, matrix.ndim, 0))
        fh.write(struct.pack(f"<{matrix.ndim}I", *matrix.shape))
        fh.write(matrix.tobytes())


def read_feature(path: str | Path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != FEATURE_MAGIC:
            raise ValueError(f"{path}: not a feature file (magic {magic!r})")
        version, dtype_code, ndim, _ = struct.unpack("<BBBB", fh.read(4))
        if version != 1 or dtype_code != 1:
            raise ValueError(f"{path}: unsupported feature file version/dtype")
        shape = struct.unpack(f"<{ndim}I", fh.read(4 * ndim))
        data = np.frombuffer(fh.read(), dtype="<f4")
    return data.reshape(shape)


# --- clip records and manifests -------------------------------------------------


@dataclass(frozen=True)
class ClipRecord:
    clip_id: str
    preset_id: str
    group: str
    chain: EffectChain
    audio_path: str
    feature_path: str
    render_seed: int

    def to_dict(self) -> dict:
        return {
            "clip_id": self.clip_id,
            "preset_id": self.preset_id,
            "group": self.group,
            "chain": self.chain.to_list(),
            "audio_path": self.audio_path,
            "feature_path": self.feature_path,
            "render_seed": self.render_seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ClipRecord":
        return cls(
            d["clip_id"],
            d["preset_id"],
            d["group"],
            EffectChain.from_list(d["chain"]),
            d["audio_path"],
            d["feature_path"],
            d["render_seed"],
        )

    def chain_key(self) -> str:
        """Exact signature of the applied chain (params included)."""
        return json.dumps(self.chain.to_list(), sort_keys=True)

    def load_audio(self, root: str | Path) -> AudioBuffer:
        return read_wav(Path(root) / self.audio_path)

    def load_features(self, root: str | Path) -> np.ndarray:
        return read_feature(Path(root) / self.feature_path)

    def rerender(self) -> AudioBuffer:
        """Recompute the stored audio from (preset, chain, seed)."""
        return apply_chain(render_standard(self.preset_id, self.render_seed), self.chain)


@dataclass(frozen=True)
class Manifest:
    root: str
    group: str
    seed: int
    n_chains: int
    records: tuple[ClipRecord, ...]

    def save(self) -> Path:
        path = Path(self.root) / MANIFEST_NAME
        with open(path, "w") as fh:
            header = {
                "kind": "stepfx-manifest",
                "version": 1,
                "group": self.group,
                "seed": self.seed,
                "n_chains": self.n_chains,
            }
            fh.write(json.dumps(header, sort_keys=True) + "\n")
            for rec in self.records:
                fh.write(json.dumps(rec.to_dict(), sort_keys=True) + "\n")
        return path

    @classmethod
    def load(cls, root: str | Path) -> "Manifest":
        root = Path(root)
        with open(root / MANIFEST_NAME) as fh:
            header = json.loads(fh.readline())
            if header.get("kind") != "stepfx-manifest":
                raise ValueError(f"{root}: not a manifest directory")
            records = tuple(ClipRecord.from_dict(json.loads(line)) for line in fh)
        return cls(str(root), header["group"], header["seed"], header["n_chains"], records)


def _chain_for(seed: int, index: int) -> EffectChain:
    rng = rng_from("chain-subset", seed, index)
    subset = ALL_CHAIN_SUBSETS[int(rng.integers(len(ALL_CHAIN_SUBSETS)))]
    steps = tuple(
        ParameterVector(effect, sample_parameters(effect, seed_from("chain-params", seed, index, effect)))
        for effect in subset  # already in canonical order within each combination
    )
    return EffectChain(steps)


def sample_chain(seed: int, index: int) -> EffectChain:
    """The chain (subset + parameters) drawn for a given master seed and index."""
    return _chain_for(seed, index)


def generate_clips(
    group: str,
    n_chains: int,
    seed: int,
    out_dir: str | Path,
    presets: tuple[str, ...] | None = None,
) -> Manifest:
    """Render every prefix state of `n_chains` sampled chains per preset.

    Deterministic for a fixed (group, n_chains, seed): two runs write
    identical manifests and bit-identical audio/features.
    """
    if n_chains < 1:
        raise ValueError("n_chains must be >= 1")
    out_dir = Path(out_dir)
    (out_dir / "audio").mkdir(parents=True, exist_ok=True)
    (out_dir / "features").mkdir(parents=True, exist_ok=True)

    preset_ids = presets or tuple(p.id for p in list_presets(group))
    chains = [_chain_for(seed, i) for i in range(n_chains)]

    records: list[ClipRecord] = []

    def _store(clip_id: str, preset_id: str, chain: EffectChain, audio: AudioBuffer, render_seed: int):
        audio_rel = f"audio/{clip_id}.wav"
        feat_rel = f"features/{clip_id}.sfxf"
        write_wav(audio, out_dir / audio_rel)
        write_feature(out_dir / feat_rel, mel_spectrogram(audio))
        rec = ClipRecord(clip_id, preset_id, group, chain, audio_rel, feat_rel, render_seed)
        records.append(rec)
        return rec

    for preset_id in preset_ids:
        dry_seed = seed_from("dry", seed, preset_id)
        dry = render_standard(preset_id, dry_seed)
        _store(f"{preset_id}__dry", preset_id, EffectChain(), dry, dry_seed)
        for i, chain in enumerate(chains):
            audio = dry
            for j, step in enumerate(chain.steps):
                audio = apply_effect(audio, step.effect, step)
                prefix = EffectChain(chain.steps[: j + 1])
                _store(f"{preset_id}__ch{i:05d}__p{j + 1}", preset_id, prefix, audio, dry_seed)

    manifest = Manifest(str(out_dir), group, seed, n_chains, tuple(records))
    manifest.save()
    return manifest


# --- CNN training pairs ---------------------------------------------------------


@dataclass(frozen=True)
class PairExample:
    """(current, target) clips whose chains differ by exactly one effect.

    `params` are the normalized knob values the CNN must recover; applying
    them to the current clip's audio reproduces the target clip exactly.
    """

    effect: str
    current_id: str
    target_id: str
    current_features: str
    target_features: str
    params: dict
    chain_id: str  # split grouping key: the target chain's identity

    def to_dict(self) -> dict:
        return {
            "effect": self.effect,
            "current_id": self.current_id,
            "target_id": self.target_id,
            "current_features": self.current_features,
            "target_features": self.target_features,
            "params": self.params,
            "chain_id": self.chain_id,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PairExample":
        return cls(
            d["effect"],
            d["current_id"],
            d["target_id"],
            d["current_features"],
            d["target_features"],
            d["params"],
            d["chain_id"],
        )


def build_effect_pairs(
    manifest: Manifest, effect: str, cap: int = 20_000, seed: int = 0
) -> list[PairExample]:
    """Cartesian (current x target) pairs for one effect.

    Targets are clips whose canonical chain ends with `effect`; currents are
    clips carrying exactly the target's chain minus that final step. Clips
    with identical (preset, chain) signatures are interchangeable, so the
    pairing is the Cartesian product within each signature group, uniformly
    subsampled to `cap`.
    """
    if effect not in EFFECT_IDS:
        raise ValueError(f"unknown effect {effect!r}")
    by_signature: dict[tuple[str, str], list[ClipRecord]] = {}
    for rec in manifest.records:
        by_signature.setdefault((rec.preset_id, rec.chain_key()), []).append(rec)

    pairs: list[PairExample] = []
    for rec in manifest.records:
        if len(rec.chain) == 0 or rec.chain.steps[-1].effect != effect:
            continue
        prefix = EffectChain(rec.chain.steps[:-1])
        prefix_key = json.dumps(prefix.to_list(), sort_keys=True)
        currents = by_signature.get((rec.preset_id, prefix_key), [])
        for cur in currents:
            pairs.append(
                PairExample(
                    effect=effect,
                    current_id=cur.clip_id,
                    target_id=rec.clip_id,
                    current_features=cur.feature_path,
                    target_features=rec.feature_path,
                    params=dict(rec.chain.steps[-1].values),
                    chain_id=f"{rec.preset_id}:{rec.chain_key()}",
                )
            )
    if not pairs:
        raise ValueError(f"effect {effect!r} absent from every chain in the manifest")
    if len(pairs) > cap:
        rng = rng_from("pair-cap", seed, effect)
        keep = sorted(rng.choice(len(pairs), size=cap, replace=False).tolist())
        pairs = [pairs[i] for i in keep]
    return pairs


# --- RNN sequence examples ------------------------------------------------------


@dataclass(frozen=True)
class SequenceExample:
    """A prefix of a policy-ordered chain walk plus the next-effect label.

    `state_features[t]` is the Mel matrix after applying the first t ordered
    effects (state 0 is the dry clip); `used` lists those applied effects,
    one per state after the first.
    """

    chain_id: str
    preset_id: str
    target_features: str
    state_features: tuple[str, ...]
    used: tuple[str, ...]
    label: str
    order: tuple[str, ...]
    params: tuple[dict, ...]  # chain parameters in policy order

    def to_dict(self) -> dict:
        return {
            "chain_id": self.chain_id,
            "preset_id": self.preset_id,
            "target_features": self.target_features,
            "state_features": list(self.state_features),
            "used": list(self.used),
            "label": self.label,
            "order": list(self.order),
            "params": list(self.params),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SequenceExample":
        return cls(
            d["chain_id"],
            d["preset_id"],
            d["target_features"],
            tuple(d["state_features"]),
            tuple(d["used"]),
            d["label"],
            tuple(d["order"]),
            tuple(d["params"]),
        )


ORDERING_POLICIES = ("greedy-improvement", "random-permutation")


def _policy_order(
    policy: str,
    chain: EffectChain,
    dry: AudioBuffer,
    target: AudioBuffer,
    seed: int,
    chain_index: int,
) -> list[ParameterVector]:
    steps = list(chain.steps)
    if policy == "random-permutation":
        rng = rng_from("seq-order", seed, chain_index)
        return [steps[i] for i in rng.permutation(len(steps))]
    if policy != "greedy-improvement":
        raise ValueError(f"unknown ordering policy {policy!r}")
    base_mae = compute_metrics(dry, target).mae
    reductions = []
    for idx, step in enumerate(steps):
        solo = apply_effect(dry, step.effect, step)
        reductions.append((base_mae - compute_metrics(solo, target).mae, -idx))
    order = sorted(range(len(steps)), key=lambda i: reductions[i], reverse=True)
    return [steps[i] for i in order]


def solo_mae_reductions(chain: EffectChain, dry: AudioBuffer, target: AudioBuffer) -> dict:
    """Single-effect MAE reduction toward the target, per chain effect."""
    base = compute_metrics(dry, target).mae
    return {
        step.effect: base - compute_metrics(apply_effect(dry, step.effect, step), target).mae
        for step in chain.steps
    }


def build_rnn_sequences(
    manifest: Manifest,
    policy: str = "greedy-improvement",
    seed: int = 0,
    out_dir: str | Path | None = None,
) -> list[SequenceExample]:
    """Prefix examples for every chain, ordered by the given policy.

    Intermediate states follow the policy order (not the canonical rack
    order), so they are rendered here and their features stored under
    `out_dir` (defaults to the manifest root) in a `sequences/` folder.
    """
    if policy not in ORDERING_POLICIES:
        raise ValueError(f"unknown ordering policy {policy!r}")
    root = Path(out_dir) if out_dir is not None else Path(manifest.root)
    seq_dir = root / "sequences"
    seq_dir.mkdir(parents=True, exist_ok=True)

    # group records: dry + full chain target per (preset, chain index)
    by_id = {rec.clip_id: rec for rec in manifest.records}
    examples: list[SequenceExample] = []

    chain_groups: dict[tuple[str, str], list[ClipRecord]] = {}
    for rec in manifest.records:
        if len(rec.chain) == 0:
            continue
        cid = rec.clip_id.rsplit("__p", 1)[0]
        chain_groups.setdefault((rec.preset_id, cid), []).append(rec)

    for (preset_id, cid), recs in sorted(chain_groups.items()):
        full = max(recs, key=lambda r: len(r.chain))
        dry_rec = by_id[f"{preset_id}__dry"]
        dry = dry_rec.load_audio(manifest.root)
        target = full.load_audio(manifest.root)
        chain_index = int(cid.rsplit("ch", 1)[-1]) if "ch" in cid else 0
        ordered = _policy_order(policy, full.chain, dry, target, seed, chain_index)

        state_paths = [dry_rec.feature_path]
        state = dry
        for t, step in enumerate(ordered[:-1]):
            state = apply_effect(state, step.effect, step)
            rel = f"sequences/{cid}__s{t + 1}.sfxf"
            write_feature(root / rel, mel_spectrogram(state))
            state_paths.append(rel)

        chain_id = f"{preset_id}:{cid}"
        order_effects = tuple(s.effect for s in ordered)
        order_params = tuple(dict(s.values) for s in ordered)
        for t in range(len(ordered)):
            examples.append(
                SequenceExample(
                    chain_id=chain_id,
                    preset_id=preset_id,
                    target_features=full.feature_path,
                    state_features=tuple(state_paths[: t + 1]),
                    used=order_effects[:t],
                    label=order_effects[t],
                    order=order_effects,
                    params=order_params,
                )
            )
    return examples


# --- dataset splitting and persistence -------------------------------------------


def split_dataset(items: list, val_frac: float = 0.10, test_frac: float = 0.05, seed: int = 0):
    """Chain-level, seed-deterministic (train, val, test) partition."""
    if val_frac + test_frac >= 1.0:
        raise ValueError("fractions must sum below 1")
    if len(items) < 20:
        raise ValueError(f"dataset too small to split ({len(items)} examples)")
    by_chain: dict[str, list] = {}
    for item in items:
        by_chain.setdefault(item.chain_id, []).append(item)
    chain_ids = sorted(by_chain)
    rng = rng_from("split", seed)
    rng.shuffle(chain_ids)

    n = len(items)
    want_test = test_frac * n
    want_val = val_frac * n
    test, val, train = [], [], []
    for cid in chain_ids:
        bucket = by_chain[cid]
        if len(test) < want_test:
            test.extend(bucket)
        elif len(val) < want_val:
            val.extend(bucket)
        else:
            train.extend(bucket)
    return train, val, test


def save_examples(path: str | Path, examples: list) -> None:
    """JSONL persistence for pair/sequence example lists."""
    with open(path, "w") as fh:
        for ex in examples:
            fh.write(json.dumps(ex.to_dict(), sort_keys=True) + "\n")


def load_examples(path: str | Path, kind: str) -> list:
    cls = {"pair": PairExample, "sequence": SequenceExample}[kind]
    with open(path) as fh:
        return [cls.from_dict(json.loads(line)) for line in fh]
