"""Local HTTP/JSON session service consumed by the companion UI.

Endpoints (JSON unless noted):

- ``POST /sessions``                     create from preset+chain specs, WAV
                                         uploads (base64), or challenge mode
- ``GET  /sessions/{sid}``               full state (+hidden chain once finished)
- ``GET  /sessions/{sid}/suggest``       next effect + predicted params
- ``POST /sessions/{sid}/steps``         apply a (possibly tweaked) step
- ``DELETE /sessions/{sid}/steps/last``  undo
- ``POST /sessions/{sid}/finish``        end the session, revealing a challenge
- ``GET  /sessions/{sid}/audio/{which}`` WAV: input|target|current|0..k
- ``GET  /sessions/{sid}/spectrogram/{which}``  PNG panels, same indexing
- ``GET  /schemas``, ``GET /presets``    machine-readable descriptions

Errors: 400 invalid parameters (message names the field), 404 unknown
session, 409 effect reuse / empty undo / busy session.

Sessions live in memory; with ``persist_dir`` set they are also written to
disk after every mutation and restored on startup, bit-identically (audio
is replayed from the stored history).
"""

from __future__ import annotations

import base64
import json
import threading
import uuid
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException, Response
from pydantic import BaseModel

from stepfx.audio import AudioBuffer, read_wav, wav_bytes
from stepfx.dataset import sample_chain
from stepfx.effects import EFFECT_IDS, ParameterError, ParameterVector, apply_chain, schema_json
from stepfx.engine import (
    ExhaustedError,
    ModelRegistry,
    SessionState,
    apply_step,
    suggest_step,
    undo_step,
)
from stepfx.features import compute_metrics, mel_spectrogram, spectrogram_png
from stepfx.synth import list_presets, render_standard
from stepfx.util import seed_from


@dataclass
class ServiceConfig:
    models_dir: str | None = None
    seed: int = 0
    persist_dir: str | None = None
    queue_mutations: bool = False  # False: concurrent mutation -> 409 busy


@dataclass
class SessionEntry:
    state: SessionState
    challenge_chain: list | None = None
    finished: bool = False
    lock: threading.Lock = field(default_factory=threading.Lock)


class ClipSpec(BaseModel):
    preset: str | None = None
    chain: list | None = None
    wav_b64: str | None = None
    seed: int = 0


class CreateSession(BaseModel):
    input: ClipSpec
    target: ClipSpec | None = None
    challenge: dict | None = None


class StepBody(BaseModel):
    effect: str
    params: dict


def _load_clip(spec: ClipSpec) -> AudioBuffer:
    if spec.wav_b64 is not None:
        try:
            return read_wav(base64.b64decode(spec.wav_b64))
        except Exception as exc:
            raise HTTPException(400, f"invalid wav upload: {exc}") from exc
    if spec.preset is None:
        raise HTTPException(400, "clip spec needs either 'preset' or 'wav_b64'")
    try:
        audio = render_standard(spec.preset, spec.seed)
    except KeyError as exc:
        raise HTTPException(400, str(exc)) from exc
    if spec.chain:
        try:
            chain = _chain_from_json(spec.chain)
            audio = apply_chain(audio, chain)
        except ParameterError as exc:
            raise HTTPException(400, str(exc)) from exc
    return audio


def _chain_from_json(items: list):
    from stepfx.effects import EffectChain

    steps = []
    for item in items:
        steps.append(ParameterVector(item["effect"], item.get("params", item.get("values", {}))))
    return EffectChain(tuple(steps))


def create_app(config: ServiceConfig | None = None, registry: ModelRegistry | None = None) -> FastAPI:
    config = config or ServiceConfig()
    if registry is None:
        if config.models_dir:
            registry = ModelRegistry.load(config.models_dir)
        else:
            registry = ModelRegistry.untrained(config.seed)
    app = FastAPI(title="stepfx session service")
    sessions: dict[str, SessionEntry] = {}
    persist_dir = Path(config.persist_dir) if config.persist_dir else None

    # --- persistence -------------------------------------------------------

    def _persist(sid: str) -> None:
        if persist_dir is None:
            return
        entry = sessions[sid]
        sdir = persist_dir / sid
        sdir.mkdir(parents=True, exist_ok=True)
        (sdir / "input.wav").write_bytes(wav_bytes(entry.state.input_audio))
        (sdir / "target.wav").write_bytes(wav_bytes(entry.state.target_audio))
        payload = {
            "history": [r.to_dict() for r in entry.state.history],
            "challenge_chain": entry.challenge_chain,
            "finished": entry.finished,
        }
        (sdir / "session.json").write_text(json.dumps(payload, sort_keys=True))

    def _restore_all() -> None:
        if persist_dir is None or not persist_dir.exists():
            return
        from stepfx.engine import StepRecord

        for sdir in sorted(persist_dir.iterdir()):
            if not (sdir / "session.json").exists():
                continue
            payload = json.loads((sdir / "session.json").read_text())
            state = SessionState.start(
                read_wav(sdir / "input.wav"), read_wav(sdir / "target.wav")
            )
            for rec_dict in payload["history"]:
                rec = StepRecord.from_dict(rec_dict)
                state, _ = apply_step(
                    registry, state, rec.effect, rec.params, tuple(rec.probabilities)
                )
            sessions[sdir.name] = SessionEntry(
                state, payload.get("challenge_chain"), payload.get("finished", False)
            )

    _restore_all()

    # --- helpers ------------------------------------------------------------

    def _entry(sid: str) -> SessionEntry:
        entry = sessions.get(sid)
        if entry is None:
            raise HTTPException(404, f"unknown session {sid}")
        return entry

    def _mutation_lock(entry: SessionEntry):
        if config.queue_mutations:
            entry.lock.acquire()
            return True
        if not entry.lock.acquire(blocking=False):
            raise HTTPException(409, "session busy with another mutation")
        return True

    def _state_json(sid: str, entry: SessionEntry) -> dict:
        state = entry.state
        payload = {
            "id": sid,
            "steps": [r.to_dict() for r in state.history],
            "used_effects": list(state.used_effects),
            "unused_effects": list(state.unused_effects),
            "metrics": state.metrics().to_dict(),
            "initial_metrics": (
                state.history[0].before.to_dict()
                if state.history
                else state.metrics().to_dict()
            ),
            "finished": entry.finished,
            "challenge": entry.challenge_chain is not None,
        }
        if entry.finished and entry.challenge_chain is not None:
            payload["true_chain"] = entry.challenge_chain
        return payload

    def _resolve_audio(entry: SessionEntry, which: str) -> AudioBuffer:
        state = entry.state
        if which == "input":
            return state.input_audio
        if which == "target":
            return state.target_audio
        if which == "current":
            return state.current_audio
        try:
            k = int(which)
        except ValueError:
            raise HTTPException(400, f"unknown audio selector {which!r}") from None
        audios = state.state_audios()
        if not (0 <= k < len(audios)):
            raise HTTPException(404, f"no state {k}; session has {len(audios) - 1} steps")
        return audios[k]

    # --- routes ---------------------------------------------------------------

    @app.get("/schemas")
    def get_schemas():
        return Response(schema_json(), media_type="application/json")

    @app.get("/presets")
    def get_presets():
        return {
            "presets": [
                {
                    "id": p.id,
                    "group": p.group,
                    "oscillators": [
                        {"shape": o.shape, "detune_cents": o.detune_cents, "level": o.level}
                        for o in p.oscillators
                    ],
                    "modulated": p.modulation is not None,
                }
                for p in list_presets()
            ]
        }

    @app.post("/sessions", status_code=201)
    def create_session(body: CreateSession):
        input_audio = _load_clip(body.input)
        challenge_chain = None
        if body.challenge is not None:
            preset = body.challenge.get("preset") or body.input.preset
            if preset is None:
                raise HTTPException(400, "challenge mode needs a preset")
            seed = int(body.challenge.get("seed", config.seed))
            chain = sample_chain(seed_from("challenge", seed), 0)
            n_effects = body.challenge.get("n_effects")
            if n_effects is not None:
                for offset in range(1000):
                    chain = sample_chain(seed_from("challenge", seed), offset)
                    if len(chain) == int(n_effects):
                        break
                else:
                    raise HTTPException(400, f"could not draw a chain of length {n_effects}")
            target_audio = apply_chain(render_standard(preset, body.input.seed), chain)
            challenge_chain = chain.to_list()
        elif body.target is not None:
            target_audio = _load_clip(body.target)
        else:
            raise HTTPException(400, "session needs a 'target' or 'challenge'")
        if len(target_audio) != len(input_audio):
            raise HTTPException(400, "input and target lengths differ")
        sid = uuid.uuid4().hex[:12]
        state = SessionState.start(input_audio, target_audio)
        sessions[sid] = SessionEntry(state, challenge_chain)
        _persist(sid)
        metrics = state.metrics().to_dict()
        return {
            "id": sid,
            "initial_metrics": metrics,
            "spectrograms": {
                "input": f"/sessions/{sid}/spectrogram/input",
                "target": f"/sessions/{sid}/spectrogram/target",
                "current": f"/sessions/{sid}/spectrogram/current",
            },
            "challenge": challenge_chain is not None,
        }

    @app.get("/sessions/{sid}")
    def get_session(sid: str):
        return _state_json(sid, _entry(sid))

    @app.get("/sessions/{sid}/suggest")
    def get_suggestion(sid: str):
        entry = _entry(sid)
        try:
            effect, params, probs = suggest_step(registry, entry.state)
        except ExhaustedError as exc:
            raise HTTPException(409, str(exc)) from exc
        return {
            "effect": effect,
            "params": dict(params.values),
            "probabilities": {e: p for e, p in zip(EFFECT_IDS, probs)},
        }

    @app.post("/sessions/{sid}/steps", status_code=201)
    def post_step(sid: str, body: StepBody):
        entry = _entry(sid)
        _mutation_lock(entry)
        try:
            if body.effect in entry.state.used_effects:
                raise HTTPException(409, f"effect {body.effect!r} already used")
            try:
                new_state, record = apply_step(registry, entry.state, body.effect, body.params)
            except ParameterError as exc:
                raise HTTPException(400, str(exc)) from exc
            entry.state = new_state
            _persist(sid)
            return record.to_dict()
        finally:
            entry.lock.release()

    @app.delete("/sessions/{sid}/steps/last")
    def delete_last_step(sid: str):
        entry = _entry(sid)
        _mutation_lock(entry)
        try:
            if not entry.state.history:
                raise HTTPException(409, "history is empty")
            entry.state = undo_step(entry.state)
            _persist(sid)
            return _state_json(sid, entry)
        finally:
            entry.lock.release()

    @app.post("/sessions/{sid}/finish")
    def finish_session(sid: str):
        entry = _entry(sid)
        entry.finished = True
        _persist(sid)
        return _state_json(sid, entry)

    @app.get("/sessions/{sid}/audio/{which}")
    def get_audio(sid: str, which: str):
        audio = _resolve_audio(_entry(sid), which)
        return Response(wav_bytes(audio), media_type="audio/wav")

    @app.get("/sessions/{sid}/spectrogram/{which}")
    def get_spectrogram(sid: str, which: str):
        audio = _resolve_audio(_entry(sid), which)
        png = spectrogram_png(mel_spectrogram(audio), title=which)
        return Response(png, media_type="image/png")

    return app


def serve(config: ServiceConfig, host: str = "127.0.0.1", port: int = 8765):
    """Run the service under uvicorn (blocking)."""
    import uvicorn

    app = create_app(config)
    uvicorn.run(app, host=host, port=port, log_level="warning")
