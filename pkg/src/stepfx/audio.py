"""Mono audio buffers and WAV I/O.

Everything downstream operates on 1-second, 44100 Hz, float32 mono
buffers; this module owns that contract.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.io import wavfile

SAMPLE_RATE = 44100
RENDER_SECONDS = 1.0
RENDER_SAMPLES = int(SAMPLE_RATE * RENDER_SECONDS)


@dataclass(frozen=True)
class AudioBuffer:
    """A mono float32 sample block at a fixed sample rate.

    Treated as immutable: operations return new buffers.
    """

    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        arr = np.asarray(self.samples, dtype=np.float32)
        if arr.ndim != 1:
            raise ValueError(f"audio must be mono 1-D, got shape {arr.shape}")
        if arr.size and not np.all(np.isfinite(arr)):
            raise ValueError("audio contains non-finite samples")
        object.__setattr__(self, "samples", arr)

    def __len__(self) -> int:
        return int(self.samples.shape[0])

    @property
    def duration_s(self) -> float:
        return len(self) / self.sample_rate

    def peak(self) -> float:
        return float(np.max(np.abs(self.samples))) if len(self) else 0.0

    def copy(self) -> "AudioBuffer":
        return AudioBuffer(self.samples.copy(), self.sample_rate)


def write_wav(buf: AudioBuffer, path: str | Path, bit_depth: str = "float32") -> None:
    """Write a buffer as mono WAV; `bit_depth` is "float32" or "pcm16"."""
    if bit_depth == "float32":
        data = buf.samples
    elif bit_depth == "pcm16":
        clipped = np.clip(buf.samples, -1.0, 1.0)
        data = (clipped * 32767.0).astype(np.int16)
    else:
        raise ValueError(f"unsupported bit depth {bit_depth!r}")
    wavfile.write(str(path), buf.sample_rate, data)


def wav_bytes(buf: AudioBuffer, bit_depth: str = "float32") -> bytes:
    """Serialize a buffer to in-memory WAV bytes."""
    bio = io.BytesIO()
    if bit_depth == "float32":
        wavfile.write(bio, buf.sample_rate, buf.samples)
    elif bit_depth == "pcm16":
        clipped = np.clip(buf.samples, -1.0, 1.0)
        wavfile.write(bio, buf.sample_rate, (clipped * 32767.0).astype(np.int16))
    else:
        raise ValueError(f"unsupported bit depth {bit_depth!r}")
    return bio.getvalue()


def read_wav(path_or_bytes: str | Path | bytes) -> AudioBuffer:
    """Read a WAV file (float32 or integer PCM) into a mono AudioBuffer."""
    src = io.BytesIO(path_or_bytes) if isinstance(path_or_bytes, bytes) else str(path_or_bytes)
    rate, data = wavfile.read(src)
    if data.ndim == 2:
        data = data.mean(axis=1)
    if data.dtype == np.int16:
        data = data.astype(np.float32) / 32768.0
    elif data.dtype == np.int32:
        data = data.astype(np.float32) / 2147483648.0
    elif data.dtype == np.uint8:
        data = (data.astype(np.float32) - 128.0) / 128.0
    else:
        data = data.astype(np.float32)
    return AudioBuffer(data, int(rate))
