"""Spectral features and the four audio-similarity metrics.

Conventions (documented here, tested bit-exactly):

- STFT: 4096-point FFT, hop 512, periodic Hann window of the full FFT
  length, centered frames over reflect padding. 1 s of audio gives 87
  frames.
- Mel: 128 HTK-scale triangular filters spanning 0-22050 Hz, each
  peak-normalized to 1. Power is converted as 10*log10(max(p, 1e-10)),
  referenced to the clip maximum (max = 0 dB) and floor-clamped at -80 dB.
  All-silent clips return the floor everywhere.
- MFCC: orthonormal DCT-II along the Mel axis, first 20 coefficients.
- Metrics: MSE and MAE elementwise on the Mel dB matrices; mfcc_dist is
  the per-frame mean Euclidean distance between coefficient columns; LSD
  is the per-frame RMS difference of the un-referenced power spectra in dB,
  averaged over frames.
"""

from __future__ import annotations

import functools
import io
from dataclasses import dataclass

import numpy as np
from scipy.fft import dct

from stepfx.audio import SAMPLE_RATE, AudioBuffer

N_FFT = 4096
HOP = 512
N_MELS = 128
N_MFCC = 20
FLOOR_DB = -80.0
POWER_FLOOR = 1e-10
FMAX = SAMPLE_RATE / 2


@dataclass(frozen=True)
class MetricReport:
    """The four similarity metrics; all non-negative, 0 iff identical."""

    mse: float
    mae: float
    mfcc_dist: float
    lsd: float

    def to_dict(self) -> dict:
        return {"mse": self.mse, "mae": self.mae, "mfcc_dist": self.mfcc_dist, "lsd": self.lsd}

    @classmethod
    def from_dict(cls, d: dict) -> "MetricReport":
        return cls(d["mse"], d["mae"], d["mfcc_dist"], d["lsd"])

    NAMES = ("mse", "mae", "mfcc_dist", "lsd")


@functools.lru_cache(maxsize=1)
def _hann() -> np.ndarray:
    n = np.arange(N_FFT, dtype=np.float64)
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * n / N_FFT)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


@functools.lru_cache(maxsize=1)
def mel_filterbank() -> np.ndarray:
    """(128, 2049) triangular filters, peak-normalized per filter."""
    fft_freqs = np.fft.rfftfreq(N_FFT, 1.0 / SAMPLE_RATE)
    mel_points = np.linspace(0.0, float(hz_to_mel(FMAX)), N_MELS + 2)
    hz_points = mel_to_hz(mel_points)
    fb = np.zeros((N_MELS, fft_freqs.shape[0]), dtype=np.float64)
    for i in range(N_MELS):
        left, center, right = hz_points[i], hz_points[i + 1], hz_points[i + 2]
        up = (fft_freqs - left) / (center - left)
        down = (right - fft_freqs) / (right - center)
        tri = np.maximum(0.0, np.minimum(up, down))
        peak = tri.max()
        fb[i] = tri / peak if peak > 0 else tri
    return fb


@functools.lru_cache(maxsize=1)
def mel_center_freqs() -> np.ndarray:
    mel_points = np.linspace(0.0, float(hz_to_mel(FMAX)), N_MELS + 2)
    return mel_to_hz(mel_points)[1:-1]


def _frame_count(n_samples: int) -> int:
    return 1 + n_samples // HOP


def stft_power(audio: AudioBuffer) -> np.ndarray:
    """Centered power spectrogram, shape (2049, frames)."""
    x = audio.samples.astype(np.float64)
    if x.size == 0:
        raise ValueError("empty audio")
    pad = N_FFT // 2
    padded = np.pad(x, pad, mode="reflect")
    frames = _frame_count(x.shape[0])
    starts = np.arange(frames) * HOP
    windows = padded[starts[:, None] + np.arange(N_FFT)] * _hann()
    spec = np.fft.rfft(windows, axis=1)
    return (spec.real**2 + spec.imag**2).T


def power_db(audio: AudioBuffer) -> np.ndarray:
    """Un-referenced dB power spectrogram (LSD substrate)."""
    return 10.0 * np.log10(np.maximum(stft_power(audio), POWER_FLOOR))


def mel_spectrogram(audio: AudioBuffer) -> np.ndarray:
    """Max-referenced, floor-clamped Mel dB matrix, shape (128, frames), float32."""
    power = stft_power(audio)
    mel_power = mel_filterbank() @ power
    ref = mel_power.max()
    if ref <= POWER_FLOOR:
        return np.full((N_MELS, power.shape[1]), FLOOR_DB, dtype=np.float32)
    db = 10.0 * np.log10(np.maximum(mel_power, POWER_FLOOR) / ref)
    return np.maximum(db, FLOOR_DB).astype(np.float32)


def mfcc(spec_db: np.ndarray, n: int = N_MFCC) -> np.ndarray:
    """First `n` orthonormal DCT-II coefficients along the Mel axis."""
    spec_db = np.asarray(spec_db)
    if n > spec_db.shape[0]:
        raise ValueError(f"cannot keep {n} coefficients from {spec_db.shape[0]} bands")
    return dct(spec_db.astype(np.float64), type=2, axis=0, norm="ortho")[:n]


def normalize_for_model(spec_db: np.ndarray) -> np.ndarray:
    """Affine [-80, 0] -> [0, 1] map applied to model inputs."""
    return ((np.asarray(spec_db, dtype=np.float32) - FLOOR_DB) / -FLOOR_DB).astype(np.float32)


def denormalize_spec(unit: np.ndarray) -> np.ndarray:
    """Inverse of `normalize_for_model`."""
    return (np.asarray(unit, dtype=np.float32) * -FLOOR_DB + FLOOR_DB).astype(np.float32)


def compute_metrics(a: AudioBuffer, b: AudioBuffer) -> MetricReport:
    """All four similarity metrics between two equal-length clips."""
    if len(a) != len(b) or a.sample_rate != b.sample_rate:
        raise ValueError("buffers must share length and sample rate")
    mel_a = mel_spectrogram(a).astype(np.float64)
    mel_b = mel_spectrogram(b).astype(np.float64)
    diff = mel_a - mel_b
    mse = float(np.mean(diff * diff))
    mae = float(np.mean(np.abs(diff)))

    ca = mfcc(mel_a)
    cb = mfcc(mel_b)
    mfcc_dist = float(np.mean(np.sqrt(np.sum((ca - cb) ** 2, axis=0))))

    pa = power_db(a)
    pb = power_db(b)
    lsd = float(np.mean(np.sqrt(np.mean((pa - pb) ** 2, axis=0))))
    return MetricReport(mse, mae, mfcc_dist, lsd)


def metrics_csv(rows: list[dict], extra_fields: tuple[str, ...] = ()) -> str:
    """Render MetricReport dicts (plus optional leading fields) as CSV text."""
    fields = tuple(extra_fields) + MetricReport.NAMES
    lines = [",".join(fields)]
    for row in rows:
        lines.append(",".join(_csv_num(row[f]) for f in fields))
    return "\n".join(lines) + "\n"


def _csv_num(v) -> str:
    if isinstance(v, float):
        return repr(v)  # shortest round-trip, keeps CSVs exactly auditable
    return str(v)


# --- spectrogram images -------------------------------------------------------


@functools.lru_cache(maxsize=1)
def _viridis_lut() -> np.ndarray:
    from matplotlib import colormaps

    return (np.asarray(colormaps["viridis"](np.linspace(0, 1, 256)))[:, :3] * 255).astype(np.uint8)


def spectrogram_image(spec_db: np.ndarray, scale: int = 3):
    """Render a Mel dB matrix to a PIL image (frequency up, time right)."""
    from PIL import Image

    unit = np.clip((np.asarray(spec_db, dtype=np.float64) - FLOOR_DB) / -FLOOR_DB, 0.0, 1.0)
    idx = (unit * 255).astype(np.uint8)[::-1, :]  # flip so low bands sit at the bottom
    rgb = _viridis_lut()[idx]
    img = Image.fromarray(rgb, "RGB")
    return img.resize((img.width * scale, img.height * scale), resample=Image.NEAREST)


def spectrogram_png(spec_db: np.ndarray, title: str = "", footer: str = "") -> bytes:
    """PNG bytes for one spectrogram panel with optional text margins."""
    from PIL import Image, ImageDraw

    img = spectrogram_image(spec_db)
    margin_top = 18 if title else 0
    margin_bottom = 14 if footer else 0
    if margin_top or margin_bottom:
        panel = Image.new("RGB", (img.width, img.height + margin_top + margin_bottom), (16, 16, 16))
        panel.paste(img, (0, margin_top))
        draw = ImageDraw.Draw(panel)
        if title:
            draw.text((4, 3), title, fill=(230, 230, 230))
        if footer:
            draw.text((4, panel.height - 12), footer, fill=(200, 200, 200))
        img = panel
    bio = io.BytesIO()
    img.save(bio, format="PNG")
    return bio.getvalue()
