"""The five effect DSP bodies, working on float64 sample arrays.

These take physical parameters (Hz, dB, ratios, pre-gain) and are wrapped
by `stepfx.effects.chain.apply_effect`, which owns validation and unit
mapping. Sequential inner loops live in `stepfx._kernels`.

Each effect has a transparent configuration used by the neutrality tests:
compressor with all ratios 1, distortion in soft_clip at the drive floor,
eq at 0 dB gain, phaser at depth 0 / feedback 0, reverb via the `bypass`
flag (its mix floor is 0.3, so bypass is a separate hook rather than a
sampled value).
"""

from __future__ import annotations

import numpy as np

from stepfx import _kernels
from stepfx.audio import SAMPLE_RATE

# --- filter design helpers -------------------------------------------------


def _butter2_lowpass_sos(fc: float, fs: float) -> np.ndarray:
    """One second-order Butterworth lowpass section (bilinear transform)."""
    k = np.tan(np.pi * fc / fs)
    q = 1.0 / np.sqrt(2.0)
    norm = 1.0 / (1.0 + k / q + k * k)
    b0 = k * k * norm
    b1 = 2.0 * b0
    b2 = b0
    a1 = 2.0 * (k * k - 1.0) * norm
    a2 = (1.0 - k / q + k * k) * norm
    return np.array([[b0, b1, b2, 1.0, a1, a2]])


def _lr4_lowpass_sos(fc: float, fs: float) -> np.ndarray:
    """4th-order Linkwitz-Riley lowpass: two cascaded Butterworth-2 sections."""
    sec = _butter2_lowpass_sos(fc, fs)
    return np.vstack([sec, sec])


def _shelf_sos(fc: float, q: float, gain_db: float, fs: float, kind: str) -> np.ndarray:
    """RBJ cookbook shelf biquad (a0-normalized)."""
    a = 10.0 ** (gain_db / 40.0)
    w0 = 2.0 * np.pi * fc / fs
    cw, sw = np.cos(w0), np.sin(w0)
    alpha = sw / (2.0 * q)
    two_rt_a = 2.0 * np.sqrt(a) * alpha
    if kind == "high":
        b0 = a * ((a + 1) + (a - 1) * cw + two_rt_a)
        b1 = -2 * a * ((a - 1) + (a + 1) * cw)
        b2 = a * ((a + 1) + (a - 1) * cw - two_rt_a)
        a0 = (a + 1) - (a - 1) * cw + two_rt_a
        a1 = 2 * ((a - 1) - (a + 1) * cw)
        a2 = (a + 1) - (a - 1) * cw - two_rt_a
    else:
        b0 = a * ((a + 1) - (a - 1) * cw + two_rt_a)
        b1 = 2 * a * ((a - 1) - (a + 1) * cw)
        b2 = a * ((a + 1) - (a - 1) * cw - two_rt_a)
        a0 = (a + 1) + (a - 1) * cw + two_rt_a
        a1 = -2 * ((a - 1) + (a + 1) * cw)
        a2 = (a + 1) + (a - 1) * cw - two_rt_a
    return np.array([[b0 / a0, b1 / a0, b2 / a0, 1.0, a1 / a0, a2 / a0]])


def _rms(x: np.ndarray) -> float:
    return float(np.sqrt(np.mean(x * x))) if x.size else 0.0


# --- multiband compressor ---------------------------------------------------

CROSSOVER_LOW_HZ = 120.0
CROSSOVER_HIGH_HZ = 2500.0
ATTACK_S = 0.005
RELEASE_S = 0.100


def compressor(x: np.ndarray, low_ratio: float, mid_ratio: float, high_ratio: float) -> np.ndarray:
    """Three-band downward compressor.

    Bands split with LR4 lowpass crossovers and complementary subtraction
    (low + mid + high reconstructs the input exactly), so all-ratios-1 is
    transparent. Per band: threshold slides -12..-30 dB with the amount,
    5 ms attack / 100 ms release, and full makeup gain -T*(1-1/r) dB
    (gain is flat at 0 dBFS, so quiet bands are lifted towards the
    threshold - audibly, which is what the sampled amounts need).
    """
    x = np.asarray(x, dtype=np.float64)
    low = _kernels.biquad_cascade(x, _lr4_lowpass_sos(CROSSOVER_LOW_HZ, SAMPLE_RATE))
    rest = x - low
    mid = _kernels.biquad_cascade(rest, _lr4_lowpass_sos(CROSSOVER_HIGH_HZ, SAMPLE_RATE))
    high = rest - mid

    atk = np.exp(-1.0 / (SAMPLE_RATE * ATTACK_S))
    rel = np.exp(-1.0 / (SAMPLE_RATE * RELEASE_S))
    out = np.zeros_like(x)
    for band, ratio in ((low, low_ratio), (mid, mid_ratio), (high, high_ratio)):
        if ratio <= 1.0:
            out += band
            continue
        amount = (ratio - 1.0) / 7.0
        threshold_db = -12.0 - 18.0 * amount
        env = _kernels.envelope_follower(np.abs(band), atk, rel)
        env_db = 20.0 * np.log10(np.maximum(env, 1e-10))
        over = np.maximum(env_db - threshold_db, 0.0)
        gain_db = -over * (1.0 - 1.0 / ratio)
        makeup_db = -threshold_db * (1.0 - 1.0 / ratio)
        out += band * 10.0 ** ((gain_db + makeup_db) / 20.0)
    return out


# --- distortion --------------------------------------------------------------


def _fold(v: np.ndarray, limit: float) -> np.ndarray:
    """Triangle-fold values back into [-limit, limit]."""
    period = 4.0 * limit
    w = np.mod(v + limit, period)
    return np.where(w < 2.0 * limit, w - limit, 3.0 * limit - w)


def distortion(x: np.ndarray, mode: str, drive: float) -> np.ndarray:
    """Twelve-mode waveshaper; `drive` is the mapped pre-gain (1..~25).

    Output is DC-removed and RMS-matched to the input so drive changes
    character rather than loudness. Scale-invariant shapes (the rectifiers)
    blend with the dry signal as drive rises, otherwise RMS matching would
    cancel the drive control entirely.
    """
    x = np.asarray(x, dtype=np.float64)
    g = float(drive)
    # secondary control derived from drive's normalized position in [1, 10^1.4]
    m = np.clip(np.log10(g) / 1.4, 0.0, 1.0)
    u = g * x

    if mode == "soft_clip":
        a = g - 1.0 + 0.01  # transparent at the drive floor (g = 1)
        y = np.tanh(a * x) / a
    elif mode == "hard_clip":
        y = np.clip(u, -0.9, 0.9)
    elif mode == "asym_clip":
        y = np.clip(u, -0.9, 0.45)
    elif mode == "foldback":
        y = _fold(u, 0.9)
    elif mode == "sine_fold":
        y = np.sin(u)
    elif mode == "half_rect":
        y = (1.0 - m) * x + m * 2.0 * np.maximum(x, 0.0)
    elif mode == "full_rect":
        y = (1.0 - m) * x + m * np.abs(x)
    elif mode == "bitcrush":
        bits = int(round(12.0 - 10.0 * m))
        scale = 2.0 ** (bits - 1)
        y = np.round(x * scale) / scale
    elif mode == "downsample":
        factor = 1 + int(round(30.0 * m))
        y = np.repeat(x[::factor], factor)[: x.shape[0]]
    elif mode == "diode":
        alpha = 2.0 + 3.0 * m
        y = (np.exp(alpha * np.clip(u, -1.0, 1.0)) - 1.0) / (np.exp(alpha) - 1.0)
    elif mode == "cubic":
        v = np.clip(u, -1.5, 1.5)
        y = v - v**3 / 3.0
    elif mode == "notch":
        w = 0.02 + 0.2 * m
        y = (x - np.clip(x, -w, w)) / (1.0 - w)
    else:
        raise ValueError(f"unknown distortion mode {mode!r}")

    y = y - np.mean(y)
    r_in, r_out = _rms(x), _rms(y)
    if r_out > 1e-12:
        y = y * (r_in / r_out)
    return y


# --- equalizer ---------------------------------------------------------------


def eq(x: np.ndarray, cutoff: float, resonance: float, gain: float) -> np.ndarray:
    """High-band shelf: `cutoff` in Hz, `resonance` as Q, `gain` in dB."""
    x = np.asarray(x, dtype=np.float64)
    return _kernels.biquad_cascade(x, _shelf_sos(cutoff, resonance, gain, SAMPLE_RATE, "high"))


# --- phaser ------------------------------------------------------------------

PHASER_STAGES = 6
SWEEP_LOW_HZ = 200.0
SWEEP_HIGH_HZ = 8000.0


def phaser(x: np.ndarray, depth: float, frequency: float, feedback: float) -> np.ndarray:
    """Six swept first-order allpass stages at 50% wet mix.

    `depth` linearly scales the sweep locus d*[200, 8000] Hz; at depth 0
    the allpass coefficients collapse to -1 and the chain is transparent.
    `frequency` is the LFO rate in Hz, `feedback` the wet feedback gain.
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    t = np.arange(n, dtype=np.float64) / SAMPLE_RATE
    sweep01 = 0.5 * (1.0 + np.sin(2.0 * np.pi * frequency * t))
    fc = depth * SWEEP_LOW_HZ * (SWEEP_HIGH_HZ / SWEEP_LOW_HZ) ** sweep01
    tan_half = np.tan(np.pi * fc / SAMPLE_RATE)
    coefs = (tan_half - 1.0) / (tan_half + 1.0)
    wet = _kernels.swept_allpass_chain(x, coefs, PHASER_STAGES, feedback)
    return 0.5 * x + 0.5 * wet


# --- hall reverb -------------------------------------------------------------

COMB_DELAYS = (1116, 1188, 1277, 1356, 1422, 1491, 1557, 1617)
ALLPASS_DELAYS = (556, 441, 341, 225)
ALLPASS_G = 0.5
RT60_S = 2.0
SHELF_CUT_DB = -18.0


def reverb(
    x: np.ndarray,
    mix: float,
    low_cut: float,
    high_cut: float,
    bypass: bool = False,
) -> np.ndarray:
    """Hall reverb: shelved input -> 8 damped combs -> 4 allpass diffusers.

    Comb feedbacks are set for a 2.0 s mid-band RT60; the 2-tap averaging
    filter inside each comb loop shortens the decay towards the top octaves.
    `low_cut`/`high_cut` are the corner frequencies (Hz) of -18 dB input
    shelves. The wet path is RMS-matched to the dry input before the
    `mix` crossfade. The tail is truncated at the input length.
    """
    x = np.asarray(x, dtype=np.float64)
    if bypass:
        return x.copy()
    shaped = _kernels.biquad_cascade(x, _shelf_sos(low_cut, 0.707, SHELF_CUT_DB, SAMPLE_RATE, "low"))
    shaped = _kernels.biquad_cascade(shaped, _shelf_sos(high_cut, 0.707, SHELF_CUT_DB, SAMPLE_RATE, "high"))

    wet = np.zeros_like(x)
    for delay in COMB_DELAYS:
        g = 10.0 ** (-3.0 * (delay / SAMPLE_RATE) / RT60_S)
        wet += _kernels.comb_damped(shaped, delay, g)
    wet /= len(COMB_DELAYS)
    for delay in ALLPASS_DELAYS:
        wet = _kernels.schroeder_allpass(wet, delay, ALLPASS_G)

    r_in, r_wet = _rms(x), _rms(wet)
    if r_wet > 1e-12:
        wet = wet * (r_in / r_wet)
    return (1.0 - mix) * x + mix * wet
