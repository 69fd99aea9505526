"""Pure NumPy/SciPy implementations of the DSP kernels.

Same recurrences as the compiled module in `_core.pyx`. The comb and
allpass delays are block-vectorized (every feedback reference reaches at
least one full delay length back, so each block only reads finished
samples); the envelope follower and the swept allpass chain are genuinely
sample-sequential and fall back to Python loops here.
"""

from __future__ import annotations

import numpy as np
from scipy.signal import sosfilt


def biquad_cascade(x: np.ndarray, sos: np.ndarray) -> np.ndarray:
    """Apply second-order sections (a0-normalized, shape (n, 6)) in series."""
    return sosfilt(np.asarray(sos, dtype=np.float64), np.asarray(x, dtype=np.float64))


def envelope_follower(rect: np.ndarray, attack_coef: float, release_coef: float) -> np.ndarray:
    """One-pole attack/release follower over a rectified signal."""
    rect = np.asarray(rect, dtype=np.float64)
    env = np.empty_like(rect)
    prev = 0.0
    for n in range(rect.shape[0]):
        target = rect[n]
        c = attack_coef if target > prev else release_coef
        prev = c * prev + (1.0 - c) * target
        env[n] = prev
    return env


def swept_allpass_chain(
    x: np.ndarray, coefs: np.ndarray, n_stages: int, feedback: float
) -> np.ndarray:
    """Cascade of first-order allpass stages with a per-sample coefficient.

    All stages share coefs[n] at sample n; `feedback` feeds the previous
    chain output back into the input.
    """
    x = np.asarray(x, dtype=np.float64)
    coefs = np.asarray(coefs, dtype=np.float64)
    n = x.shape[0]
    wet = np.empty(n, dtype=np.float64)
    x_prev = [0.0] * n_stages
    y_prev = [0.0] * n_stages
    w = 0.0
    for i in range(n):
        a = coefs[i]
        v = x[i] + feedback * w
        for s in range(n_stages):
            y = a * (v - y_prev[s]) + x_prev[s]
            x_prev[s] = v
            y_prev[s] = y
            v = y
        w = v
        wet[i] = v
    return wet


def comb_damped(x: np.ndarray, delay: int, g: float) -> np.ndarray:
    """Feedback comb with a 2-tap averaging filter in the loop.

    y[n] = x[n] + g * (y[n-D] + y[n-D-1]) / 2
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    buf = np.zeros(n + delay + 1, dtype=np.float64)
    half_g = 0.5 * g
    for start in range(0, n, delay):
        stop = min(start + delay, n)
        buf[delay + 1 + start : delay + 1 + stop] = x[start:stop] + half_g * (
            buf[start + 1 : stop + 1] + buf[start:stop]
        )
    return buf[delay + 1 :]


def schroeder_allpass(x: np.ndarray, delay: int, g: float) -> np.ndarray:
    """Schroeder allpass diffuser: y[n] = -g*x[n] + x[n-D] + g*y[n-D]."""
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    xbuf = np.concatenate([np.zeros(delay), x])
    ybuf = np.zeros(n + delay, dtype=np.float64)
    for start in range(0, n, delay):
        stop = min(start + delay, n)
        ybuf[delay + start : delay + stop] = (
            -g * x[start:stop] + xbuf[start:stop] + g * ybuf[start:stop]
        )
    return ybuf[delay:]
