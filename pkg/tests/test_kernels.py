"""Compiled kernels agree with the pure NumPy/Python fallbacks."""

import numpy as np
import pytest

from stepfx import _kernels
from stepfx._kernels import fallback
from stepfx.util import rng_from

compiled = pytest.importorskip("stepfx._kernels._core")


@pytest.fixture(scope="module")
def signal():
    rng = rng_from("kernel-probe")
    return rng.standard_normal(20_000)


def close(a, b, tol=1e-10):
    return np.max(np.abs(np.asarray(a) - np.asarray(b))) < tol


def test_backend_selected():
    assert _kernels.BACKEND in ("compiled", "fallback")


def test_biquad_cascade(signal):
    sos = np.array(
        [
            [0.2, 0.3, 0.1, 1.0, -0.5, 0.2],
            [0.9, -0.2, 0.05, 1.0, 0.1, -0.3],
        ]
    )
    assert close(compiled.biquad_cascade(signal, sos), fallback.biquad_cascade(signal, sos))


def test_envelope_follower(signal):
    rect = np.abs(signal)
    a = compiled.envelope_follower(rect, 0.9955, 0.99977)
    b = fallback.envelope_follower(rect, 0.9955, 0.99977)
    assert close(a, b)


def test_swept_allpass_chain(signal):
    rng = rng_from("sweep-coefs")
    coefs = rng.uniform(-0.99, 0.5, signal.shape[0])
    a = compiled.swept_allpass_chain(signal, coefs, 6, 0.7)
    b = fallback.swept_allpass_chain(signal, coefs, 6, 0.7)
    assert close(a, b)


def test_comb_damped(signal):
    a = compiled.comb_damped(signal, 1116, 0.94)
    b = fallback.comb_damped(signal, 1116, 0.94)
    assert close(a, b)


def test_comb_short_delay(signal):
    assert close(compiled.comb_damped(signal, 3, 0.5), fallback.comb_damped(signal, 3, 0.5))


def test_schroeder_allpass(signal):
    a = compiled.schroeder_allpass(signal, 441, 0.5)
    b = fallback.schroeder_allpass(signal, 441, 0.5)
    assert close(a, b)
