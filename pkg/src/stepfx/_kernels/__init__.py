"""Kernel backend selection.

Prefers the compiled Cython module; falls back to the NumPy/Python
implementations when the extension is not built or when
``STEPFX_FORCE_FALLBACK`` is set (used by tests and the benchmark).
"""

import os

if os.environ.get("STEPFX_FORCE_FALLBACK"):
    from stepfx._kernels import fallback as _impl

    BACKEND = "fallback"
else:
    try:
        from stepfx._kernels import _core as _impl  # type: ignore[attr-defined]

        BACKEND = "compiled"
    except ImportError:
        from stepfx._kernels import fallback as _impl

        BACKEND = "fallback"

biquad_cascade = _impl.biquad_cascade
envelope_follower = _impl.envelope_follower
swept_allpass_chain = _impl.swept_allpass_chain
comb_damped = _impl.comb_damped
schroeder_allpass = _impl.schroeder_allpass

__all__ = [
    "BACKEND",
    "biquad_cascade",
    "envelope_follower",
    "swept_allpass_chain",
    "comb_damped",
    "schroeder_allpass",
]
