"""Compiled vs fallback kernel comparison, plus the conv throughput figure.

Run: python benchmarks/bench_kernels.py
"""

import time

import numpy as np

from stepfx._kernels import fallback
from stepfx.util import rng_from

try:
    from stepfx._kernels import _core as compiled
except ImportError:
    compiled = None


def timeit(fn, reps=3):
    fn()
    t0 = time.perf_counter()
    for _ in range(reps):
        fn()
    return (time.perf_counter() - t0) / reps


def compare(name, fn_name, *args):
    fb = getattr(fallback, fn_name)
    t_fb = timeit(lambda: fb(*args))
    if compiled is None:
        print(f"{name:24s} fallback {t_fb * 1e3:8.2f} ms   (extension not built)")
        return
    co = getattr(compiled, fn_name)
    t_co = timeit(lambda: co(*args))
    err = np.max(np.abs(np.asarray(co(*args)) - np.asarray(fb(*args))))
    print(
        f"{name:24s} compiled {t_co * 1e3:8.2f} ms   fallback {t_fb * 1e3:8.2f} ms"
        f"   speedup {t_fb / t_co:6.1f}x   max|diff| {err:.2e}"
    )


def conv_throughput():
    from stepfx.nn import Conv2D

    rng = rng_from("bench-conv")
    conv = Conv2D(32, 64, rng=np.random.default_rng(0))
    x = rng.random((16, 32, 64, 43)).astype(np.float32)
    t = timeit(lambda: conv.forward(x))
    macs = 16 * 64 * 43 * 64 * 32 * 9
    print(f"\nconv2d forward: {macs / t / 1e6:,.0f} MMAC/s (target >= 50 MMAC/s)")


def main():
    rng = rng_from("bench")
    x = rng.standard_normal(44100)
    sos = np.array([[0.2, 0.3, 0.1, 1.0, -0.5, 0.2], [0.9, -0.2, 0.05, 1.0, 0.1, -0.3]])
    coefs = rng.uniform(-0.99, 0.5, x.shape[0])

    print(f"signal: 1 s at 44100 Hz\n")
    compare("biquad_cascade (2 sos)", "biquad_cascade", x, sos)
    compare("envelope_follower", "envelope_follower", np.abs(x), 0.9955, 0.99977)
    compare("swept_allpass (6 st)", "swept_allpass_chain", x, coefs, 6, 0.7)
    compare("comb_damped (d=1116)", "comb_damped", x, 1116, 0.94)
    compare("schroeder_allpass", "schroeder_allpass", x, 441, 0.5)
    conv_throughput()


if __name__ == "__main__":
    main()
