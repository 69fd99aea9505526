"""Central finite-difference verification of the backward passes.

Fragments are checked in float64 so the difference quotient stays above
rounding noise; the production parameters are restored afterwards. The
returned value is the worst relative error over all parameters and the
input gradient.
"""

from __future__ import annotations

import numpy as np

from stepfx.nn.layers import Sequential
from stepfx.nn.losses import LOSSES
from stepfx.util import rng_from

MAX_PARAMS = 10_000
EPSILON = 1e-3


def _named(module):
    if isinstance(module, Sequential):
        return list(module.named_parameters())
    return [(name, module, name) for name in module.params]


def _make_target(loss, shape, rng):
    if loss == "mse":
        return rng.standard_normal(shape)
    if loss == "bce":
        return rng.integers(0, 2, size=shape).astype(np.float64)
    if loss == "cce":
        onehot = np.zeros(shape)
        cols = rng.integers(0, shape[-1], size=shape[0])
        onehot[np.arange(shape[0]), cols] = 1.0
        return onehot
    raise ValueError(f"unknown loss {loss!r}")


def grad_check(module, input_shape, seed: int = 0, loss: str = "mse") -> float:
    """Max relative error |analytic - numeric| / max(|a|, |n|, 1e-8)."""
    named = _named(module)
    n_params = sum(layer.params[pname].size for _, layer, pname in named)
    if n_params > MAX_PARAMS:
        raise ValueError(f"fragment too large for grad_check ({n_params} parameters)")

    saved = {name: layer.params[pname] for name, layer, pname in named}
    for name, layer, pname in named:
        layer.params[pname] = layer.params[pname].astype(np.float64)

    loss_fn = LOSSES[loss]
    rng = rng_from("grad-check-input", seed)
    x = rng.standard_normal(input_shape)

    def run():
        y = module.forward(x, train=True, rng=rng_from("grad-check-dropout", seed))
        return y

    target = _make_target(loss, run().shape, rng_from("grad-check-target", seed))

    def evaluate():
        return loss_fn(run(), target)[0]

    # analytic pass
    if isinstance(module, Sequential):
        module.zero_grad()
    else:
        module.grads = {}
    y = run()
    _, dy = loss_fn(y, target)
    dx = module.backward(dy)

    worst = 0.0

    def compare(analytic, numeric):
        nonlocal worst
        rel = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-8)
        worst = max(worst, rel)

    for name, layer, pname in named:
        param = layer.params[pname]
        grad = layer.grads[pname]
        flat = param.reshape(-1)
        gflat = np.asarray(grad).reshape(-1)
        for idx in range(flat.size):
            keep = flat[idx]
            flat[idx] = keep + EPSILON
            up = evaluate()
            flat[idx] = keep - EPSILON
            down = evaluate()
            flat[idx] = keep
            compare(gflat[idx], (up - down) / (2.0 * EPSILON))

    xflat = x.reshape(-1)
    dxflat = np.asarray(dx).reshape(-1)
    stride = max(1, xflat.size // 64)  # spot-check the input gradient
    for idx in range(0, xflat.size, stride):
        keep = xflat[idx]
        xflat[idx] = keep + EPSILON
        up = evaluate()
        xflat[idx] = keep - EPSILON
        down = evaluate()
        xflat[idx] = keep
        compare(dxflat[idx], (up - down) / (2.0 * EPSILON))

    for name, layer, pname in named:
        layer.params[pname] = saved[name]
    return worst
