"""Minimal deterministic layers with explicit reverse-mode gradients.

Exactly the inventory the two model families need: conv2d, maxpool2d,
dense, elu, dropout, bilstm, softmax, sigmoid, flatten, global-avg-pool,
concat and time-distributed. Parameters are float32; every op computes in
the dtype of its input, so the gradient checker can run the same layers
in float64 where the finite-difference quotient stays above rounding
noise.

Convolution is im2col + matmul (the hot path rides the BLAS sgemm);
everything sums in fixed order, so fixed seeds give bit-identical
training trajectories.
"""

from __future__ import annotations

import numpy as np


def glorot_uniform(shape, fan_in, fan_out, rng) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(np.float32)


def orthogonal(shape, rng) -> np.ndarray:
    a = rng.standard_normal(shape)
    q, r = np.linalg.qr(a if shape[0] >= shape[1] else a.T)
    q = q * np.sign(np.diag(r))
    if shape[0] < shape[1]:
        q = q.T
    return q[: shape[0], : shape[1]].astype(np.float32)


def stable_sigmoid(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-np.clip(x, -30.0, 30.0)))


class Layer:
    """Base: parameter/grad dicts plus a forward/backward pair."""

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}

    def forward(self, x, train=False, rng=None):
        raise NotImplementedError

    def backward(self, dy):
        raise NotImplementedError

    def zero_grad(self):
        self.grads = {}

    def _acc(self, name, grad):
        if name in self.grads:
            self.grads[name] = self.grads[name] + grad
        else:
            self.grads[name] = grad

    def param_count(self) -> int:
        return sum(p.size for p in self.params.values())


class Dense(Layer):
    def __init__(self, in_dim: int, out_dim: int, rng=None):
        super().__init__()
        rng = rng or np.random.default_rng(0)
        self.params["weight"] = glorot_uniform((in_dim, out_dim), in_dim, out_dim, rng)
        self.params["bias"] = np.zeros(out_dim, dtype=np.float32)

    def forward(self, x, train=False, rng=None):
        w = self.params["weight"].astype(x.dtype, copy=False)
        b = self.params["bias"].astype(x.dtype, copy=False)
        self._x = x
        return x @ w + b

    def backward(self, dy):
        w = self.params["weight"].astype(dy.dtype, copy=False)
        self._acc("weight", self._x.T @ dy)
        self._acc("bias", dy.sum(axis=0))
        return dy @ w.T


class Conv2D(Layer):
    """3x3-style same-padding convolution over (B, C, H, W), stride 1.

    Unfolds into a (B, C*k*k, H*W) column tensor filled by k*k slab copies
    (row-contiguous, so no giant 6-D transposes) and rides one batched GEMM
    each way; the padded input is cached and the columns rebuilt in
    backward, keeping the live footprint near the activation size.
    """

    def __init__(self, in_channels: int, out_channels: int, kernel: int = 3, rng=None):
        super().__init__()
        if kernel % 2 == 0:
            raise ValueError("conv kernel must be odd-sized")
        rng = rng or np.random.default_rng(0)
        fan_in = in_channels * kernel * kernel
        fan_out = out_channels * kernel * kernel
        self.kernel = kernel
        self.params["weight"] = glorot_uniform(
            (out_channels, in_channels, kernel, kernel), fan_in, fan_out, rng
        )
        self.params["bias"] = np.zeros(out_channels, dtype=np.float32)

    def _unfold(self, xp, shape):
        b, c, h, w = shape
        k = self.kernel
        col = np.empty((b, c, k, k, h, w), dtype=xp.dtype)
        for i in range(k):
            for j in range(k):
                col[:, :, i, j] = xp[:, :, i : i + h, j : j + w]
        return col.reshape(b, c * k * k, h * w)

    def forward(self, x, train=False, rng=None):
        b, c, h, w = x.shape
        if c != self.params["weight"].shape[1]:
            raise ValueError(
                f"conv expected {self.params['weight'].shape[1]} input channels, got {c}"
            )
        f = self.params["weight"].shape[0]
        pad = self.kernel // 2
        wmat = self.params["weight"].reshape(f, -1).astype(x.dtype, copy=False)
        xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
        col = self._unfold(xp, x.shape)
        y = np.matmul(wmat, col)  # (B, F, H*W)
        y += self.params["bias"].astype(x.dtype, copy=False)[None, :, None]
        self._xp = xp
        self._shape = x.shape
        return y.reshape(b, f, h, w)

    def backward(self, dy):
        b, c, h, w = self._shape
        f = self.params["weight"].shape[0]
        k = self.kernel
        pad = k // 2
        wmat = self.params["weight"].reshape(f, -1).astype(dy.dtype, copy=False)
        col = self._unfold(self._xp, self._shape)
        dy3 = dy.reshape(b, f, h * w)
        # per-sample 2-D GEMMs: BLAS takes the transpose as a flag, the
        # batched form would copy every transposed slice
        dw = np.zeros((f, c * k * k), dtype=dy.dtype)
        for bi in range(b):
            dw += dy3[bi] @ col[bi].T
        self._acc("weight", dw.reshape(self.params["weight"].shape))
        self._acc("bias", dy3.sum(axis=(0, 2)))
        dcol = np.matmul(wmat.T, dy3).reshape(b, c, k, k, h, w)
        dxp = np.zeros_like(self._xp)
        for i in range(k):
            for j in range(k):
                dxp[:, :, i : i + h, j : j + w] += dcol[:, :, i, j]
        return dxp[:, :, pad : pad + h, pad : pad + w]


class MaxPool2D(Layer):
    """2x2 stride-2 max pooling; odd trailing rows/columns are dropped.

    Ties route their gradient to the first maximal cell in window scan
    order (ties never arise on real-valued activations).
    """

    def __init__(self, size: int = 2):
        super().__init__()
        self.size = size

    def _cells(self, x):
        s = self.size
        h2, w2 = x.shape[2] // s, x.shape[3] // s
        return [
            x[:, :, i : h2 * s : s, j : w2 * s : s] for i in range(s) for j in range(s)
        ]

    def forward(self, x, train=False, rng=None):
        cells = self._cells(x)
        y = cells[0]
        for c in cells[1:]:
            y = np.maximum(y, c)
        self._x = x
        self._y = y
        return y

    def backward(self, dy):
        s = self.size
        x = self._x
        b, c, h, w = x.shape
        h2, w2 = h // s, w // s
        dx = np.zeros((b, c, h, w), dtype=dy.dtype)
        taken = np.zeros(self._y.shape, dtype=bool)
        for i in range(s):
            for j in range(s):
                cell = x[:, :, i : h2 * s : s, j : w2 * s : s]
                hit = (cell == self._y) & ~taken
                dx[:, :, i : h2 * s : s, j : w2 * s : s] = dy * hit
                taken |= hit
        return dx


class ELU(Layer):
    """alpha * (e^x - 1) below zero, identity above.

    Written as max(x, 0) + alpha*expm1(min(x, 0)): branch-free, and the
    cached e^{min(x,0)} IS the derivative on both sides of zero.
    """

    def __init__(self, alpha: float = 1.0):
        super().__init__()
        self.alpha = alpha

    def forward(self, x, train=False, rng=None):
        exp_neg = np.minimum(x, 0.0)
        np.exp(exp_neg, out=exp_neg)
        y = np.maximum(x, 0.0)
        if self.alpha == 1.0:
            y += exp_neg
            y -= 1.0
        else:
            y += self.alpha * (exp_neg - 1.0)
        self._exp_neg = exp_neg
        return y

    def backward(self, dy):
        if self.alpha == 1.0:
            return dy * self._exp_neg
        grad = np.maximum(self._exp_neg * self.alpha, 0.0)
        grad[self._exp_neg >= 1.0] = 1.0
        return dy * grad


class Dropout(Layer):
    """Inverted dropout: scales at train time, identity at inference."""

    def __init__(self, rate: float = 0.5):
        super().__init__()
        if not (0.0 <= rate < 1.0):
            raise ValueError("dropout rate must lie in [0, 1)")
        self.rate = rate

    def forward(self, x, train=False, rng=None):
        if not train or self.rate == 0.0:
            self._mask = None
            return x
        if rng is None:
            raise ValueError("train-mode dropout needs an rng")
        mask = rng.random(x.shape) >= self.rate
        self._mask = mask
        return x * mask / (1.0 - self.rate)

    def backward(self, dy):
        if self._mask is None:
            return dy
        return dy * self._mask / (1.0 - self.rate)


class Softmax(Layer):
    def forward(self, x, train=False, rng=None):
        shifted = x - x.max(axis=-1, keepdims=True)
        e = np.exp(shifted)
        y = e / e.sum(axis=-1, keepdims=True)
        self._y = y
        return y

    def backward(self, dy):
        y = self._y
        return y * (dy - (dy * y).sum(axis=-1, keepdims=True))


class Sigmoid(Layer):
    def forward(self, x, train=False, rng=None):
        y = stable_sigmoid(x)
        self._y = y
        return y

    def backward(self, dy):
        return dy * self._y * (1.0 - self._y)


class Flatten(Layer):
    def forward(self, x, train=False, rng=None):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dy):
        return dy.reshape(self._shape)


class GlobalAvgPool(Layer):
    """(B, C, H, W) -> (B, C) spatial mean."""

    def forward(self, x, train=False, rng=None):
        self._shape = x.shape
        return x.mean(axis=(2, 3))

    def backward(self, dy):
        b, c, h, w = self._shape
        return np.broadcast_to(dy[:, :, None, None], self._shape) / (h * w)


class Concat(Layer):
    """Join two inputs along the last axis."""

    def forward(self, inputs, train=False, rng=None):
        a, b = inputs
        self._split = a.shape[-1]
        return np.concatenate([a, b], axis=-1)

    def backward(self, dy):
        return dy[..., : self._split], dy[..., self._split :]


class TimeDistributed(Layer):
    """Apply a module independently at every timestep of (B, T, ...)."""

    def __init__(self, module):
        super().__init__()
        self.module = module

    def forward(self, x, train=False, rng=None):
        b, t = x.shape[:2]
        self._bt = (b, t)
        y = self.module.forward(x.reshape(b * t, *x.shape[2:]), train=train, rng=rng)
        return y.reshape(b, t, *y.shape[1:])

    def backward(self, dy):
        b, t = self._bt
        dx = self.module.backward(dy.reshape(b * t, *dy.shape[2:]))
        return dx.reshape(b, t, *dx.shape[1:])


class BiLSTM(Layer):
    """Bidirectional LSTM over (B, T, D) -> per-step (B, T, 2H).

    Gate order i, f, g, o; forget-gate bias starts at 1. The forward
    direction's final state is out[:, -1, :H]; the backward direction's is
    out[:, 0, H:].
    """

    def __init__(self, input_dim: int, hidden: int, rng=None):
        super().__init__()
        rng = rng or np.random.default_rng(0)
        self.hidden = hidden
        for d in ("f", "b"):
            self.params[f"w_{d}"] = glorot_uniform(
                (input_dim, 4 * hidden), input_dim, 4 * hidden, rng
            )
            self.params[f"u_{d}"] = np.concatenate(
                [orthogonal((hidden, hidden), rng) for _ in range(4)], axis=1
            )
            bias = np.zeros(4 * hidden, dtype=np.float32)
            bias[hidden : 2 * hidden] = 1.0
            self.params[f"b_{d}"] = bias

    def _run(self, x, direction):
        h_dim = self.hidden
        w = self.params[f"w_{direction}"].astype(x.dtype, copy=False)
        u = self.params[f"u_{direction}"].astype(x.dtype, copy=False)
        b = self.params[f"b_{direction}"].astype(x.dtype, copy=False)
        bsz, t_len, _ = x.shape
        steps = range(t_len) if direction == "f" else range(t_len - 1, -1, -1)
        h = np.zeros((bsz, h_dim), dtype=x.dtype)
        c = np.zeros((bsz, h_dim), dtype=x.dtype)
        outs = np.zeros((bsz, t_len, h_dim), dtype=x.dtype)
        cache = []
        for t in steps:
            z = x[:, t, :] @ w + h @ u + b
            i = stable_sigmoid(z[:, :h_dim])
            f = stable_sigmoid(z[:, h_dim : 2 * h_dim])
            g = np.tanh(z[:, 2 * h_dim : 3 * h_dim])
            o = stable_sigmoid(z[:, 3 * h_dim :])
            c_new = f * c + i * g
            tanh_c = np.tanh(c_new)
            h_new = o * tanh_c
            cache.append((t, x[:, t, :], h, c, i, f, g, o, c_new, tanh_c))
            h, c = h_new, c_new
            outs[:, t, :] = h
        return outs, cache

    def forward(self, x, train=False, rng=None):
        self._x_shape = x.shape
        self._dtype = x.dtype
        out_f, self._cache_f = self._run(x, "f")
        out_b, self._cache_b = self._run(x, "b")
        return np.concatenate([out_f, out_b], axis=-1)

    def _back(self, dy_dir, cache, direction):
        h_dim = self.hidden
        w = self.params[f"w_{direction}"].astype(self._dtype, copy=False)
        u = self.params[f"u_{direction}"].astype(self._dtype, copy=False)
        bsz, t_len, _ = self._x_shape
        dw = np.zeros_like(w)
        du = np.zeros_like(u)
        db = np.zeros(4 * h_dim, dtype=self._dtype)
        dx = np.zeros(self._x_shape, dtype=self._dtype)
        dh_next = np.zeros((bsz, h_dim), dtype=self._dtype)
        dc_next = np.zeros((bsz, h_dim), dtype=self._dtype)
        for t, x_t, h_prev, c_prev, i, f, g, o, c_new, tanh_c in reversed(cache):
            dh = dy_dir[:, t, :] + dh_next
            do = dh * tanh_c
            dc = dh * o * (1.0 - tanh_c**2) + dc_next
            di = dc * g
            df = dc * c_prev
            dg = dc * i
            dz = np.concatenate(
                [
                    di * i * (1.0 - i),
                    df * f * (1.0 - f),
                    dg * (1.0 - g**2),
                    do * o * (1.0 - o),
                ],
                axis=1,
            )
            dw += x_t.T @ dz
            du += h_prev.T @ dz
            db += dz.sum(axis=0)
            dx[:, t, :] += dz @ w.T
            dh_next = dz @ u.T
            dc_next = dc * f
        self._acc(f"w_{direction}", dw)
        self._acc(f"u_{direction}", du)
        self._acc(f"b_{direction}", db)
        return dx

    def backward(self, dy):
        h_dim = self.hidden
        dx = self._back(dy[:, :, :h_dim], self._cache_f, "f")
        dx = dx + self._back(dy[:, :, h_dim:], self._cache_b, "b")
        return dx


class Sequential(Layer):
    def __init__(self, *layers):
        super().__init__()
        self.layers = list(layers)

    def forward(self, x, train=False, rng=None):
        for layer in self.layers:
            x = layer.forward(x, train=train, rng=rng)
        return x

    def backward(self, dy):
        for layer in reversed(self.layers):
            dy = layer.backward(dy)
        return dy

    def zero_grad(self):
        for layer in self.layers:
            layer.zero_grad()

    def named_parameters(self, prefix=""):
        for idx, layer in enumerate(self.layers):
            if isinstance(layer, Sequential):
                yield from layer.named_parameters(f"{prefix}{idx}.")
            elif isinstance(layer, TimeDistributed):
                yield from _named_in(layer.module, f"{prefix}{idx}.td.")
            else:
                for name in layer.params:
                    yield f"{prefix}{idx}.{name}", layer, name

    def param_count(self) -> int:
        return sum(p.size for _, layer, name in self.named_parameters() for p in [layer.params[name]])


def _named_in(module, prefix):
    if isinstance(module, Sequential):
        yield from module.named_parameters(prefix)
    else:
        for name in module.params:
            yield f"{prefix}{name}", module, name
