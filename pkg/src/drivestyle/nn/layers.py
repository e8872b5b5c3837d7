"""Layer implementations.

Every layer works on a leading batch axis. ``forward_train`` returns the
output together with whatever the backward pass needs; ``backward`` takes
that cache and the upstream gradient and returns ``(dx, grads)``. Layers keep
no per-call state, so inference is safe to run concurrently.

Sequence data uses the same (batch, channels, time) layout as convolutions,
so a 35 x F feature matrix is also a sequence of F frames of 35 values.
"""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def glorot_uniform(rng, shape, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class Layer:
    kind = ""
    param_names: tuple = ()

    def __init__(self, trainable=True):
        self.params = {}
        self.trainable = trainable

    def spec(self) -> dict:
        return {"kind": self.kind, "trainable": self.trainable}

    def output_shape(self, input_shape):
        return tuple(input_shape)

    def forward(self, x):
        return self.forward_train(x)[0]

    def forward_train(self, x):
        raise NotImplementedError

    def backward(self, cache, dy):
        raise NotImplementedError


class Conv1D(Layer):
    """Time-axis convolution with kernels spanning all input channels."""
    kind = "conv1d"
    param_names = ("W", "b")

    def __init__(self, in_channels, out_channels, kernel, stride=1, rng=None, trainable=True):
        super().__init__(trainable)
        if min(in_channels, out_channels, kernel) < 1:
            raise ValueError("conv1d hyperparameters must be positive")
        if stride != 1:
            raise ValueError("only stride 1 is supported")
        self.in_channels, self.out_channels, self.kernel, self.stride = in_channels, out_channels, kernel, stride
        rng = rng if rng is not None else np.random.default_rng(0)
        self.params["W"] = glorot_uniform(rng, (out_channels, in_channels, kernel),
                                          in_channels * kernel, out_channels * kernel)
        self.params["b"] = np.zeros(out_channels)

    def spec(self):
        return {**super().spec(), "in_channels": self.in_channels, "out_channels": self.out_channels,
                "kernel": self.kernel, "stride": self.stride}

    def output_shape(self, input_shape):
        c, t = input_shape
        if c != self.in_channels:
            raise ValueError(f"conv1d expects {self.in_channels} channels, got {c}")
        if t < self.kernel:
            raise ValueError(f"conv1d needs at least {self.kernel} time steps, got {t}")
        return (self.out_channels, t - self.kernel + 1)

    def forward_train(self, x):
        b, c, t = x.shape
        if t < self.kernel:
            raise ValueError(f"conv1d needs at least {self.kernel} time steps, got {t}")
        k = self.kernel
        # (B, T', C*K) patches, channel-major within a patch to match W's layout
        cols = sliding_window_view(x, k, axis=2).transpose(0, 2, 1, 3).reshape(b, t - k + 1, c * k)
        w = self.params["W"].reshape(self.out_channels, c * k)
        y = (cols @ w.T).transpose(0, 2, 1) + self.params["b"][None, :, None]
        return y, (cols, x.shape)

    def backward(self, cache, dy):
        cols, (b, c, t) = cache
        k = self.kernel
        tp = t - k + 1
        dyt = dy.transpose(0, 2, 1)                                  # (B, T', O)
        w = self.params["W"].reshape(self.out_channels, c * k)
        grads = {"W": np.tensordot(dyt, cols, axes=([0, 1], [0, 1])).reshape(self.params["W"].shape),
                 "b": dy.sum(axis=(0, 2))}
        dcols = (dyt @ w).reshape(b, tp, c, k)
        dx = np.zeros((b, c, t))
        for j in range(k):
            dx[:, :, j:j + tp] += dcols[:, :, :, j].transpose(0, 2, 1)
        return dx, grads


class MaxPool1D(Layer):
    """Non-overlapping max pooling over time; ties go to the earlier index."""
    kind = "maxpool1d"

    def __init__(self, width=2, trainable=True):
        super().__init__(trainable)
        if width < 1:
            raise ValueError("pool width must be positive")
        self.width = width

    def spec(self):
        return {**super().spec(), "width": self.width}

    def output_shape(self, input_shape):
        c, t = input_shape
        if t < self.width:
            raise ValueError(f"maxpool1d needs at least {self.width} time steps, got {t}")
        return (c, t // self.width)

    def forward_train(self, x):
        b, c, t = x.shape
        w = self.width
        if t < w:
            raise ValueError(f"maxpool1d needs at least {w} time steps, got {t}")
        to = t // w
        xr = x[:, :, :to * w].reshape(b, c, to, w)
        idx = xr.argmax(axis=-1)  # first maximum wins
        y = np.take_along_axis(xr, idx[..., None], axis=-1)[..., 0]
        return y, (idx, x.shape)

    def backward(self, cache, dy):
        idx, (b, c, t) = cache
        w = self.width
        to = t // w
        dxr = np.zeros((b, c, to, w))
        np.put_along_axis(dxr, idx[..., None], dy[..., None], axis=-1)
        dx = np.zeros((b, c, t))
        dx[:, :, :to * w] = dxr.reshape(b, c, to * w)
        return dx, {}


class Flatten(Layer):
    kind = "flatten"

    def output_shape(self, input_shape):
        return (int(np.prod(input_shape)),)

    def forward_train(self, x):
        return x.reshape(x.shape[0], -1), x.shape

    def backward(self, cache, dy):
        return dy.reshape(cache), {}


class Dense(Layer):
    kind = "dense"
    param_names = ("W", "b")

    def __init__(self, in_features, units, rng=None, trainable=True):
        super().__init__(trainable)
        if min(in_features, units) < 1:
            raise ValueError("dense sizes must be positive")
        self.in_features, self.units = in_features, units
        rng = rng if rng is not None else np.random.default_rng(0)
        self.params["W"] = glorot_uniform(rng, (units, in_features), in_features, units)
        self.params["b"] = np.zeros(units)

    def spec(self):
        return {**super().spec(), "in_features": self.in_features, "units": self.units}

    def output_shape(self, input_shape):
        if tuple(input_shape) != (self.in_features,):
            raise ValueError(f"dense expects ({self.in_features},), got {tuple(input_shape)}")
        return (self.units,)

    def forward_train(self, x):
        return x @ self.params["W"].T + self.params["b"], x

    def backward(self, x, dy):
        grads = {"W": dy.T @ x, "b": dy.sum(axis=0)}
        return dy @ self.params["W"], grads


class Sigmoid(Layer):
    kind = "sigmoid"

    def forward_train(self, x):
        y = 0.5 * (1.0 + np.tanh(0.5 * x))
        return y, y

    def backward(self, y, dy):
        return dy * y * (1.0 - y), {}


class ReLU(Layer):
    kind = "relu"

    def forward_train(self, x):
        mask = x > 0
        return np.where(mask, x, 0.0), mask

    def backward(self, mask, dy):
        return dy * mask, {}


def recurrent_relu_step(s_t, h_prev, W_in, W_hh, b):
    """One step of h_t = max(0, W_in s_t + W_hh h_prev + b)."""
    s_t, h_prev = np.asarray(s_t, dtype=np.float64), np.asarray(h_prev, dtype=np.float64)
    if W_in.shape[1] != s_t.shape[-1] or W_hh.shape[1] != h_prev.shape[-1] or b.shape[0] != W_in.shape[0]:
        raise ValueError("recurrent step shape mismatch")
    return np.maximum(0.0, s_t @ W_in.T + h_prev @ W_hh.T + b)


class RecurrentReLU(Layer):
    """Plain ReLU recurrence with identity-initialised recurrent weights.

    Input is (B, D, T); output is the final hidden state (B, H), or the whole
    hidden sequence (B, H, T) when ``return_sequences`` is set.
    """
    kind = "recurrent_relu"
    param_names = ("W_in", "W_hh", "b")

    def __init__(self, in_features, units, return_sequences=False, scale=1.0,
                 input_std=0.001, rng=None, trainable=True):
        super().__init__(trainable)
        if min(in_features, units) < 1:
            raise ValueError("recurrent sizes must be positive")
        self.in_features, self.units = in_features, units
        self.return_sequences, self.scale, self.input_std = return_sequences, scale, input_std
        rng = rng if rng is not None else np.random.default_rng(0)
        self.params["W_in"] = rng.normal(0.0, input_std, size=(units, in_features))
        self.params["W_hh"] = scale * np.eye(units)
        self.params["b"] = np.zeros(units)

    def spec(self):
        return {**super().spec(), "in_features": self.in_features, "units": self.units,
                "return_sequences": self.return_sequences, "scale": self.scale,
                "input_std": self.input_std}

    def output_shape(self, input_shape):
        d, t = input_shape
        if d != self.in_features:
            raise ValueError(f"recurrent layer expects {self.in_features} features, got {d}")
        return (self.units, t) if self.return_sequences else (self.units,)

    def forward_train(self, x):
        b, d, t = x.shape
        xt = x.transpose(2, 0, 1)                                   # (T, B, D)
        z_in = xt @ self.params["W_in"].T + self.params["b"]        # (T, B, H)
        w_hh_t = self.params["W_hh"].T
        hs = np.empty((t, b, self.units))
        h = np.zeros((b, self.units))
        for i in range(t):
            h = np.maximum(0.0, z_in[i] + h @ w_hh_t)
            hs[i] = h
        y = hs.transpose(1, 2, 0) if self.return_sequences else hs[-1]
        return y, (xt, hs)

    def backward(self, cache, dy):
        xt, hs = cache
        t, b, _ = xt.shape
        if self.return_sequences:
            dseq = dy.transpose(2, 0, 1)
        else:
            dseq = None
        w_hh = self.params["W_hh"]
        dz = np.empty_like(hs)
        dw_hh = np.zeros_like(w_hh)
        dh_next = np.zeros((b, self.units))
        for i in range(t - 1, -1, -1):
            dh = dh_next
            if dseq is not None:
                dh = dh + dseq[i]
            elif i == t - 1:
                dh = dh + dy
            da = dh * (hs[i] > 0)
            dz[i] = da
            if i > 0:
                dw_hh += da.T @ hs[i - 1]
            dh_next = da @ w_hh
        grads = {"W_in": np.tensordot(dz, xt, axes=([0, 1], [0, 1])),
                 "W_hh": dw_hh,
                 "b": dz.sum(axis=(0, 1))}
        dx = (dz @ self.params["W_in"]).transpose(1, 2, 0)
        return dx, grads


class Softmax(Layer):
    kind = "softmax"

    def forward_train(self, x):
        z = x - x.max(axis=1, keepdims=True)
        e = np.exp(z)
        p = e / e.sum(axis=1, keepdims=True)
        return p, p

    def backward(self, p, dy):
        return p * (dy - (dy * p).sum(axis=1, keepdims=True)), {}


LAYER_TYPES = {cls.kind: cls for cls in (Conv1D, MaxPool1D, Flatten, Dense, Sigmoid, ReLU,
                                         RecurrentReLU, Softmax)}


def layer_from_spec(spec: dict) -> Layer:
    spec = dict(spec)
    kind = spec.pop("kind")
    if kind not in LAYER_TYPES:
        raise ValueError(f"unknown layer kind {kind!r}")
    return LAYER_TYPES[kind](**spec)
