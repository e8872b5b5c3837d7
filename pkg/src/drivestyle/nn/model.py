"""Sequential model container, forward/backward passes and gradient checking."""
from __future__ import annotations

import numpy as np

from .layers import Layer, Softmax


class Model:
    """A stack of layers ending in a softmax over ``num_classes``.

    ``norm`` holds optional per-row standardisation vectors ``(mean, std)``
    applied to raw inputs before the first layer.
    """

    def __init__(self, layers: list[Layer], input_shape, num_classes: int,
                 name: str = "", norm=None, meta=None):
        self.layers = list(layers)
        self.input_shape = tuple(int(s) for s in input_shape)
        self.num_classes = int(num_classes)
        self.name = name
        self.norm = None if norm is None else (np.asarray(norm[0], float), np.asarray(norm[1], float))
        self.meta = dict(meta or {})
        if not self.layers or not isinstance(self.layers[-1], Softmax):
            raise ValueError("model must end with a softmax layer")
        out = self.shapes()[-1]
        if out != (self.num_classes,):
            raise ValueError(f"softmax width {out} does not match num_classes={self.num_classes}")

    def shapes(self) -> list[tuple]:
        """Output shape of every layer (batch axis excluded)."""
        shapes, s = [], self.input_shape
        for layer in self.layers:
            s = layer.output_shape(s)
            shapes.append(tuple(s))
        return shapes

    @property
    def params(self) -> dict[str, np.ndarray]:
        return {f"{i}.{k}": v for i, layer in enumerate(self.layers) for k, v in layer.params.items()}

    @property
    def trainable_params(self) -> dict[str, np.ndarray]:
        return {f"{i}.{k}": v for i, layer in enumerate(self.layers) if layer.trainable
                for k, v in layer.params.items()}

    def num_params(self) -> int:
        return sum(v.size for v in self.params.values())

    def standardize(self, x):
        x = np.asarray(x, dtype=np.float64)
        if self.norm is None:
            return x
        mean, std = self.norm
        return (x - mean[:, None]) / std[:, None]

    def _check_batch(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape[1:] != self.input_shape:
            raise ValueError(f"expected input of shape {self.input_shape}, got {x.shape[1:]}")
        return x

    def forward_batch(self, x, stop: int | None = None):
        """Batched forward pass over standardised input; returns the output of layer ``stop``."""
        x = self._check_batch(x)
        layers = self.layers if stop is None else self.layers[:stop + 1]
        for layer in layers:
            x = layer.forward(x)
        if not np.all(np.isfinite(x)):
            raise FloatingPointError("non-finite activation in forward pass")
        return x

    def forward(self, x):
        """Class probabilities for one raw input or a batch of raw inputs.

        Batches are evaluated one sample at a time so that a batch result is
        bit-identical to independent single-sample calls.
        """
        x = np.asarray(x, dtype=np.float64)
        if x.shape == self.input_shape:
            return self.forward_batch(self.standardize(x)[None])[0]
        x = self._check_batch(x)
        out = np.empty((len(x), self.num_classes))
        for i in range(len(x)):
            out[i] = self.forward_batch(self.standardize(x[i])[None])[0]
        return out

    def activations(self, x, layer_index: int):
        """Output of ``layer_index`` for each raw input, evaluated per sample."""
        x = self._check_batch(x)
        return np.stack([self.forward_batch(self.standardize(xi)[None], stop=layer_index)[0]
                         for xi in x])

    def loss_and_grads(self, x, y):
        """Mean cross-entropy over a raw batch and gradients for trainable parameters."""
        x = self._check_batch(x)
        if x.shape[0] != len(y):
            raise ValueError("inputs and labels differ in length")
        y = np.asarray(y, dtype=np.int64)
        x = self.standardize(x)
        # frozen leading layers need no cache
        first = next((i for i, l in enumerate(self.layers) if l.trainable), len(self.layers))
        for layer in self.layers[:first]:
            x = layer.forward(x)
        caches = []
        for layer in self.layers[first:-1]:
            x, cache = layer.forward_train(x)
            caches.append(cache)
        logits = x
        z = logits - logits.max(axis=1, keepdims=True)
        logsum = np.log(np.exp(z).sum(axis=1))
        logp = z - logsum[:, None]
        n = len(y)
        loss = -logp[np.arange(n), y].mean()
        probs = np.exp(logp)
        if not (np.isfinite(loss) and np.all(np.isfinite(probs))):
            raise FloatingPointError("non-finite loss")
        # softmax + cross-entropy: d loss / d logits = p - onehot
        d = probs.copy()
        d[np.arange(n), y] -= 1.0
        d /= n
        grads = {}
        for i in range(len(self.layers) - 2, first - 1, -1):
            layer = self.layers[i]
            d, g = layer.backward(caches[i - first], d)
            for k, v in g.items():
                grads[f"{i}.{k}"] = v
        return loss, grads, probs

    def loss(self, x, y) -> float:
        x = self._check_batch(x)
        p = np.stack([self.forward_batch(self.standardize(xi)[None])[0] for xi in x])
        return float(-np.log(p[np.arange(len(y)), np.asarray(y)]).mean())

    def copy(self) -> "Model":
        from .serialize import model_from_dict, model_to_dict
        return model_from_dict(*model_to_dict(self))


def forward(model: Model, x):
    return model.forward(x)


def backward(model: Model, x, label):
    """Gradients of the cross-entropy loss of a single raw input."""
    _, grads, _ = model.loss_and_grads(np.asarray(x, dtype=np.float64)[None], [label])
    return grads


def _loss_single(model, x, label):
    z = model.forward_batch(x, stop=len(model.layers) - 2)[0]
    z = z - z.max()
    return float(np.log(np.exp(z).sum()) - z[label])


def gradient_check(model: Model, x, label: int, step: float = 1e-5, per_tensor: int = 200,
                   seed: int = 0, floor: float = 1e-6) -> float:
    """Max relative error between backprop and central differences.

    Up to ``per_tensor`` randomly chosen entries of every trainable tensor are
    checked. Relative error is ``|a - n| / max(|a|, |n|, floor)``; the floor sits near the
    resolution of central differences, so vanishing gradients are compared absolutely.
    """
    rng = np.random.default_rng(seed)
    x = model.standardize(np.asarray(x, dtype=np.float64))[None]
    saved_norm, model.norm = model.norm, None
    try:
        grads = backward(model, x[0], label)
        worst = 0.0
        for name, p in model.trainable_params.items():
            flat = p.reshape(-1)
            idx = np.arange(flat.size) if flat.size <= per_tensor else rng.choice(flat.size, per_tensor, replace=False)
            g = grads[name].reshape(-1)
            for j in idx:
                orig = flat[j]
                flat[j] = orig + step
                lp = _loss_single(model, x, label)
                flat[j] = orig - step
                lm = _loss_single(model, x, label)
                flat[j] = orig
                num = (lp - lm) / (2 * step)
                err = abs(g[j] - num) / max(abs(g[j]), abs(num), floor)
                worst = max(worst, err)
        return worst
    finally:
        model.norm = saved_norm


def input_gradient_check(model: Model, x, label: int, step: float = 1e-5, floor: float = 1e-6) -> float:
    """Same as :func:`gradient_check` but for the gradient with respect to the input."""
    x = np.array(x, dtype=np.float64)
    layers = model.layers
    h, caches = x[None], []
    for layer in layers[:-1]:
        h, c = layer.forward_train(h)
        caches.append(c)
    z = h - h.max(axis=1, keepdims=True)
    p = np.exp(z) / np.exp(z).sum(axis=1, keepdims=True)
    d = p.copy()
    d[0, label] -= 1.0
    for i in range(len(layers) - 2, -1, -1):
        d, _ = layers[i].backward(caches[i], d)
    d = d[0].reshape(-1)
    flat = x.reshape(-1)
    worst = 0.0
    for j in range(flat.size):
        orig = flat[j]
        flat[j] = orig + step
        lp = _loss_single(model, x[None], label)
        flat[j] = orig - step
        lm = _loss_single(model, x[None], label)
        flat[j] = orig
        num = (lp - lm) / (2 * step)
        worst = max(worst, abs(d[j] - num) / max(abs(d[j]), abs(num), floor))
    return worst
