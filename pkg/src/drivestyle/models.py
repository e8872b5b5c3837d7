"""The five network architectures, the training loop and neuron inspection."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .nn import (Conv1D, Dense, Flatten, MaxPool1D, Model, RecurrentReLU, Sigmoid, Softmax,
                 clip_by_global_norm, layer_from_spec, rmsprop, sgd)
from .transform import FeatureMatrix

log = logging.getLogger(__name__)

ARCHITECTURES = ("CNN", "NoPoolCNN", "IRNN", "PretrainIRNN", "StackedIRNN")
RECURRENT = ("IRNN", "PretrainIRNN", "StackedIRNN")
# layers of a CNN up to and including the third convolution's sigmoid
CNN_PREFIX = 8


def _check_input(input_shape, min_frames):
    rows, frames = input_shape
    if frames < min_frames:
        raise ValueError(f"need at least {min_frames} frames, got {frames}")
    return int(rows), int(frames)


def build_cnn(input_shape=(35, 128), num_classes=50, seed=0, pooling=True) -> Model:
    """conv(32x5) - pool - conv(64x3) - pool - conv(64x3) - dense(128) - dense(128) - softmax.

    Sigmoid follows every convolution and hidden dense layer.
    """
    rows, frames = _check_input(input_shape, 24 if pooling else 9)
    rng = np.random.default_rng(seed)
    layers = [Conv1D(rows, 32, 5, rng=rng), Sigmoid()]
    if pooling:
        layers.append(MaxPool1D(2))
    layers += [Conv1D(32, 64, 3, rng=rng), Sigmoid()]
    if pooling:
        layers.append(MaxPool1D(2))
    layers += [Conv1D(64, 64, 3, rng=rng), Sigmoid(), Flatten()]
    t = frames - 4
    if pooling:
        t = ((t // 2 - 2) // 2) - 2
    else:
        t = t - 4
    layers += [Dense(64 * t, 128, rng=rng), Sigmoid(), Dense(128, 128, rng=rng), Sigmoid(),
               Dense(128, num_classes, rng=rng), Softmax()]
    return Model(layers, (rows, frames), num_classes, name="CNN" if pooling else "NoPoolCNN")


def build_nopool_cnn(input_shape=(35, 128), num_classes=50, seed=0) -> Model:
    return build_cnn(input_shape, num_classes, seed, pooling=False)


def build_irnn(input_shape=(35, 128), num_classes=50, hidden=100, seed=0, scale=1.0) -> Model:
    """One identity-initialised ReLU recurrent layer read at its final step, then softmax."""
    rows, frames = _check_input(input_shape, 1)
    rng = np.random.default_rng(seed)
    layers = [RecurrentReLU(rows, hidden, scale=scale, rng=rng),
              Dense(hidden, num_classes, rng=rng), Softmax()]
    return Model(layers, (rows, frames), num_classes, name="IRNN")


def build_stacked_irnn(input_shape=(35, 128), num_classes=50, hidden=100, seed=0, scale=1.0) -> Model:
    rows, frames = _check_input(input_shape, 1)
    rng = np.random.default_rng(seed)
    layers = [RecurrentReLU(rows, hidden, return_sequences=True, scale=scale, rng=rng),
              RecurrentReLU(hidden, hidden, scale=scale, rng=rng),
              Dense(hidden, num_classes, rng=rng), Softmax()]
    return Model(layers, (rows, frames), num_classes, name="StackedIRNN")


def build_pretrain_irnn(cnn: Model, num_classes=None, hidden=100, seed=0, scale=1.0) -> Model:
    """An IRNN reading the frozen feature map of a trained CNN's third convolution."""
    kinds = [l.kind for l in cnn.layers[:CNN_PREFIX]]
    if cnn.name != "CNN" or kinds != ["conv1d", "sigmoid", "maxpool1d", "conv1d", "sigmoid",
                                      "maxpool1d", "conv1d", "sigmoid"]:
        raise ValueError("build_pretrain_irnn needs a model built by build_cnn")
    num_classes = cnn.num_classes if num_classes is None else num_classes
    prefix = []
    for layer in cnn.layers[:CNN_PREFIX]:
        spec = {**layer.spec(), "trainable": False}
        clone = layer_from_spec(spec)
        for k, v in layer.params.items():
            clone.params[k] = v.copy()
        prefix.append(clone)
    channels, steps = cnn.shapes()[CNN_PREFIX - 1]
    rng = np.random.default_rng(seed)
    layers = prefix + [RecurrentReLU(channels, hidden, scale=scale, rng=rng),
                       Dense(hidden, num_classes, rng=rng), Softmax()]
    return Model(layers, cnn.input_shape, num_classes, name="PretrainIRNN", norm=cnn.norm)


BUILDERS = {"CNN": build_cnn, "NoPoolCNN": build_nopool_cnn, "IRNN": build_irnn,
            "StackedIRNN": build_stacked_irnn}


@dataclass
class TrainConfig:
    batch_size: int = 128
    epochs: int = 30
    seed: int = 0
    optimizer: str | None = None        # None: SGD-Nesterov for CNNs, RMSProp for RNNs
    learning_rate: float | None = None  # None: 0.05 (SGD) or 1e-6 (RMSProp)
    decay: float = 1e-6
    momentum: float = 0.9
    rho: float = 0.9
    epsilon: float = 1e-6
    clip_norm: float | None = None
    standardize: bool = True

    def __post_init__(self):
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch_size and epochs must be >= 1")

    def make_optimizer(self, architecture: str):
        kind = self.optimizer or ("rmsprop" if architecture in RECURRENT else "sgd_nesterov")
        if kind == "sgd_nesterov":
            lr = 0.05 if self.learning_rate is None else self.learning_rate
            return sgd(lr, decay=self.decay, momentum=self.momentum)
        if kind == "rmsprop":
            lr = 1e-6 if self.learning_rate is None else self.learning_rate
            return rmsprop(lr, rho=self.rho, epsilon=self.epsilon)
        raise ValueError(f"unknown optimizer {kind!r}")


def as_array(matrices) -> np.ndarray:
    if isinstance(matrices, np.ndarray):
        return matrices.astype(np.float64, copy=False)
    return np.stack([m.values if isinstance(m, FeatureMatrix) else np.asarray(m) for m in matrices])


def row_standardization(x: np.ndarray):
    """Per-row mean and std over all matrices and columns; zero std becomes 1."""
    mean = x.mean(axis=(0, 2))
    std = x.std(axis=(0, 2))
    std[std == 0] = 1.0
    return mean, std


def train(model: Model, matrices, labels, cfg: TrainConfig | None = None):
    """Mini-batch training in place. Returns ``(model, history)``."""
    cfg = cfg or TrainConfig()
    x = as_array(matrices)
    y = np.asarray(labels, dtype=np.int64)
    if len(x) == 0:
        raise ValueError("empty training set")
    if len(x) != len(y):
        raise ValueError("matrices and labels differ in length")
    if y.min() < 0 or y.max() >= model.num_classes:
        raise ValueError(f"labels must lie in [0, {model.num_classes})")
    if cfg.standardize and model.norm is None:
        model.norm = row_standardization(x)
    opt = cfg.make_optimizer(model.name)
    params = model.trainable_params
    rng = np.random.default_rng(cfg.seed)
    history = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(x))
        total, correct = 0.0, 0
        for start in range(0, len(x), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            loss, grads, probs = model.loss_and_grads(x[idx], y[idx])
            if cfg.clip_norm:
                clip_by_global_norm(grads, cfg.clip_norm)
            opt.step(params, grads)
            total += loss * len(idx)
            correct += int((probs.argmax(axis=1) == y[idx]).sum())
        if not all(np.all(np.isfinite(p)) for p in params.values()):
            raise FloatingPointError(f"non-finite parameters after epoch {epoch + 1}")
        rec = {"epoch": epoch + 1, "loss": total / len(x), "accuracy": correct / len(x)}
        history.append(rec)
        log.info("%s epoch %d loss %.4f acc %.3f", model.name, rec["epoch"], rec["loss"], rec["accuracy"])
    return model, history


def predict_proba(model: Model, matrices) -> np.ndarray:
    x = as_array(matrices)
    if len(x) == 0:
        return np.empty((0, model.num_classes))
    return model.forward(x)


def recurrent_layer_indices(model: Model) -> list[int]:
    return [i for i, l in enumerate(model.layers) if l.kind == "recurrent_relu"]


def top_activations(model: Model, matrices, k: int = 5, layer: int | None = None, segment_ids=None):
    """For each hidden unit of a recurrent layer, the k segments with the largest final-step activation.

    ``layer`` defaults to the last recurrent layer (the second one of a
    StackedIRNN). Returns one list per neuron of ``(segment_id, activation)``
    sorted by activation descending, ties broken by segment id.
    """
    x = as_array(matrices)
    if len(x) == 0:
        raise ValueError("no segments given")
    if k > len(x):
        raise ValueError(f"k={k} exceeds the number of segments ({len(x)})")
    if layer is None:
        rec = recurrent_layer_indices(model)
        if not rec:
            raise ValueError("model has no recurrent layer")
        layer = rec[-1]
    acts = model.activations(x, layer)
    if acts.ndim == 3:  # sequence output: read the final step
        acts = acts[:, :, -1]
    ids = np.arange(len(x)) if segment_ids is None else np.asarray(segment_ids)
    result = []
    for j in range(acts.shape[1]):
        order = np.lexsort((ids, -acts[:, j]))[:k]
        result.append([(ids[i].item(), float(acts[i, j])) for i in order])
    return result
