"""A small dense-tensor neural network engine on numpy, float64 throughout."""
from .layers import (Conv1D, Dense, Flatten, Layer, MaxPool1D, RecurrentReLU, ReLU, Sigmoid,
                     Softmax, layer_from_spec, recurrent_relu_step)
from .model import Model, backward, forward, gradient_check, input_gradient_check
from .optim import (OptimizerState, clip_by_global_norm, rmsprop, rmsprop_step, sgd,
                    sgd_nesterov_step)
from .serialize import ModelFormatError, dumps_model, load_model, loads_model, save_model

__all__ = [
    "Conv1D", "Dense", "Flatten", "Layer", "MaxPool1D", "RecurrentReLU", "ReLU", "Sigmoid",
    "Softmax", "layer_from_spec", "recurrent_relu_step", "Model", "forward", "backward",
    "gradient_check", "input_gradient_check", "OptimizerState", "sgd", "rmsprop",
    "sgd_nesterov_step", "rmsprop_step", "clip_by_global_norm", "ModelFormatError",
    "save_model", "load_model", "dumps_model", "loads_model",
]
