"""leafnet: a small NumPy CNN engine and CLI for leaf-disease image classification."""

from .errors import (BadMagicError, ChecksumError, ConfigError, DatasetError, DecodeError, LabelError,
                     LeafnetError, ModelFileError, NumericError, ShapeError, TruncatedFileError,
                     UnsupportedVersionError)
from .kernels import BACKEND
from .layers import Conv2D, Dense, Flatten, MaxPool, Rescale, SoftmaxOutput
from .model import Model, build_model, model_backward, model_forward, default_model, param_count, shape_infer
from .rng import Pcg32
from .serialize import load_model, save_model
from .train import AdamState, EpochRecord, TrainingConfig, evaluate, fit, gradient_check

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "AdamState", "BadMagicError", "ChecksumError", "ConfigError", "Conv2D", "DatasetError",
    "DecodeError", "Dense", "EpochRecord", "Flatten", "LabelError", "LeafnetError", "MaxPool", "Model",
    "ModelFileError", "NumericError", "Pcg32", "Rescale", "ShapeError", "SoftmaxOutput", "TrainingConfig",
    "TruncatedFileError", "UnsupportedVersionError", "build_model", "evaluate", "fit", "gradient_check",
    "load_model", "model_backward", "model_forward", "default_model", "param_count", "save_model",
    "shape_infer",
]
