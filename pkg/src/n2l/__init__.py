"""Noise-to-image codec: per-image overfitted networks, weights-only streams."""

from .autodiff import Tensor, backward
from .bitstream import StreamHeader, deserialize, mesh_search, serialize, stream_info
from .codec import DecodeResult, EncodeResult, decode_stream, encode_image
from .errors import (
    ConfigurationError,
    ContractViolation,
    MalformedBitstream,
    TrainingDiverged,
    UnsupportedFormat,
)
from .model import SETTINGS, CodecModel, ModelConfig, count_params, get_setting
from .noise import NoisePyramid, build_pyramid, gaussian_stream, positional_embedding
from .training import Adam, TrainConfig, TrainReport, overfit, psnr, psnr_from_mse

__all__ = [
    "Adam",
    "CodecModel",
    "ConfigurationError",
    "ContractViolation",
    "DecodeResult",
    "EncodeResult",
    "MalformedBitstream",
    "ModelConfig",
    "NoisePyramid",
    "SETTINGS",
    "StreamHeader",
    "Tensor",
    "TrainConfig",
    "TrainReport",
    "TrainingDiverged",
    "UnsupportedFormat",
    "backward",
    "build_pyramid",
    "count_params",
    "decode_stream",
    "deserialize",
    "encode_image",
    "gaussian_stream",
    "get_setting",
    "mesh_search",
    "overfit",
    "positional_embedding",
    "psnr",
    "psnr_from_mse",
    "serialize",
    "stream_info",
]

__version__ = "0.1.0"
