"""End-to-end encode and decode pipelines.

Encoding overfits a model to one image, searches quantization steps, and
serializes the weights. Decoding uses nothing but the stream bytes: the
header seed regenerates the identical noise tensor, the payload restores
the weights, one forward pass reconstructs the image.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor
from .bitstream import (
    FLAG_NO_GPP,
    FLAG_SINGLE_SCALE,
    MeshResult,
    StreamHeader,
    deserialize,
    mesh_search,
    serialize,
    stream_bpp,
)
from .errors import ConfigurationError
from .imageio import u8_from_unit
from .model import CodecModel, get_setting, single_scale_config
from .noise import build_pyramid, check_seed, positional_embedding
from .training import TrainConfig, TrainReport, overfit, psnr_from_mse

MIN_IMAGE_DIM = 8


def default_lambda(h: int, w: int) -> float:
    """Distortion weight scaling the pixel count so J = bpp + lam*mse balances."""
    return 0.02 * h * w


@dataclass
class EncodeResult:
    stream: bytes
    header: StreamHeader
    bpp: float
    pre_quant_psnr_db: float
    post_quant_mse: float
    post_quant_psnr_db: float
    report: TrainReport
    seconds: float


@dataclass
class DecodeResult:
    header: StreamHeader
    image_u8: np.ndarray
    recon: Tensor
    model: CodecModel
    fused_noise: Tensor
    position: Tensor
    seconds: float


def encode_image(
    image: Tensor,
    setting_id: int = 0,
    seed: int = 0,
    init_seed: int = 0,
    steps: int = 10000,
    lam: float | None = None,
    no_gpp: bool = False,
    single_scale: bool = False,
    eval_every: int = 100,
) -> EncodeResult:
    start = time.perf_counter()
    check_seed(seed)
    check_seed(init_seed)
    h, w = image.shape[2], image.shape[3]
    if h < MIN_IMAGE_DIM or w < MIN_IMAGE_DIM:
        raise ConfigurationError(f"image {h}x{w} below minimum {MIN_IMAGE_DIM}x{MIN_IMAGE_DIM}")
    config = get_setting(setting_id)
    if single_scale:
        config = single_scale_config(config)

    fused = build_pyramid(seed, config, h, w).fused
    pe = positional_embedding(h, w, config.pe_dims)
    train = TrainConfig(steps=steps, eval_every=eval_every, init_seed=init_seed)
    model, report = overfit(image, config, train, seed, no_gpp=no_gpp, inputs=(fused, pe))

    if lam is None:
        lam = default_lambda(h, w)
    mesh: MeshResult = mesh_search(model, image, fused, pe, lam)

    flags = (FLAG_NO_GPP if no_gpp else 0) | (FLAG_SINGLE_SCALE if single_scale else 0)
    header = StreamHeader(
        setting_id=setting_id,
        flags=flags,
        height=h,
        width=w,
        seed=seed,
        init_seed=init_seed,
        gpp_step_exp=mesh.gpp_step_exp,
        synth_step_exp=mesh.synth_step_exp,
    )
    stream = serialize(header, mesh.qmodel)
    return EncodeResult(
        stream=stream,
        header=header,
        bpp=stream_bpp(len(stream), h, w),
        pre_quant_psnr_db=report.final_psnr_db,
        post_quant_mse=mesh.mse,
        post_quant_psnr_db=psnr_from_mse(mesh.mse),
        report=report,
        seconds=time.perf_counter() - start,
    )


def decode_stream(data: bytes) -> DecodeResult:
    start = time.perf_counter()
    header, qmodel = deserialize(data)
    config = get_setting(header.setting_id)
    if header.single_scale:
        config = single_scale_config(config)
    model = CodecModel(config, init_seed=None, no_gpp=header.no_gpp, requires_grad=False)
    model.load_group_values(*qmodel.dequantized())
    fused = build_pyramid(header.seed, config, header.height, header.width).fused
    pe = positional_embedding(header.height, header.width, config.pe_dims)
    recon = model.forward(fused, pe)
    image_u8 = u8_from_unit(recon.data)
    return DecodeResult(
        header=header,
        image_u8=image_u8,
        recon=recon,
        model=model,
        fused_noise=fused,
        position=pe,
        seconds=time.perf_counter() - start,
    )
