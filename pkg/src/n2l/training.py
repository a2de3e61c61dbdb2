"""Per-image overfitting: Adam + cosine-annealed learning rate on MSE."""

from __future__ import annotations

import csv
import hashlib
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor, backward, mse_loss
from .errors import ContractViolation, TrainingDiverged
from .model import CodecModel, ModelConfig
from .noise import build_pyramid, positional_embedding

PSNR_CAP_DB = 100.0


@dataclass
class TrainConfig:
    steps: int = 10000
    lr_init: float = 8e-3
    lr_final: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    eval_every: int = 100
    init_seed: int = 0

    def __post_init__(self):
        if self.steps < 1:
            raise ContractViolation("steps must be >= 1")
        if self.lr_final > self.lr_init:
            raise ContractViolation("lr_final must not exceed lr_init")


@dataclass
class EvalPoint:
    step: int
    mse: float
    psnr_db: float
    lr: float


@dataclass
class TrainReport:
    points: list[EvalPoint] = field(default_factory=list)
    final_mse: float = math.nan
    final_psnr_db: float = math.nan
    wall_seconds: float = 0.0

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["step", "mse", "psnr", "lr"])
            for p in self.points:
                writer.writerow([p.step, f"{p.mse:.10e}", f"{p.psnr_db:.6f}", f"{p.lr:.8e}"])


def psnr(a: Tensor, b: Tensor) -> float:
    """PSNR in dB between [0,1]-normalized images, capped at 100 dB."""
    if a.shape != b.shape:
        raise ContractViolation(f"psnr: shape mismatch {a.shape} vs {b.shape}")
    return psnr_from_mse(float(np.mean((a.data - b.data) ** 2)))


def psnr_from_mse(mse: float) -> float:
    if mse < 1e-10:
        return PSNR_CAP_DB
    return 10.0 * math.log10(1.0 / mse)


def cosine_lr(step: int, config: TrainConfig) -> float:
    """Annealed rate at ``step``; hits lr_init at 0 and lr_final at the end."""
    if not 0 <= step < config.steps:
        raise ContractViolation(f"step {step} outside [0, {config.steps})")
    if config.steps == 1:
        return config.lr_init
    span = config.lr_init - config.lr_final
    return config.lr_final + 0.5 * span * (1.0 + math.cos(math.pi * step / (config.steps - 1)))


class Adam:
    """Bias-corrected Adam over a fixed parameter list, updating in place."""

    def __init__(self, params: list[Tensor], names: list[str], config: TrainConfig):
        self.params = params
        self.names = names
        self.config = config
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in params]
        self.v = [np.zeros_like(p.data) for p in params]

    def step(self, lr: float, step_index: int = -1) -> None:
        c = self.config
        self.t += 1
        bc1 = 1.0 - c.beta1**self.t
        bc2 = 1.0 - c.beta2**self.t
        for p, name, m, v in zip(self.params, self.names, self.m, self.v):
            g = p.grad
            if not np.all(np.isfinite(g)):
                raise TrainingDiverged(
                    f"non-finite gradient in '{name}' at step {step_index}"
                )
            m *= c.beta1
            m += (1.0 - c.beta1) * g
            v *= c.beta2
            v += (1.0 - c.beta2) * (g * g)
            p.data -= lr * (m / bc1) / (np.sqrt(v / bc2) + c.eps)


def _digest(arr: np.ndarray) -> str:
    return hashlib.sha256(arr.tobytes()).hexdigest()


def overfit(
    image: Tensor,
    config: ModelConfig,
    train: TrainConfig,
    seed: int,
    no_gpp: bool = False,
    inputs: tuple[Tensor, Tensor] | None = None,
) -> tuple[CodecModel, TrainReport]:
    """Fit a fresh model to one [1,3,H,W] image in [0,1].

    The noise pyramid and position features are built once, before the
    loop (pass ``inputs`` to reuse precomputed ones). Fully deterministic
    in (image, config, seed, train.init_seed, train.steps).
    """
    if image.shape[0] != 1 or image.shape[1] != 3:
        raise ContractViolation(f"image must be [1,3,H,W], got {image.shape}")
    h, w = image.shape[2], image.shape[3]
    if inputs is None:
        fused = build_pyramid(seed, config, h, w).fused
        pe = positional_embedding(h, w, config.pe_dims)
    else:
        fused, pe = inputs
    noise_digest = _digest(fused.data)

    model = CodecModel(config, init_seed=train.init_seed, no_gpp=no_gpp)
    opt = Adam(model.parameters(), model.parameter_names(), train)
    report = TrainReport()

    start = time.perf_counter()
    for step in range(train.steps):
        lr = cosine_lr(step, train)
        recon = model.forward(fused, pe)
        loss = mse_loss(recon, image)
        mse = loss.item()
        if not math.isfinite(mse):
            raise TrainingDiverged(f"non-finite loss at step {step}")
        if step % train.eval_every == 0:
            report.points.append(EvalPoint(step, mse, psnr_from_mse(mse), lr))
        backward(loss)
        opt.step(lr, step)
        model.zero_grads()

    final = mse_loss(model.forward(fused, pe), image).item()
    report.final_mse = final
    report.final_psnr_db = psnr_from_mse(final)
    report.points.append(EvalPoint(train.steps, final, report.final_psnr_db, 0.0))
    report.wall_seconds = time.perf_counter() - start

    if _digest(fused.data) != noise_digest:
        raise RuntimeError("noise tensor was mutated during training")
    return model, report
