"""Seed-deterministic Gaussian noise pyramid and positional features.

The generator is pinned bit-exactly so an independent decoder reproduces
the same stream from the 16-bit seed in the stream header:

* state: SplitMix64 seeded with the seed zero-extended to 64 bits
  (increment 0x9E3779B97F4A7C15, mixers 0xBF58476D1CE4E5B9 and
  0x94D049BB133111EB);
* uniforms: u = (output >> 11) * 2**-53, mapped to (0, 1] as 1 - u;
* normals: consecutive uniform pairs through Box-Muller, cosine variate
  first, both variates kept.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, bilinear_upsample, concat_channels
from .errors import ConfigurationError, ContractViolation

SEED_LIMIT = 1 << 16

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


def check_seed(seed: int) -> int:
    if not 0 <= seed < SEED_LIMIT:
        raise ContractViolation(f"seed must be a 16-bit unsigned integer, got {seed}")
    return seed


def _splitmix64(seed: int, count: int) -> np.ndarray:
    """First ``count`` raw 64-bit outputs of the canonical stream."""
    with np.errstate(over="ignore"):
        idx = np.arange(1, count + 1, dtype=np.uint64)
        z = np.uint64(seed) + idx * _GAMMA
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
        return z ^ (z >> np.uint64(31))


def uniform_stream(seed: int, count: int) -> np.ndarray:
    """First ``count`` canonical uniforms on (0, 1]."""
    check_seed(seed)
    if count < 0:
        raise ContractViolation("count must be non-negative")
    raw = _splitmix64(seed, count)
    return 1.0 - (raw >> np.uint64(11)).astype(np.float64) * 2.0**-53


def gaussian_stream(seed: int, count: int) -> np.ndarray:
    """First ``count`` standard-normal variates of the canonical stream."""
    check_seed(seed)
    if count < 0:
        raise ContractViolation("count must be non-negative")
    pairs = (count + 1) // 2
    u = uniform_stream(seed, 2 * pairs)
    radius = np.sqrt(-2.0 * np.log(u[0::2]))
    theta = (2.0 * math.pi) * u[1::2]
    out = np.empty(2 * pairs)
    out[0::2] = radius * np.cos(theta)
    out[1::2] = radius * np.sin(theta)
    return out[:count]


@dataclass
class NoisePyramid:
    """Per-scale noise tensors plus their fused full-resolution form.

    ``fused`` channels [0, c) come from scale 1, [c, 2c) from scale 2, and
    so on; every coarse scale is bilinearly upsampled to scale-1 resolution.
    """

    scales: list[Tensor]
    fused: Tensor


def scale_dims(h: int, w: int, scale_index: int) -> tuple[int, int]:
    """Spatial dims of 1-based pyramid scale i: ceil(dim / 2**(i-1))."""
    f = 1 << (scale_index - 1)
    return -(-h // f), -(-w // f)


def build_pyramid(seed: int, config, h: int, w: int) -> NoisePyramid:
    """Generate the noise pyramid for ``config`` (``scales`` levels of
    ``noise_ch`` channels each) at image size h x w.

    Scales consume the canonical Gaussian stream in order, each laid out
    channel-major then row-major. The fused tensor never carries gradients.
    """
    min_dim = 1 << (config.scales - 1)
    if h < min_dim or w < min_dim:
        raise ConfigurationError(
            f"image {h}x{w} smaller than coarsest pyramid scale ({min_dim}x{min_dim})"
        )
    dims = [scale_dims(h, w, i) for i in range(1, config.scales + 1)]
    counts = [config.noise_ch * sh * sw for sh, sw in dims]
    stream = gaussian_stream(seed, sum(counts))

    scales = []
    offset = 0
    for (sh, sw), n in zip(dims, counts):
        block = stream[offset:offset + n].reshape(1, config.noise_ch, sh, sw)
        scales.append(Tensor(block))
        offset += n
    upsampled = [
        s if s.shape[2:] == (h, w) else bilinear_upsample(s, h, w) for s in scales
    ]
    fused = upsampled[0] if len(upsampled) == 1 else concat_channels(upsampled)
    return NoisePyramid(scales=scales, fused=fused)


def positional_embedding(h: int, w: int, dims: int) -> Tensor:
    """Fixed sinusoidal position features, (1, dims, h, w), values in [-1, 1].

    Channel m reads the pixel-center x coordinate when m is even and y when
    odd; frequency doubles every 4 channels and channels with m mod 4 >= 2
    are phase-shifted by pi/2. Deterministic in (h, w, dims) alone.
    """
    if dims < 1:
        raise ContractViolation("positional embedding needs at least one channel")
    xs = (np.arange(w) + 0.5) / w
    ys = (np.arange(h) + 0.5) / h
    pe = np.empty((1, dims, h, w))
    for m in range(dims):
        freq = float(1 << (m // 4)) * math.pi
        phase = 0.5 * math.pi if (m % 4) >= 2 else 0.0
        if m % 2 == 0:
            pe[0, m] = np.broadcast_to(np.sin(freq * xs + phase), (h, w))
        else:
            pe[0, m] = np.broadcast_to(np.sin(freq * ys + phase)[:, None], (h, w))
    return Tensor(pe)
