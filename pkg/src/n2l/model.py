"""Gaussian predictor and synthesis networks, plus the settings table.

Both networks are stacks of ConvNeXt-style blocks: depthwise 3x3 conv,
channel layer norm, 1x1 expansion by 2x, GELU, 1x1 projection, residual.
The canonical parameter order below is part of the wire contract:

    per network: input projection (weight, bias),
                 then each block in order
                     (dw weight, dw bias, ln gamma, ln beta,
                      pw1 weight, pw1 bias, pw2 weight, pw2 bias),
                 then head (weight, bias).

The predictor group serializes before the synthesis group. A no-GPP model
keeps its single direct network in the synthesis group and leaves the
predictor group empty.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigurationError, ContractViolation
from .noise import uniform_stream

SIGMA_LOG_MIN = -10.0
SIGMA_LOG_MAX = 10.0


@dataclass(frozen=True)
class ModelConfig:
    setting_id: int
    scales: int
    noise_ch: int
    conv_ch: int
    pe_dims: int
    gpp_blocks: int
    synth_blocks: int

    @property
    def latent_ch(self) -> int:
        return self.scales * self.noise_ch


SETTINGS = {
    0: ModelConfig(0, scales=4, noise_ch=12, conv_ch=8, pe_dims=8, gpp_blocks=3, synth_blocks=3),
    1: ModelConfig(1, scales=4, noise_ch=12, conv_ch=10, pe_dims=10, gpp_blocks=3, synth_blocks=3),
    2: ModelConfig(2, scales=4, noise_ch=12, conv_ch=12, pe_dims=12, gpp_blocks=4, synth_blocks=4),
    3: ModelConfig(3, scales=4, noise_ch=12, conv_ch=16, pe_dims=10, gpp_blocks=3, synth_blocks=3),
    4: ModelConfig(4, scales=4, noise_ch=12, conv_ch=16, pe_dims=10, gpp_blocks=4, synth_blocks=4),
}


def get_setting(setting_id: int) -> ModelConfig:
    try:
        return SETTINGS[setting_id]
    except KeyError:
        raise ConfigurationError(f"unknown setting {setting_id}, expected 0..4") from None


def single_scale_config(config: ModelConfig) -> ModelConfig:
    """Single-scale noise variant: one level carrying all latent channels."""
    return replace(config, scales=1, noise_ch=config.latent_ch)


@dataclass(frozen=True)
class ParamSpec:
    name: str
    shape: tuple[int, int, int, int]
    fan_in: int
    init: str  # "uniform" | "zero" | "one"
    is_conv_weight: bool = False

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))


def _network_specs(prefix, in_ch, width, blocks, out_ch, zero_head=False):
    specs = [
        ParamSpec(f"{prefix}.proj.weight", (width, in_ch, 1, 1), in_ch, "uniform", True),
        ParamSpec(f"{prefix}.proj.bias", (1, width, 1, 1), in_ch, "uniform"),
    ]
    for i in range(blocks):
        p = f"{prefix}.block{i}"
        specs += [
            ParamSpec(f"{p}.dw.weight", (width, 1, 3, 3), 9, "uniform", True),
            ParamSpec(f"{p}.dw.bias", (1, width, 1, 1), 9, "uniform"),
            ParamSpec(f"{p}.ln.gamma", (1, width, 1, 1), 0, "one"),
            ParamSpec(f"{p}.ln.beta", (1, width, 1, 1), 0, "zero"),
            ParamSpec(f"{p}.pw1.weight", (2 * width, width, 1, 1), width, "uniform", True),
            ParamSpec(f"{p}.pw1.bias", (1, 2 * width, 1, 1), width, "uniform"),
            ParamSpec(f"{p}.pw2.weight", (width, 2 * width, 1, 1), 2 * width, "uniform", True),
            ParamSpec(f"{p}.pw2.bias", (1, width, 1, 1), 2 * width, "uniform"),
        ]
    head_init = "zero" if zero_head else "uniform"
    specs += [
        ParamSpec(f"{prefix}.head.weight", (out_ch, width, 1, 1), width, head_init, True),
        ParamSpec(f"{prefix}.head.bias", (1, out_ch, 1, 1), width, head_init),
    ]
    return specs


def no_gpp_dimensions(config: ModelConfig) -> tuple[int, int]:
    """Width and block count of the direct noise-to-image baseline.

    Chosen so the single network's parameter count lands within 10% of the
    matched two-network model; searched deterministically over a fixed grid.
    """
    target = count_params(config)
    in_ch = config.latent_ch + config.pe_dims
    best = None
    for width in range(4, 65):
        for blocks in range(1, 13):
            n = sum(s.size for s in _network_specs("d", in_ch, width, blocks, 3))
            key = (abs(n - target), width, blocks)
            if best is None or key < best:
                best = key
    diff, width, blocks = best
    if diff > 0.10 * target:
        raise ConfigurationError(
            f"no direct-network layout within 10% of {target} parameters"
        )
    return width, blocks


def parameter_layout(config: ModelConfig, no_gpp: bool = False):
    """Canonical (predictor_specs, synthesis_specs) for a configuration."""
    c = config.latent_ch
    if no_gpp:
        width, blocks = no_gpp_dimensions(config)
        direct = _network_specs("direct", c + config.pe_dims, width, blocks, 3)
        return [], direct
    gpp = _network_specs(
        "gpp", c + config.pe_dims, config.conv_ch, config.gpp_blocks, 2 * c, zero_head=True
    )
    synth = _network_specs("synth", c, config.conv_ch, config.synth_blocks, 3)
    return gpp, synth


def count_params(config: ModelConfig, no_gpp: bool = False) -> int:
    gpp, synth = parameter_layout(config, no_gpp)
    return sum(s.size for s in gpp) + sum(s.size for s in synth)


def count_mac_per_pixel(config: ModelConfig, no_gpp: bool = False) -> float:
    """Multiply-accumulates per output pixel, counting convolutions only.

    Invariant to image size: every layer is stride-1 with shared weights.
    """
    gpp, synth = parameter_layout(config, no_gpp)
    return float(sum(s.size for s in gpp + synth if s.is_conv_weight))


def _init_values(specs, init_seed: int) -> list[np.ndarray]:
    """Fill specs in canonical order from the uniform stream of init_seed.

    Uniform entries draw size(spec) values mapped to (-b, b] with
    b = 1/sqrt(fan_in); zero/one entries consume nothing.
    """
    total = sum(s.size for s in specs if s.init == "uniform")
    stream = uniform_stream(init_seed, total)
    values = []
    offset = 0
    for s in specs:
        if s.init == "uniform":
            u = stream[offset:offset + s.size]
            offset += s.size
            bound = 1.0 / math.sqrt(s.fan_in)
            values.append(((2.0 * u - 1.0) * bound).reshape(s.shape))
        elif s.init == "one":
            values.append(np.ones(s.shape))
        else:
            values.append(np.zeros(s.shape))
    return values


class CodecModel:
    """Parameter set of the predictor + synthesis networks.

    ``init_seed=None`` allocates zeroed parameters (for loading decoded
    weights); otherwise construction is bit-reproducible in the seed.
    """

    def __init__(self, config: ModelConfig, init_seed=0, no_gpp=False, requires_grad=True):
        self.config = config
        self.no_gpp = bool(no_gpp)
        self.gpp_specs, self.synth_specs = parameter_layout(config, no_gpp)
        self.gpp_params = self._alloc(self.gpp_specs, init_seed, requires_grad)
        self.synth_params = self._alloc(self.synth_specs, init_seed, requires_grad)

    def _alloc(self, specs, init_seed, requires_grad):
        if init_seed is None:
            return [Tensor.zeros(s.shape, requires_grad=requires_grad) for s in specs]
        values = _init_values(specs, init_seed)
        return [Tensor(v, requires_grad=requires_grad) for v in values]

    def parameters(self) -> list[Tensor]:
        return self.gpp_params + self.synth_params

    def parameter_names(self) -> list[str]:
        return [s.name for s in self.gpp_specs + self.synth_specs]

    def zero_grads(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def load_group_values(self, gpp_values, synth_values) -> None:
        """Replace parameter data with arrays in canonical group order."""
        for group, params, specs in (
            (gpp_values, self.gpp_params, self.gpp_specs),
            (synth_values, self.synth_params, self.synth_specs),
        ):
            if len(group) != len(params):
                raise ContractViolation(
                    f"expected {len(params)} arrays, got {len(group)}"
                )
            for arr, p, s in zip(group, params, specs):
                arr = np.asarray(arr, dtype=np.float64).reshape(s.shape)
                p.data = np.ascontiguousarray(arr)

    def _run_stack(self, x: Tensor, params, blocks: int) -> Tensor:
        it = iter(params)
        x = ad.conv2d(x, next(it), next(it))
        width = x.shape[1]
        for _ in range(blocks):
            y = ad.conv2d(x, next(it), next(it), groups=width)
            y = ad.layer_norm(y, next(it), next(it))
            y = ad.conv2d(y, next(it), next(it))
            y = ad.gelu(y)
            y = ad.conv2d(y, next(it), next(it))
            x = ad.add(x, y)
        return ad.conv2d(x, next(it), next(it))

    def predict_gaussian(self, noise: Tensor, pe: Tensor) -> tuple[Tensor, Tensor]:
        """Map fused noise + position features to per-element (mu, sigma).

        sigma = exp(clamp(s, -10, 10)) is strictly positive everywhere.
        """
        if self.no_gpp:
            raise ContractViolation("direct model has no Gaussian predictor")
        c = self.config.latent_ch
        self._check_inputs(noise, pe)
        out = self._run_stack(
            ad.concat_channels([noise, pe]), self.gpp_params, self.config.gpp_blocks
        )
        mu = ad.slice_channels(out, 0, c)
        log_sigma = ad.clamp(ad.slice_channels(out, c, 2 * c), SIGMA_LOG_MIN, SIGMA_LOG_MAX)
        return mu, ad.exp(log_sigma)

    def synthesize(self, latent: Tensor) -> Tensor:
        """Decode a latent tensor to an RGB image in (0, 1)."""
        if self.no_gpp:
            raise ContractViolation("direct model has no separate synthesis stack")
        if latent.shape[1] != self.config.latent_ch:
            raise ContractViolation(
                f"latent must have {self.config.latent_ch} channels, got {latent.shape[1]}"
            )
        return ad.sigmoid(self._run_stack(latent, self.synth_params, self.config.synth_blocks))

    def forward(self, noise: Tensor, pe: Tensor) -> Tensor:
        """Full reconstruction pipeline from fused noise + position features."""
        if self.no_gpp:
            self._check_inputs(noise, pe)
            _, blocks = no_gpp_dimensions(self.config)
            x = ad.concat_channels([noise, pe])
            return ad.sigmoid(self._run_stack(x, self.synth_params, blocks))
        mu, sigma = self.predict_gaussian(noise, pe)
        return self.synthesize(reparameterize(mu, sigma, noise))

    def _check_inputs(self, noise, pe):
        if noise.shape[1] != self.config.latent_ch:
            raise ContractViolation(
                f"noise must have {self.config.latent_ch} channels, got {noise.shape[1]}"
            )
        if pe.shape[1] != self.config.pe_dims:
            raise ContractViolation(
                f"position features must have {self.config.pe_dims} channels, got {pe.shape[1]}"
            )


def reparameterize(mu: Tensor, sigma: Tensor, noise: Tensor) -> Tensor:
    """Latent sample mu + sigma * noise; noise is a constant."""
    if mu.shape != sigma.shape or mu.shape != noise.shape:
        raise ContractViolation(
            f"reparameterize: shapes differ {mu.shape}/{sigma.shape}/{noise.shape}"
        )
    return ad.add(mu, ad.mul(sigma, noise))
