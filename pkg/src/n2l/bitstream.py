"""Wire format: header, quantized weights, Exp-Golomb entropy coding.

Layout (version 1), all multi-byte fields big-endian:

    offset  size  field
    0       4     magic "N2L1"
    4       1     version (= 1)
    5       1     setting id
    6       1     flags (bit 0: direct no-predictor model,
                         bit 1: single-scale noise)
    7       2     image height
    9       2     image width
    11      2     noise seed
    13      2     weight init seed
    15      1     predictor-group step exponent (signed; step = 2**exp)
    16      1     synthesis-group step exponent

After the header come two payloads: the predictor parameter group, then
the synthesis group. Each group codes its tensors flattened in canonical
order, every value zigzag-mapped and written as an order-0 Exp-Golomb
codeword, then the group is padded with zero bits to a byte boundary.
The rate used during the quantization search is the length produced by
this same encoder, so estimated and real sizes always agree.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import (
    ContractViolation,
    MalformedBitstream,
    TrainingDiverged,
    UnsupportedFormat,
)
from .model import CodecModel, ModelConfig, parameter_layout

MAGIC = b"N2L1"
VERSION = 1
FLAG_NO_GPP = 0x01
FLAG_SINGLE_SCALE = 0x02

_HEADER_FMT = ">4sBBBHHHHbb"
HEADER_BYTES = struct.calcsize(_HEADER_FMT)

STEP_EXP_MIN = -16
STEP_EXP_MAX = 0
MESH_EXPONENTS = tuple(range(-12, -3))
QUANT_LIMIT = 1 << 23


@dataclass(frozen=True)
class StreamHeader:
    setting_id: int
    flags: int
    height: int
    width: int
    seed: int
    init_seed: int
    gpp_step_exp: int
    synth_step_exp: int

    @property
    def no_gpp(self) -> bool:
        return bool(self.flags & FLAG_NO_GPP)

    @property
    def single_scale(self) -> bool:
        return bool(self.flags & FLAG_SINGLE_SCALE)

    def pack(self) -> bytes:
        for exp in (self.gpp_step_exp, self.synth_step_exp):
            if not STEP_EXP_MIN <= exp <= STEP_EXP_MAX:
                raise ContractViolation(f"step exponent {exp} outside [{STEP_EXP_MIN},{STEP_EXP_MAX}]")
        return struct.pack(
            _HEADER_FMT, MAGIC, VERSION, self.setting_id, self.flags,
            self.height, self.width, self.seed, self.init_seed,
            self.gpp_step_exp, self.synth_step_exp,
        )

    @classmethod
    def unpack(cls, data: bytes) -> "StreamHeader":
        if len(data) < HEADER_BYTES:
            raise MalformedBitstream("stream shorter than header", bit_offset=8 * len(data))
        magic, version, setting_id, flags, h, w, seed, init_seed, ge, se = struct.unpack(
            _HEADER_FMT, data[:HEADER_BYTES]
        )
        if magic != MAGIC:
            raise UnsupportedFormat(f"bad magic {magic!r}")
        if version != VERSION:
            raise UnsupportedFormat(f"unsupported version {version}")
        header = cls(setting_id, flags, h, w, seed, init_seed, ge, se)
        for exp in (ge, se):
            if not STEP_EXP_MIN <= exp <= STEP_EXP_MAX:
                raise MalformedBitstream(f"step exponent {exp} out of range", bit_offset=15 * 8)
        return header


class BitWriter:
    """MSB-first bit sink."""

    def __init__(self):
        self._bytes = bytearray()
        self._acc = 0
        self._nbits = 0

    def write_bits(self, value: int, count: int) -> None:
        self._acc = (self._acc << count) | (value & ((1 << count) - 1))
        self._nbits += count
        while self._nbits >= 8:
            self._nbits -= 8
            self._bytes.append((self._acc >> self._nbits) & 0xFF)
        self._acc &= (1 << self._nbits) - 1

    def align(self) -> None:
        """Pad with zero bits to the next byte boundary."""
        if self._nbits:
            self.write_bits(0, 8 - self._nbits)

    @property
    def bit_length(self) -> int:
        return 8 * len(self._bytes) + self._nbits

    def getvalue(self) -> bytes:
        if self._nbits:
            raise ContractViolation("unaligned writer; call align() first")
        return bytes(self._bytes)


class BitReader:
    """MSB-first bit source tracking its offset for diagnostics."""

    def __init__(self, data: bytes, base_bit_offset: int = 0):
        self._data = data
        self._pos = 0
        self._base = base_bit_offset

    @property
    def bit_offset(self) -> int:
        return self._base + self._pos

    def read_bit(self) -> int:
        if self._pos >= 8 * len(self._data):
            raise MalformedBitstream("truncated stream", bit_offset=self.bit_offset)
        byte = self._data[self._pos >> 3]
        bit = (byte >> (7 - (self._pos & 7))) & 1
        self._pos += 1
        return bit

    def read_bits(self, count: int) -> int:
        value = 0
        for _ in range(count):
            value = (value << 1) | self.read_bit()
        return value

    def align(self) -> None:
        self._pos = (self._pos + 7) & ~7

    def remaining_bits(self) -> int:
        return 8 * len(self._data) - self._pos


def zigzag(v: int) -> int:
    """0,-1,1,-2,2,... -> 0,1,2,3,4,..."""
    return 2 * v if v >= 0 else -2 * v - 1


def unzigzag(u: int) -> int:
    return u // 2 if u % 2 == 0 else -(u + 1) // 2


def exp_golomb_encode(values, writer: BitWriter) -> None:
    """Order-0 Exp-Golomb: v -> floor(log2(v+1)) zeros then binary(v+1)."""
    for v in values:
        n = int(v) + 1
        width = n.bit_length()
        writer.write_bits(0, width - 1)
        writer.write_bits(n, width)


def exp_golomb_decode(reader: BitReader, count: int) -> list[int]:
    values = []
    for _ in range(count):
        zeros = 0
        while reader.read_bit() == 0:
            zeros += 1
        n = (1 << zeros) | reader.read_bits(zeros)
        values.append(n - 1)
    return values


@dataclass
class QuantizedModel:
    """Integer weights on the per-group lattices step = 2**exp."""

    gpp: list[np.ndarray]
    synth: list[np.ndarray]
    gpp_step_exp: int
    synth_step_exp: int

    def dequantized(self) -> tuple[list[np.ndarray], list[np.ndarray]]:
        gd = 2.0**self.gpp_step_exp
        sd = 2.0**self.synth_step_exp
        return [q * gd for q in self.gpp], [q * sd for q in self.synth]


def _quantize_group(params, exp: int):
    delta = 2.0**exp
    out = []
    for p in params:
        scaled = np.abs(p.data) / delta
        q = (np.sign(p.data) * np.floor(scaled + 0.5)).astype(np.int64)
        if np.any(np.abs(q) >= QUANT_LIMIT):
            raise TrainingDiverged(
                f"quantized weight magnitude >= 2^23 at step 2^{exp}; training diverged"
            )
        out.append(q)
    return out


def quantize_model(model: CodecModel, gpp_step_exp: int, synth_step_exp: int) -> QuantizedModel:
    """Round weights half-away-from-zero onto the per-group lattices."""
    for exp in (gpp_step_exp, synth_step_exp):
        if not STEP_EXP_MIN <= exp <= STEP_EXP_MAX:
            raise ContractViolation(f"step exponent {exp} outside [{STEP_EXP_MIN},{STEP_EXP_MAX}]")
    return QuantizedModel(
        gpp=_quantize_group(model.gpp_params, gpp_step_exp),
        synth=_quantize_group(model.synth_params, synth_step_exp),
        gpp_step_exp=gpp_step_exp,
        synth_step_exp=synth_step_exp,
    )


def _encode_group(arrays) -> bytes:
    writer = BitWriter()
    for q in arrays:
        exp_golomb_encode((zigzag(int(v)) for v in q.ravel()), writer)
    writer.align()
    return writer.getvalue()


def serialize(header: StreamHeader, qmodel: QuantizedModel) -> bytes:
    """header || predictor group || synthesis group, each group byte-padded."""
    return header.pack() + _encode_group(qmodel.gpp) + _encode_group(qmodel.synth)


def _decode_group(reader: BitReader, specs):
    arrays = []
    for spec in specs:
        vals = exp_golomb_decode(reader, spec.size)
        arrays.append(
            np.array([unzigzag(v) for v in vals], dtype=np.int64).reshape(spec.shape)
        )
    reader.align()
    return arrays


def deserialize(data: bytes):
    """Parse a stream into (header, QuantizedModel).

    Raises UnsupportedFormat for bad magic/version and MalformedBitstream
    (with a bit offset) for truncation or length mismatches.
    """
    header = StreamHeader.unpack(data)
    config = _config_from_header(header)
    gpp_specs, synth_specs = parameter_layout(config, header.no_gpp)
    reader = BitReader(data[HEADER_BYTES:], base_bit_offset=8 * HEADER_BYTES)
    gpp = _decode_group(reader, gpp_specs)
    synth = _decode_group(reader, synth_specs)
    if reader.remaining_bits() >= 8:
        raise MalformedBitstream(
            f"{reader.remaining_bits() // 8} trailing bytes after payload",
            bit_offset=reader.bit_offset,
        )
    qmodel = QuantizedModel(gpp, synth, header.gpp_step_exp, header.synth_step_exp)
    return header, qmodel


def _config_from_header(header: StreamHeader) -> ModelConfig:
    from .model import get_setting, single_scale_config

    config = get_setting(header.setting_id)
    if header.single_scale:
        config = single_scale_config(config)
    return config


def stream_bpp(stream_bytes: int, h: int, w: int) -> float:
    return 8.0 * stream_bytes / (h * w)


@dataclass
class MeshResult:
    qmodel: QuantizedModel
    gpp_step_exp: int
    synth_step_exp: int
    bpp: float
    mse: float
    stream_bytes: int


def mesh_search(model: CodecModel, image, fused, pe, lam: float) -> MeshResult:
    """Exhaustive search over the 9x9 per-group step-exponent grid.

    Every candidate is dequantized, run through the full forward pass, and
    measured as J = bpp + lam * mse with bpp from the real coded length.
    Ties break toward fewer bits, then the smaller predictor-exponent
    magnitude, then the smaller synthesis-exponent magnitude.
    """
    h, w = image.shape[2], image.shape[3]
    scratch = CodecModel(
        model.config, init_seed=None, no_gpp=model.no_gpp, requires_grad=False
    )
    best = None
    best_key = None
    for ge in MESH_EXPONENTS:
        for se in MESH_EXPONENTS:
            try:
                qmodel = quantize_model(model, ge, se)
            except TrainingDiverged:
                continue
            nbytes = HEADER_BYTES + len(_encode_group(qmodel.gpp)) + len(_encode_group(qmodel.synth))
            scratch.load_group_values(*qmodel.dequantized())
            recon = scratch.forward(fused, pe)
            mse = float(np.mean((recon.data - image.data) ** 2))
            if not np.isfinite(mse):
                continue
            bpp = stream_bpp(nbytes, h, w)
            key = (bpp + lam * mse, 8 * nbytes, abs(ge), abs(se))
            if best_key is None or key < best_key:
                best_key = key
                best = MeshResult(qmodel, ge, se, bpp, mse, nbytes)
    if best is None:
        raise TrainingDiverged("no quantization candidate produced a finite reconstruction")
    return best


def stream_info(data: bytes) -> dict:
    """Header dump plus per-group coded sizes for a valid stream."""
    header = StreamHeader.unpack(data)
    config = _config_from_header(header)
    gpp_specs, synth_specs = parameter_layout(config, header.no_gpp)
    reader = BitReader(data[HEADER_BYTES:], base_bit_offset=8 * HEADER_BYTES)
    _decode_group(reader, gpp_specs)
    gpp_end = reader.bit_offset
    _decode_group(reader, synth_specs)
    synth_end = reader.bit_offset
    if reader.remaining_bits() >= 8:
        raise MalformedBitstream(
            f"{reader.remaining_bits() // 8} trailing bytes after payload",
            bit_offset=reader.bit_offset,
        )
    return {
        "magic": MAGIC.decode("ascii"),
        "version": VERSION,
        "setting_id": header.setting_id,
        "flags": header.flags,
        "no_gpp": header.no_gpp,
        "single_scale": header.single_scale,
        "height": header.height,
        "width": header.width,
        "seed": header.seed,
        "init_seed": header.init_seed,
        "gpp_step_exp": header.gpp_step_exp,
        "synth_step_exp": header.synth_step_exp,
        "header_bits": 8 * HEADER_BYTES,
        "gpp_bits": gpp_end - 8 * HEADER_BYTES,
        "synth_bits": synth_end - gpp_end,
        "total_bits": 8 * len(data),
        "bpp": stream_bpp(len(data), header.height, header.width),
    }
