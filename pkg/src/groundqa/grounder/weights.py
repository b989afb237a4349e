"""Binary weight file for the grounding model.

Layout (all little-endian)::

    b"LEAD"                      magic
    u32 version                  currently 1
    u32 d_in, d, h, k, max_len   header
    u32 n_tensors
    n_tensors x {
        u16 name_len, name (utf-8)
        u8  ndim, u32 dims[ndim]
        f32 data[prod(dims)]     row-major
    }
    32 bytes                     sha256 of everything above

Convolution kernels are stored as ``(width, in_channels, out_channels)``.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np

from ..errors import CorruptWeightsError, WeightShapeError, WeightsNotFoundError

MAGIC = b"LEAD"
VERSION = 1
_HEADER = struct.Struct("<4sI5II")
_DIGEST_LEN = 32
CONV_WIDTH = 3


def ffn_width(d: int) -> int:
    return 2 * d


def expected_shapes(d_in: int, d: int, h: int, k: int, max_len: int) -> dict[str, tuple[int, ...]]:
    shapes: dict[str, tuple[int, ...]] = {}
    for stream, fan_in in (("video_proj", d_in), ("text_proj", d_in)):
        shapes[f"{stream}.0.weight"] = (fan_in, d)
        shapes[f"{stream}.0.bias"] = (d,)
        shapes[f"{stream}.1.weight"] = (d, d)
        shapes[f"{stream}.1.bias"] = (d,)
    shapes["pool.weight"] = (d,)
    shapes["pos_embed"] = (max_len, d)
    shapes["type_embed"] = (2, d)
    for i in range(k):
        p = f"encoder.{i}"
        for norm in ("norm1", "norm2"):
            shapes[f"{p}.{norm}.weight"] = (d,)
            shapes[f"{p}.{norm}.bias"] = (d,)
        for proj in ("q", "k", "v", "out"):
            shapes[f"{p}.attn.{proj}.weight"] = (d, d)
            shapes[f"{p}.attn.{proj}.bias"] = (d,)
        shapes[f"{p}.ffn.0.weight"] = (d, ffn_width(d))
        shapes[f"{p}.ffn.0.bias"] = (ffn_width(d),)
        shapes[f"{p}.ffn.1.weight"] = (ffn_width(d), d)
        shapes[f"{p}.ffn.1.bias"] = (d,)
    for head, out in (("fg_head", 1), ("bd_head", 2)):
        for layer, c_out in ((0, d), (1, d), (2, out)):
            shapes[f"{head}.{layer}.weight"] = (CONV_WIDTH, d, c_out)
            shapes[f"{head}.{layer}.bias"] = (c_out,)
    shapes["saliency.video.weight"] = (d, d)
    shapes["saliency.text.weight"] = (d, d)
    return shapes


def _check_dims(d_in: int, d: int, h: int, k: int, max_len: int) -> None:
    if min(d_in, d, h, max_len) < 1 or k < 0:
        raise WeightShapeError(f"invalid header dims d_in={d_in} d={d} h={h} k={k} max_len={max_len}")
    if d % h:
        raise WeightShapeError(f"hidden size d={d} is not divisible by head count h={h}")


@dataclass(frozen=True)
class GrounderWeights:
    d_in: int
    d: int
    h: int
    k: int
    max_len: int
    tensors: Mapping[str, np.ndarray]

    def __post_init__(self):
        _check_dims(self.d_in, self.d, self.h, self.k, self.max_len)
        want = expected_shapes(self.d_in, self.d, self.h, self.k, self.max_len)
        missing = sorted(set(want) - set(self.tensors))
        extra = sorted(set(self.tensors) - set(want))
        if missing or extra:
            raise WeightShapeError(f"tensor set mismatch; missing={missing} unexpected={extra}")
        frozen = {}
        for name, shape in want.items():
            arr = np.asarray(self.tensors[name], dtype=np.float64)
            if arr.shape != shape:
                raise WeightShapeError(f"{name}: expected shape {shape}, got {arr.shape}")
            arr = arr.copy()
            arr.setflags(write=False)
            frozen[name] = arr
        object.__setattr__(self, "tensors", frozen)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tensors[name]

    @property
    def header(self) -> tuple[int, int, int, int, int]:
        return (self.d_in, self.d, self.h, self.k, self.max_len)


def init_weights(
    d_in: int, d: int, h: int, k: int, max_len: int, *, seed: int = 0, scale: float = 1.0
) -> GrounderWeights:
    """Random weights with fan-in scaling; layer-norm gains start at one."""
    rng = np.random.default_rng(seed)
    tensors = {}
    for name, shape in expected_shapes(d_in, d, h, k, max_len).items():
        if ".norm" in name:
            tensors[name] = np.ones(shape) if name.endswith("weight") else np.zeros(shape)
        elif name.endswith("bias"):
            tensors[name] = 0.1 * rng.standard_normal(shape)
        else:
            fan_in = shape[0] * shape[1] if len(shape) == 3 else shape[0]
            tensors[name] = scale * rng.standard_normal(shape) / np.sqrt(fan_in)
    # round-trip through f32 so in-memory weights equal what a file reload gives
    tensors = {n: t.astype("<f4").astype(np.float64) for n, t in tensors.items()}
    return GrounderWeights(d_in, d, h, k, max_len, tensors)


def encode_weight_file(header: tuple[int, int, int, int, int], tensors: Mapping[str, np.ndarray]) -> bytes:
    """Serialize without validating, so malformed files can be produced on purpose."""
    parts = [_HEADER.pack(MAGIC, VERSION, *header, len(tensors))]
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name], dtype="<f4")
        raw_name = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw_name)) + raw_name)
        parts.append(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes(order="C"))
    body = b"".join(parts)
    return body + hashlib.sha256(body).digest()


def save_weights(path: str | Path, weights: GrounderWeights) -> None:
    Path(path).write_bytes(encode_weight_file(weights.header, weights.tensors))


def _take(buf: memoryview, pos: int, n: int) -> tuple[memoryview, int]:
    if pos + n > len(buf):
        raise CorruptWeightsError("weight file truncated")
    return buf[pos : pos + n], pos + n


def decode_weight_file(data: bytes) -> GrounderWeights:
    if len(data) < _HEADER.size + _DIGEST_LEN:
        raise CorruptWeightsError(f"weight file too short ({len(data)} bytes)")
    magic, version, d_in, d, h, k, max_len, n_tensors = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise CorruptWeightsError(f"bad magic {magic!r}")
    if version != VERSION:
        raise CorruptWeightsError(f"unsupported weight file version {version}")
    body, digest = data[:-_DIGEST_LEN], data[-_DIGEST_LEN:]
    if hashlib.sha256(body).digest() != digest:
        raise CorruptWeightsError("weight file checksum mismatch")
    _check_dims(d_in, d, h, k, max_len)

    buf = memoryview(body)
    pos = _HEADER.size
    tensors: dict[str, np.ndarray] = {}
    for _ in range(n_tensors):
        chunk, pos = _take(buf, pos, 2)
        (name_len,) = struct.unpack("<H", chunk)
        chunk, pos = _take(buf, pos, name_len)
        try:
            name = bytes(chunk).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CorruptWeightsError("tensor name is not valid utf-8") from exc
        if name in tensors:
            raise CorruptWeightsError(f"duplicate tensor name {name!r}")
        chunk, pos = _take(buf, pos, 1)
        (ndim,) = struct.unpack("<B", chunk)
        chunk, pos = _take(buf, pos, 4 * ndim)
        shape = struct.unpack(f"<{ndim}I", chunk)
        count = int(np.prod(shape, dtype=np.int64))
        chunk, pos = _take(buf, pos, 4 * count)
        tensors[name] = np.frombuffer(chunk, dtype="<f4").reshape(shape).astype(np.float64)
    if pos != len(body):
        raise CorruptWeightsError(f"{len(body) - pos} trailing bytes after last tensor")
    return GrounderWeights(d_in, d, h, k, max_len, tensors)


def load_weights(path: str | Path) -> GrounderWeights:
    path = Path(path)
    if not path.is_file():
        raise WeightsNotFoundError(f"weight file not found: {path}")
    return decode_weight_file(path.read_bytes())
