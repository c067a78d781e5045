"""``RHM1`` model checkpoint container.

Layout (all integers little-endian)::

    b"RHM1"  u16 version
    network block:
        u16 n_layers, u8 ndim, ndim * u32 input dims
        per layer: u8 kind code, then
            conv1d: u32 filters, u32 kernel, u32 stride
            dense:  u32 in_dim, u32 out_dim
            leaky-relu: f64 slope
            shift: f64 offset
        float32 parameter blocks in declaration order (weight, bias per layer)
    u16 n_sections
    per section: 4-byte ASCII tag, u64 payload length, payload

Section payloads written by this package use :func:`pack_arrays`.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .autodiff import LayerSpec, Network, Tensor, _infer_shapes
from .errors import FormatError
from .io import atomic_write_bytes

MAGIC = b"RHM1"
VERSION = 1
_KIND_CODES = {"conv1d": 1, "dense": 2, "leaky-relu": 3, "relu": 4, "softmax": 5, "shift": 6}
_CODE_KINDS = {v: k for k, v in _KIND_CODES.items()}
_DTYPES = {1: np.dtype("<f4"), 2: np.dtype("<f8"), 3: np.dtype("<i8")}
_DTYPE_CODES = {np.dtype(np.float32): 1, np.dtype(np.float64): 2, np.dtype(np.int64): 3}


def encode_network(net: Network) -> bytes:
    out = [struct.pack("<HB", len(net.layers), len(net.input_shape))]
    out.append(struct.pack(f"<{len(net.input_shape)}I", *net.input_shape))
    for spec in net.layers:
        out.append(struct.pack("<B", _KIND_CODES[spec.kind]))
        if spec.kind == "conv1d":
            out.append(struct.pack("<III", spec.filters, spec.kernel_size, spec.stride))
        elif spec.kind == "dense":
            out.append(struct.pack("<II", spec.in_dim, spec.out_dim))
        elif spec.kind == "leaky-relu":
            out.append(struct.pack("<d", spec.slope))
        elif spec.kind == "shift":
            out.append(struct.pack("<d", spec.offset))
    for t in net.parameters():
        out.append(np.ascontiguousarray(t.data, dtype="<f4").tobytes())
    return b"".join(out)


def decode_network(buf: bytes, offset: int = 0) -> tuple[Network, int]:
    try:
        n_layers, ndim = struct.unpack_from("<HB", buf, offset)
        offset += 3
        input_shape = struct.unpack_from(f"<{ndim}I", buf, offset)
        offset += 4 * ndim
        layers = []
        for _ in range(n_layers):
            (code,) = struct.unpack_from("<B", buf, offset)
            offset += 1
            kind = _CODE_KINDS.get(code)
            if kind is None:
                raise FormatError(f"unknown layer code {code}")
            if kind == "conv1d":
                f, k, s = struct.unpack_from("<III", buf, offset)
                offset += 12
                layers.append(LayerSpec(kind, filters=f, kernel_size=k, stride=s))
            elif kind == "dense":
                i, o = struct.unpack_from("<II", buf, offset)
                offset += 8
                layers.append(LayerSpec(kind, in_dim=i, out_dim=o))
            elif kind == "leaky-relu":
                (slope,) = struct.unpack_from("<d", buf, offset)
                offset += 8
                layers.append(LayerSpec(kind, slope=slope))
            elif kind == "shift":
                (off,) = struct.unpack_from("<d", buf, offset)
                offset += 8
                layers.append(LayerSpec(kind, offset=off))
            else:
                layers.append(LayerSpec(kind))
    except struct.error as exc:
        raise FormatError(f"truncated network manifest: {exc}") from exc
    layers = tuple(layers)
    shapes = _infer_shapes(layers, input_shape)
    params = []
    shape = tuple(input_shape)
    for idx, spec in enumerate(layers):
        group = []
        if spec.kind in ("conv1d", "dense"):
            if spec.kind == "conv1d":
                w_shape, b_len = (spec.filters, shape[0], spec.kernel_size), spec.filters
            else:
                w_shape, b_len = (spec.out_dim, spec.in_dim), spec.out_dim
            for name, shp in (("weight", w_shape), ("bias", (b_len,))):
                count = int(np.prod(shp))
                if offset + 4 * count > len(buf):
                    raise FormatError("truncated parameter block")
                data = np.frombuffer(buf, dtype="<f4", count=count, offset=offset).astype(np.float32).reshape(shp)
                offset += 4 * count
                group.append(Tensor(data, f"{idx}.{spec.kind}.{name}"))
        params.append(group)
        shape = shapes[idx]
    return Network(layers, tuple(input_shape), params, shapes), offset


def pack_arrays(arrays: dict[str, np.ndarray]) -> bytes:
    """Serialize named float32/float64/int64 arrays bit-exactly."""
    out = [struct.pack("<H", len(arrays))]
    for name, arr in arrays.items():
        arr = np.asarray(arr)
        code = _DTYPE_CODES.get(arr.dtype)
        if code is None:
            raise FormatError(f"array {name!r}: unsupported dtype {arr.dtype}")
        key = name.encode()
        out.append(struct.pack("<H", len(key)) + key)
        out.append(struct.pack("<BB", code, arr.ndim) + struct.pack(f"<{arr.ndim}Q", *arr.shape))
        out.append(np.ascontiguousarray(arr, dtype=_DTYPES[code]).tobytes())
    return b"".join(out)


def unpack_arrays(buf: bytes) -> dict[str, np.ndarray]:
    try:
        (count,) = struct.unpack_from("<H", buf, 0)
        offset = 2
        arrays = {}
        for _ in range(count):
            (klen,) = struct.unpack_from("<H", buf, offset)
            offset += 2
            name = buf[offset : offset + klen].decode()
            offset += klen
            code, ndim = struct.unpack_from("<BB", buf, offset)
            offset += 2
            shape = struct.unpack_from(f"<{ndim}Q", buf, offset)
            offset += 8 * ndim
            dt = _DTYPES[code]
            n = int(np.prod(shape)) if ndim else 1
            arrays[name] = np.frombuffer(buf, dtype=dt, count=n, offset=offset).astype(dt.newbyteorder("=")).reshape(shape)
            offset += dt.itemsize * n
    except (struct.error, KeyError, ValueError) as exc:
        raise FormatError(f"corrupt array section: {exc}") from exc
    return arrays


@dataclass
class Checkpoint:
    network: Network | None = None
    sections: dict[str, bytes] = field(default_factory=dict)


def dumps(ckpt: Checkpoint) -> bytes:
    net = ckpt.network
    body = [MAGIC, struct.pack("<H", VERSION)]
    if net is None:
        body.append(struct.pack("<HB", 0, 0))
    else:
        body.append(encode_network(net))
    body.append(struct.pack("<H", len(ckpt.sections)))
    for tag, payload in ckpt.sections.items():
        t = tag.encode("ascii")
        if len(t) != 4:
            raise FormatError(f"section tag must be 4 ASCII bytes, got {tag!r}")
        body.append(t + struct.pack("<Q", len(payload)) + payload)
    return b"".join(body)


def loads(buf: bytes) -> Checkpoint:
    if buf[:4] != MAGIC:
        raise FormatError(f"bad magic {buf[:4]!r}, expected {MAGIC!r}")
    (version,) = struct.unpack_from("<H", buf, 4)
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    offset = 6
    n_layers, _ = struct.unpack_from("<HB", buf, offset)
    if n_layers == 0:
        net, offset = None, offset + 3
    else:
        net, offset = decode_network(buf, offset)
    (n_sections,) = struct.unpack_from("<H", buf, offset)
    offset += 2
    sections = {}
    for _ in range(n_sections):
        if offset + 12 > len(buf):
            raise FormatError("truncated section header")
        tag = buf[offset : offset + 4].decode("ascii")
        (length,) = struct.unpack_from("<Q", buf, offset + 4)
        offset += 12
        if offset + length > len(buf):
            raise FormatError(f"truncated section {tag!r}")
        sections[tag] = bytes(buf[offset : offset + length])
        offset += length
    if offset != len(buf):
        raise FormatError(f"{len(buf) - offset} trailing bytes after last section")
    return Checkpoint(net, sections)


def save(path, ckpt: Checkpoint) -> None:
    atomic_write_bytes(Path(path), dumps(ckpt))


def load(path) -> Checkpoint:
    return loads(Path(path).read_bytes())
