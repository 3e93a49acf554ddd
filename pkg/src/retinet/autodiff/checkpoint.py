"""Binary checkpoint files.

Layout (all integers little-endian)::

    magic    8 bytes   b"RTNCKPT\\0"
    version  u32
    step     u64
    rng      u32 length + UTF-8 JSON (bit-generator state)
    params   tensor table
    momentum tensor table (same names as params)
    buffers  tensor table

A tensor table is ``u32 count`` followed by, per tensor, ``u32 name length``,
UTF-8 name, ``u32 ndim``, ``ndim x u32`` dims, and raw little-endian float32
values in C order.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from ..errors import DomainError

MAGIC = b"RTNCKPT\0"
VERSION = 1


@dataclass
class Checkpoint:
    params: dict[str, np.ndarray]
    momentum: dict[str, np.ndarray] = field(default_factory=dict)
    buffers: dict[str, np.ndarray] = field(default_factory=dict)
    rng_state: dict | None = None
    step: int = 0


def _write_table(f, table: dict[str, np.ndarray]) -> None:
    f.write(struct.pack("<I", len(table)))
    for name, arr in table.items():
        raw = name.encode()
        arr = np.asarray(arr)
        f.write(struct.pack("<I", len(raw)) + raw)
        f.write(struct.pack("<I", arr.ndim))
        f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        f.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def _read_table(buf: memoryview, pos: int):
    (count,) = struct.unpack_from("<I", buf, pos)
    pos += 4
    table = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<I", buf, pos)
        pos += 4
        name = bytes(buf[pos:pos + nlen]).decode()
        pos += nlen
        (ndim,) = struct.unpack_from("<I", buf, pos)
        pos += 4
        shape = struct.unpack_from(f"<{ndim}I", buf, pos)
        pos += 4 * ndim
        size = int(np.prod(shape)) if ndim else 1
        table[name] = np.frombuffer(buf, dtype="<f4", count=size, offset=pos).reshape(shape).astype(np.float32)
        pos += 4 * size
    return table, pos


def save_checkpoint(path, ckpt: Checkpoint) -> None:
    rng = json.dumps(ckpt.rng_state, sort_keys=True).encode()
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<IQ", VERSION, ckpt.step))
        f.write(struct.pack("<I", len(rng)) + rng)
        _write_table(f, ckpt.params)
        _write_table(f, ckpt.momentum)
        _write_table(f, ckpt.buffers)


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as f:
        data = f.read()
    if data[:8] != MAGIC:
        raise DomainError(f"{path}: not a checkpoint file")
    buf = memoryview(data)
    version, step = struct.unpack_from("<IQ", buf, 8)
    if version != VERSION:
        raise DomainError(f"{path}: unsupported checkpoint version {version}")
    pos = 20
    (rlen,) = struct.unpack_from("<I", buf, pos)
    pos += 4
    rng_state = json.loads(bytes(buf[pos:pos + rlen]).decode())
    pos += rlen
    params, pos = _read_table(buf, pos)
    momentum, pos = _read_table(buf, pos)
    buffers, pos = _read_table(buf, pos)
    return Checkpoint(params, momentum, buffers, rng_state, step)


def module_checkpoint(model, rng_state=None, step: int = 0) -> Checkpoint:
    named = list(model.named_parameters())
    return Checkpoint(
        params={n: p.data for n, p in named},
        momentum={n: p.momentum_buffer for n, p in named},
        buffers={n: getattr(h, a) for n, h, a in model.named_buffers()},
        rng_state=rng_state,
        step=step,
    )


def restore_module(model, ckpt: Checkpoint, strict: bool = True) -> None:
    """Copy checkpoint values into ``model`` in place, keeping the model's dtype."""
    for name, p in model.named_parameters():
        if name not in ckpt.params:
            if strict:
                raise DomainError(f"checkpoint lacks parameter {name}")
            continue
        src = ckpt.params[name]
        if src.shape != p.data.shape:
            raise DomainError(f"{name}: checkpoint shape {src.shape} != model {p.data.shape}")
        p.data = src.astype(p.data.dtype).copy()
        if name in ckpt.momentum:
            p.momentum_buffer = ckpt.momentum[name].astype(p.data.dtype).copy()
    for name, holder, attr in model.named_buffers():
        if name in ckpt.buffers:
            setattr(holder, attr, ckpt.buffers[name].astype(getattr(holder, attr).dtype).copy())
        elif strict:
            raise DomainError(f"checkpoint lacks buffer {name}")
