"""Versioned binary container for model parameters.

Layout (all integers little-endian)::

    b"GPNCKPT"                      magic
    uint32   format version
    uint32   metadata length, then UTF-8 JSON metadata
    uint32   array count
    per array:
        uint16 name length, UTF-8 name
        uint8  ndim, uint32 * ndim shape
        float64 * prod(shape)       IEEE-754 little-endian

Arrays are written in sorted name order and metadata with sorted keys, so
saving the same parameters twice produces identical bytes.
"""

from __future__ import annotations

import io
import json
import struct
from pathlib import Path

import numpy as np

from .errors import CheckpointError, CorruptCheckpoint, VersionMismatch

MAGIC = b"GPNCKPT"
VERSION = 1


def dumps(arrays: dict, meta: dict) -> bytes:
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", VERSION))
    blob = json.dumps(meta, sort_keys=True).encode("utf-8")
    buf.write(struct.pack("<I", len(blob)))
    buf.write(blob)
    buf.write(struct.pack("<I", len(arrays)))
    for name in sorted(arrays):
        arr = np.asarray(arrays[name], dtype="<f8")
        raw = name.encode("utf-8")
        buf.write(struct.pack("<H", len(raw)))
        buf.write(raw)
        buf.write(struct.pack("<B", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        buf.write(np.ascontiguousarray(arr).tobytes())
    return buf.getvalue()


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, count: int) -> bytes:
        if self.pos + count > len(self.data):
            raise CorruptCheckpoint("checkpoint is truncated")
        out = self.data[self.pos:self.pos + count]
        self.pos += count
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def loads(data: bytes):
    """Inverse of :func:`dumps`; returns ``(arrays, meta)``."""
    r = _Reader(data)
    if len(data) < len(MAGIC) or r.take(len(MAGIC)) != MAGIC:
        raise CorruptCheckpoint("bad magic string, not a GPNCKPT file")
    (version,) = r.unpack("<I")
    if version != VERSION:
        raise VersionMismatch(f"checkpoint format version {version}, expected {VERSION}")
    (meta_len,) = r.unpack("<I")
    try:
        meta = json.loads(r.take(meta_len).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptCheckpoint(f"unreadable metadata: {exc}") from None
    (count,) = r.unpack("<I")
    arrays = {}
    for _ in range(count):
        (name_len,) = r.unpack("<H")
        name = r.take(name_len).decode("utf-8")
        (ndim,) = r.unpack("<B")
        shape = r.unpack(f"<{ndim}I")
        size = int(np.prod(shape)) if ndim else 1
        arrays[name] = np.frombuffer(r.take(8 * size), dtype="<f8").reshape(shape).astype(np.float64)
    if r.pos != len(data):
        raise CorruptCheckpoint("trailing bytes after last array")
    return arrays, meta


def write_arrays(path, arrays: dict, meta: dict) -> None:
    try:
        Path(path).write_bytes(dumps(arrays, meta))
    except OSError as exc:
        raise CheckpointError(f"cannot write checkpoint {path}: {exc}") from exc


def read_arrays(path):
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    return loads(data)


def save_checkpoint(model, path, extra: dict = None) -> None:
    """Write ``model`` (a :class:`MatrixTspGpn` or :class:`TwoStageGpn`)."""
    meta = {"kind": model.kind, "config": model.config()}
    if extra:
        meta["extra"] = extra
    write_arrays(path, {k: t.data for k, t in model.params.items()}, meta)


def load_checkpoint(path):
    from .solver import MatrixTspGpn, TwoStageGpn

    arrays, meta = read_arrays(path)
    kinds = {MatrixTspGpn.kind: MatrixTspGpn, TwoStageGpn.kind: TwoStageGpn}
    cls = kinds.get(meta.get("kind"))
    if cls is None:
        raise CorruptCheckpoint(f"unknown model kind {meta.get('kind')!r}")
    return cls.from_config(meta["config"], arrays)
