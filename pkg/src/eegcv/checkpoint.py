"""Versioned binary container for named fp64 arrays (parameter checkpoints).

Layout, all integers little-endian:

    magic   4 bytes  b"KDC2"
    version u32      currently 1
    then per array, until end of file:
        name_len u32, name utf-8,
        rank     u32, dims rank * u64,
        values   fp64 little-endian, row-major

Arrays are written in sorted name order so identical contents produce
identical bytes. Loading validates structure and fails with the byte
offset; shape checks against an expected layout are the caller's job via
``expect_shapes``.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import ParseError

MAGIC = b"KDC2"
VERSION = 1

Array = np.ndarray


def save_arrays(path: str | Path, arrays: dict[str, Array]) -> None:
    chunks = [MAGIC, struct.pack("<I", VERSION)]
    for name in sorted(arrays):
        arr = np.ascontiguousarray(np.asarray(arrays[name], dtype=np.float64))
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<I", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}Q", *arr.shape) if arr.ndim else b"")
        chunks.append(arr.astype("<f8").tobytes())
    Path(path).write_bytes(b"".join(chunks))


def load_arrays(path: str | Path) -> dict[str, Array]:
    blob = Path(path).read_bytes()
    pos = 0

    def take(n: int, what: str) -> bytes:
        nonlocal pos
        if pos + n > len(blob):
            raise ParseError(f"checkpoint truncated while reading {what}", offset=pos)
        piece = blob[pos:pos + n]
        pos += n
        return piece

    if take(4, "magic") != MAGIC:
        raise ParseError(f"bad checkpoint magic, expected {MAGIC!r}", offset=0)
    version = struct.unpack("<I", take(4, "version"))[0]
    if version != VERSION:
        raise ParseError(f"unsupported checkpoint version {version}", offset=4)
    out: dict[str, Array] = {}
    while pos < len(blob):
        name_len = struct.unpack("<I", take(4, "name length"))[0]
        try:
            name = take(name_len, "name").decode("utf-8")
        except UnicodeDecodeError as e:
            raise ParseError(f"checkpoint name is not valid utf-8: {e}", offset=pos) from None
        rank = struct.unpack("<I", take(4, "rank"))[0]
        dims = struct.unpack(f"<{rank}Q", take(8 * rank, "dims")) if rank else ()
        count = int(np.prod(dims)) if rank else 1
        values = np.frombuffer(take(8 * count, f"values of {name!r}"), dtype="<f8")
        if name in out:
            raise ParseError(f"duplicate checkpoint entry {name!r}", offset=pos)
        out[name] = values.reshape(dims).astype(np.float64)
    return out


def expect_shapes(arrays: dict[str, Array], expected: dict[str, tuple[int, ...]]) -> None:
    """Validate a loaded checkpoint against the shapes a model requires."""
    missing = sorted(set(expected) - set(arrays))
    if missing:
        raise ParseError(f"checkpoint missing entries: {', '.join(missing)}")
    for name, shape in expected.items():
        if arrays[name].shape != tuple(shape):
            raise ParseError(f"checkpoint entry {name!r} has shape {arrays[name].shape}, "
                             f"expected {tuple(shape)}")
