"""Little-endian binary readers/writers with a trailing CRC32, shared by the
model and attribution file formats."""

from __future__ import annotations

import struct
import zlib
from pathlib import Path

import numpy as np

from .errors import ParseError


class Writer:
    def __init__(self):
        self._parts: list[bytes] = []

    def raw(self, data: bytes) -> None:
        self._parts.append(data)

    def u32(self, value: int) -> None:
        self.raw(struct.pack("<I", value))

    def f64(self, value: float) -> None:
        self.raw(struct.pack("<d", value))

    def string(self, text: str) -> None:
        data = text.encode("ascii")
        self.u32(len(data))
        self.raw(data)

    def f64_array(self, arr: np.ndarray) -> None:
        arr = np.asarray(arr, dtype=np.float64)
        self.u32(arr.ndim)
        for dim in arr.shape:
            self.u32(dim)
        self.raw(arr.astype("<f8").tobytes())

    def payload(self) -> bytes:
        return b"".join(self._parts)


class Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise ParseError(
                f"truncated: needed {n} more bytes, have {len(self.blob) - self.pos}",
                offset=len(self.blob),
            )
        data = self.blob[self.pos : self.pos + n]
        self.pos += n
        return data

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def f64(self) -> float:
        return struct.unpack("<d", self.take(8))[0]

    def string(self, max_len: int = 1 << 16) -> str:
        at = self.pos
        n = self.u32()
        if n > max_len:
            raise ParseError(f"unreasonable string length {n}", offset=at)
        return self.take(n).decode("ascii")

    def f64_array(self, max_elems: int = 1 << 28) -> np.ndarray:
        at = self.pos
        ndim = self.u32()
        if ndim > 8:
            raise ParseError(f"unreasonable array rank {ndim}", offset=at)
        shape = tuple(self.u32() for _ in range(ndim))
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        if count > max_elems:
            raise ParseError(f"unreasonable array size {shape}", offset=at)
        data = self.take(8 * count)
        return np.frombuffer(data, dtype="<f8").reshape(shape).astype(np.float64)

    def expect_done(self) -> None:
        if self.pos != len(self.blob):
            raise ParseError(
                f"{len(self.blob) - self.pos} trailing bytes after payload", offset=self.pos
            )


def write_file(path, payload: bytes) -> None:
    crc = zlib.crc32(payload) & 0xFFFFFFFF
    Path(path).write_bytes(payload + struct.pack("<I", crc))


def read_file(path, magic: bytes) -> Reader:
    """Open a CRC-terminated file, verify checksum and magic, return a Reader."""
    blob = Path(path).read_bytes()
    if len(blob) < len(magic) + 4:
        raise ParseError("file too short to hold magic and checksum", offset=len(blob))
    payload, tail = blob[:-4], blob[-4:]
    expected = struct.unpack("<I", tail)[0]
    actual = zlib.crc32(payload) & 0xFFFFFFFF
    if actual != expected:
        raise ParseError(
            f"CRC mismatch: stored {expected:#010x}, computed {actual:#010x}",
            offset=len(blob) - 4,
        )
    reader = Reader(payload)
    found = reader.take(len(magic))
    if found != magic:
        raise ParseError(f"bad magic: expected {magic!r}, found {found!r}", offset=0)
    return reader
