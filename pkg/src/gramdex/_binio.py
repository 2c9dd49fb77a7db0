"""Little-endian binary section helpers shared by the on-disk file formats."""

from __future__ import annotations

import struct

import numpy as np


class Writer:
    """Accumulates fixed-layout sections; output is byte-identical per input."""

    def __init__(self) -> None:
        self._parts: list[bytes] = []

    def magic(self, tag: bytes) -> None:
        if len(tag) != 4:
            raise ValueError("magic tag must be 4 bytes")
        self._parts.append(tag)

    def u8(self, value: int) -> None:
        self._parts.append(struct.pack("<B", value))

    def u32(self, value: int) -> None:
        self._parts.append(struct.pack("<I", value))

    def u64(self, value: int) -> None:
        self._parts.append(struct.pack("<Q", value))

    def f64(self, value: float) -> None:
        self._parts.append(struct.pack("<d", value))

    def text(self, value: str) -> None:
        raw = value.encode("utf-8")
        self.u32(len(raw))
        self._parts.append(raw)

    def array(self, arr: np.ndarray, dtype) -> None:
        arr = np.ascontiguousarray(arr, dtype=dtype)
        self.u64(arr.size)
        self._parts.append(arr.tobytes())

    def array2d(self, arr: np.ndarray, dtype) -> None:
        arr = np.ascontiguousarray(arr, dtype=dtype)
        if arr.ndim != 2:
            raise ValueError("expected a 2-d array")
        self.u64(arr.shape[0])
        self.u64(arr.shape[1])
        self._parts.append(arr.tobytes())

    def getvalue(self) -> bytes:
        return b"".join(self._parts)


class Reader:
    def __init__(self, data: bytes) -> None:
        self._data = data
        self._pos = 0

    def _take(self, n: int) -> bytes:
        if self._pos + n > len(self._data):
            raise ValueError("truncated file")
        chunk = self._data[self._pos : self._pos + n]
        self._pos += n
        return chunk

    def magic(self, expected: bytes) -> None:
        got = self._take(4)
        if got != expected:
            raise ValueError(f"bad file magic {got!r}, expected {expected!r}")

    def u8(self) -> int:
        return struct.unpack("<B", self._take(1))[0]

    def u32(self) -> int:
        return struct.unpack("<I", self._take(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self._take(8))[0]

    def f64(self) -> float:
        return struct.unpack("<d", self._take(8))[0]

    def text(self) -> str:
        n = self.u32()
        return self._take(n).decode("utf-8")

    def array(self, dtype) -> np.ndarray:
        n = self.u64()
        itemsize = np.dtype(dtype).itemsize
        return np.frombuffer(self._take(n * itemsize), dtype=dtype).copy()

    def array2d(self, dtype) -> np.ndarray:
        rows = self.u64()
        cols = self.u64()
        itemsize = np.dtype(dtype).itemsize
        flat = np.frombuffer(self._take(rows * cols * itemsize), dtype=dtype)
        return flat.reshape(rows, cols).copy()

    def done(self) -> bool:
        return self._pos == len(self._data)
