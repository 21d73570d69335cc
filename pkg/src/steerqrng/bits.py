"""Packed bit sequences with a small JSON sidecar on disk."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ValidationError

ORIGINS = ("raw", "extracted", "seed")


@dataclass(frozen=True, eq=False)
class BitStream:
    """Bits packed MSB-first into bytes; ``length`` counts valid bits.

    The byte buffer is read-only, so a constructed stream is sealed. Unused
    low-order bits of the final byte are always zero.
    """

    data: np.ndarray
    length: int
    origin: str = "raw"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.origin not in ORIGINS:
            raise ValidationError(f"origin must be one of {ORIGINS}, got {self.origin!r}")
        buf = np.ascontiguousarray(np.asarray(self.data, dtype=np.uint8).ravel())
        if self.length < 0 or buf.size != (self.length + 7) // 8:
            raise ValidationError(f"{buf.size} bytes cannot hold exactly {self.length} bits")
        tail = self.length % 8
        if tail and buf[-1] & (0xFF >> tail):
            buf = buf.copy()
            buf[-1] &= (0xFF << (8 - tail)) & 0xFF
        if buf.flags.writeable:
            buf = buf.copy()
            buf.setflags(write=False)
        object.__setattr__(self, "data", buf)

    @classmethod
    def from_bits(cls, bits, origin: str = "raw", meta: dict | None = None) -> "BitStream":
        bits = np.asarray(bits).ravel()
        if bits.size and (bits.min() < 0 or bits.max() > 1):
            raise ValidationError("bits must be 0 or 1")
        return cls(np.packbits(bits.astype(np.uint8)), int(bits.size), origin, dict(meta or {}))

    @classmethod
    def from_bytes(cls, raw: bytes, length: int | None = None, origin: str = "raw") -> "BitStream":
        buf = np.frombuffer(raw, dtype=np.uint8)
        length = 8 * buf.size if length is None else length
        if length > 8 * buf.size:
            raise ValidationError(f"only {8 * buf.size} bits available, {length} requested")
        return cls(buf[: (length + 7) // 8], length, origin)

    def __len__(self) -> int:
        return self.length

    def __eq__(self, other) -> bool:
        return (isinstance(other, BitStream) and self.length == other.length
                and np.array_equal(self.data, other.data))

    __hash__ = None

    def to_bits(self) -> np.ndarray:
        return np.unpackbits(self.data, count=self.length)

    def head(self, nbits: int) -> "BitStream":
        if nbits > self.length:
            raise ValidationError(f"stream has only {self.length} bits")
        return BitStream(self.data[: (nbits + 7) // 8], nbits, self.origin, dict(self.meta))

    def __xor__(self, other: "BitStream") -> "BitStream":
        if self.length != other.length:
            raise ValidationError("XOR needs streams of equal length")
        return BitStream(self.data ^ other.data, self.length, self.origin, dict(self.meta))

    def save(self, path) -> None:
        path = Path(path)
        self.data.tofile(path)
        side = {"length": self.length, "origin": self.origin, "bit_order": "msb-first", **self.meta}
        sidecar(path).write_text(json.dumps(side, indent=2))

    @classmethod
    def load(cls, path, origin: str | None = None) -> "BitStream":
        path = Path(path)
        raw = path.read_bytes()
        side = sidecar(path)
        if side.exists():
            info = json.loads(side.read_text())
            meta = {k: v for k, v in info.items() if k not in ("length", "origin", "bit_order")}
            stream = cls.from_bytes(raw, int(info["length"]), origin or info.get("origin", "raw"))
            return BitStream(stream.data, stream.length, stream.origin, meta)
        return cls.from_bytes(raw, None, origin or "raw")


def sidecar(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def concat(streams, origin: str | None = None) -> BitStream:
    streams = list(streams)
    if not streams:
        return BitStream(np.zeros(0, np.uint8), 0, origin or "raw")
    if all(s.length % 8 == 0 for s in streams[:-1]):
        data = np.concatenate([s.data for s in streams])
        return BitStream(data, sum(s.length for s in streams), origin or streams[0].origin)
    return BitStream.from_bits(np.concatenate([s.to_bits() for s in streams]),
                               origin or streams[0].origin)


class BitWriter:
    """Accumulates packed chunks of arbitrary bit length into one stream."""

    def __init__(self):
        self._chunks: list[np.ndarray] = []
        self._pending = np.zeros(0, dtype=np.uint8)  # < 8 unpacked leftover bits
        self.length = 0

    def write_packed(self, data: np.ndarray, nbits: int) -> None:
        data = np.asarray(data, dtype=np.uint8).ravel()
        if nbits % 8 == 0 and not self._pending.size:
            self._chunks.append(data[: nbits // 8].copy())
        else:
            bits = np.concatenate([self._pending, np.unpackbits(data, count=nbits)])
            whole = bits.size - bits.size % 8
            if whole:
                self._chunks.append(np.packbits(bits[:whole]))
            self._pending = bits[whole:]
        self.length += nbits

    def write_bits(self, bits) -> None:
        bits = np.asarray(bits, dtype=np.uint8).ravel()
        self.write_packed(np.packbits(bits), bits.size)

    def getvalue(self, origin: str = "raw", meta: dict | None = None) -> BitStream:
        parts = list(self._chunks)
        if self._pending.size:
            parts.append(np.packbits(self._pending))
        data = np.concatenate(parts) if parts else np.zeros(0, np.uint8)
        return BitStream(data, self.length, origin, dict(meta or {}))
