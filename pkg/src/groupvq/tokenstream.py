"""Bit-packed serialization of token grids.

Wire layout (all multi-byte integers little-endian):

    magic   4 bytes  ``MGVQ``
    version 1 byte   (= 1)
    groups  uint16
    K       uint32   codebook size
    grid_h  uint16
    grid_w  uint16
    orig_h  uint16   source image height before any center crop
    orig_w  uint16
    payload          indices in group-major then row-major raster order,
                     ceil(log2 K) bits each, MSB-first within bytes,
                     zero-padded to a byte boundary

The payload length is fully determined by the header, so a mismatched body is
detected before any index is produced.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .quantizer import TokenMap

__all__ = [
    "StreamHeader",
    "bits_per_index",
    "payload_nbytes",
    "pack_indices",
    "unpack_indices",
    "write_stream",
    "read_stream",
]

STREAM_MAGIC = b"MGVQ"
STREAM_VERSION = 1
_HEADER = struct.Struct("<4sBHIHHHH")


@dataclass(frozen=True)
class StreamHeader:
    """Fixed-size descriptor preceding the packed payload."""

    groups: int
    codebook_size: int
    grid_h: int
    grid_w: int
    orig_h: int
    orig_w: int

    def __post_init__(self):
        for name in ("groups", "codebook_size", "grid_h", "grid_w", "orig_h", "orig_w"):
            if getattr(self, name) < 1:
                raise ValueError(f"stream header field {name} must be >= 1")

    def to_bytes(self) -> bytes:
        return _HEADER.pack(
            STREAM_MAGIC,
            STREAM_VERSION,
            self.groups,
            self.codebook_size,
            self.grid_h,
            self.grid_w,
            self.orig_h,
            self.orig_w,
        )

    @classmethod
    def from_bytes(cls, raw: bytes) -> "StreamHeader":
        if len(raw) < _HEADER.size:
            raise ValueError(f"token stream: truncated header ({len(raw)} bytes)")
        magic, version, groups, k, gh, gw, oh, ow = _HEADER.unpack(raw[: _HEADER.size])
        if magic != STREAM_MAGIC:
            raise ValueError(f"token stream: bad magic {magic!r}")
        if version != STREAM_VERSION:
            raise ValueError(
                f"token stream: version {version} unsupported (this build reads {STREAM_VERSION})"
            )
        return cls(groups=groups, codebook_size=k, grid_h=gh, grid_w=gw, orig_h=oh, orig_w=ow)

    @property
    def index_count(self) -> int:
        return self.groups * self.grid_h * self.grid_w

    @property
    def payload_nbytes(self) -> int:
        return payload_nbytes(self.codebook_size, self.groups, self.grid_h, self.grid_w)


def bits_per_index(codebook_size: int) -> int:
    """ceil(log2 K); 0 for the degenerate single-entry codebook."""
    if codebook_size < 1:
        raise ValueError("codebook size must be >= 1")
    return (codebook_size - 1).bit_length()


def payload_nbytes(codebook_size: int, groups: int, grid_h: int, grid_w: int) -> int:
    bits = bits_per_index(codebook_size) * groups * grid_h * grid_w
    return (bits + 7) // 8


def pack_indices(tokens: TokenMap, codebook_size: int) -> bytes:
    """Pack a token map into the fixed-width MSB-first payload."""
    idx = np.asarray(tokens.indices, dtype=np.int64).reshape(-1)
    if idx.size and idx.max() >= codebook_size:
        raise ValueError(
            f"pack_indices: index {int(idx.max())} out of range for codebook size {codebook_size}"
        )
    width = bits_per_index(codebook_size)
    if width == 0:
        return b""
    shifts = np.arange(width - 1, -1, -1, dtype=np.int64)
    bits = ((idx[:, None] >> shifts[None, :]) & 1).astype(np.uint8).reshape(-1)
    return np.packbits(bits).tobytes()


def unpack_indices(payload: bytes, header: StreamHeader) -> TokenMap:
    """Inverse of :func:`pack_indices`; validates length and index range."""
    expected = header.payload_nbytes
    if len(payload) != expected:
        raise ValueError(
            f"token stream: payload is {len(payload)} bytes, header implies {expected}"
        )
    width = bits_per_index(header.codebook_size)
    count = header.index_count
    if width == 0:
        idx = np.zeros(count, dtype=np.int32)
    else:
        bits = np.unpackbits(np.frombuffer(payload, dtype=np.uint8))[: count * width]
        weights = (1 << np.arange(width - 1, -1, -1, dtype=np.int64))
        idx = (bits.reshape(count, width).astype(np.int64) @ weights).astype(np.int32)
        if idx.size and idx.max() >= header.codebook_size:
            raise ValueError(
                f"token stream: decoded index {int(idx.max())} out of range "
                f"for codebook size {header.codebook_size}"
            )
    return TokenMap(idx.reshape(header.groups, header.grid_h, header.grid_w))


def write_stream(path: str | Path, header: StreamHeader, tokens: TokenMap) -> int:
    """Serialize header plus payload; returns the payload byte count."""
    if tokens.groups != header.groups or (tokens.grid_h, tokens.grid_w) != (
        header.grid_h,
        header.grid_w,
    ):
        raise ValueError(
            f"write_stream: token grid {tokens.groups}x{tokens.grid_h}x{tokens.grid_w} "
            f"does not match header {header.groups}x{header.grid_h}x{header.grid_w}"
        )
    payload = pack_indices(tokens, header.codebook_size)
    with open(path, "wb") as fh:
        fh.write(header.to_bytes())
        fh.write(payload)
    return len(payload)


def read_stream(path: str | Path) -> tuple[StreamHeader, TokenMap]:
    raw = Path(path).read_bytes()
    header = StreamHeader.from_bytes(raw)
    payload = raw[_HEADER.size :]
    return header, unpack_indices(payload, header)
