"""Edge-coverage maps: the AFL-style XOR-hash metric and the collision-free one.

A :class:`CoverageMap` holds ``MAP_SIZE`` saturating 8-bit hit counters.  Two
indexing schemes fill it:

* ``Scheme.XOR_HASH`` -- AFL's ``cur ^ (prev >> 1)`` over random 16-bit block
  labels.  Distinct edges can land in the same cell.
* ``Scheme.COLLISION_FREE`` -- one id per ``(prev_block, cur_block)`` pair,
  ``(prev + 1) * BLOCK_STRIDE + cur`` with ``prev = -1`` on function entry.
  With at most ``BLOCK_STRIDE - 1`` blocks per target this is a bijection onto
  ``[0, MAP_SIZE)``, so no two edges share a cell.

Reports treat coverage as binary (cell > 0); hit counts are kept only because
the targets produce them.
"""
from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAP_SIZE = 1 << 16
BLOCK_STRIDE = 256
MAX_BLOCKS = BLOCK_STRIDE - 1

MAGIC = b"FFCOVMAP"
_HEADER = struct.Struct("<8sBI")


class Scheme(enum.IntEnum):
    XOR_HASH = 0
    COLLISION_FREE = 1

    @property
    def env_name(self) -> str:
        return "xor" if self is Scheme.XOR_HASH else "uniform"


class CoverageError(ValueError):
    """Scheme mismatch, bad edge id, or malformed serialized map."""


def xor_hash_index(prev: int, cur: int) -> int:
    """AFL edge index: ``(cur ^ (prev >> 1)) mod MAP_SIZE``."""
    return (cur ^ (prev >> 1)) % MAP_SIZE


def block_label(block: int, seed: int = 0) -> int:
    """Random-looking 16-bit label of a basic block (mirrors ``ff_label`` in C)."""
    x = ((block * 0x9E3779B1) & 0xFFFFFFFF) ^ (seed & 0xFFFFFFFF)
    x ^= x >> 16
    x = (x * 0x7FEB352D) & 0xFFFFFFFF
    x ^= x >> 15
    x = (x * 0x846CA68B) & 0xFFFFFFFF
    x ^= x >> 16
    return x & (MAP_SIZE - 1)


def uniform_edge_id(prev_block: int, cur_block: int) -> int:
    """Collision-free id of the edge ``prev_block -> cur_block`` (``-1`` = entry)."""
    if not (-1 <= prev_block < MAX_BLOCKS and 0 <= cur_block < MAX_BLOCKS):
        raise CoverageError(f"block ids out of range: {prev_block} -> {cur_block}")
    return (prev_block + 1) * BLOCK_STRIDE + cur_block


def decode_uniform_edge(edge_id: int) -> tuple[int, int]:
    """Inverse of :func:`uniform_edge_id`."""
    prev, cur = divmod(edge_id, BLOCK_STRIDE)
    return prev - 1, cur


@dataclass
class CoverageMap:
    scheme: Scheme = Scheme.COLLISION_FREE
    cells: np.ndarray = field(default=None, repr=False)  # type: ignore[assignment]

    def __post_init__(self):
        self.scheme = Scheme(self.scheme)
        if self.cells is None:
            self.cells = np.zeros(MAP_SIZE, dtype=np.uint8)
        else:
            self.cells = np.asarray(self.cells, dtype=np.uint8)
            if self.cells.shape != (MAP_SIZE,):
                raise CoverageError(f"map must have {MAP_SIZE} cells, got {self.cells.shape}")

    def __eq__(self, other):
        if not isinstance(other, CoverageMap):
            return NotImplemented
        return self.scheme == other.scheme and np.array_equal(self.cells, other.cells)

    def copy(self) -> "CoverageMap":
        return CoverageMap(self.scheme, self.cells.copy())

    def edges(self) -> frozenset[int]:
        """Indices of covered cells."""
        return frozenset(np.flatnonzero(self.cells).tolist())

    def covered_mask(self) -> np.ndarray:
        return self.cells > 0

    def to_bytes(self) -> bytes:
        return _HEADER.pack(MAGIC, int(self.scheme), MAP_SIZE) + self.cells.tobytes()

    @classmethod
    def from_bytes(cls, raw: bytes) -> "CoverageMap":
        if len(raw) < _HEADER.size:
            raise CoverageError("truncated coverage map header")
        magic, tag, length = _HEADER.unpack_from(raw)
        if magic != MAGIC:
            raise CoverageError(f"bad coverage map magic {magic!r}")
        if length != MAP_SIZE or len(raw) != _HEADER.size + length:
            raise CoverageError(f"coverage map length {length} / payload {len(raw) - _HEADER.size}")
        try:
            scheme = Scheme(tag)
        except ValueError:
            raise CoverageError(f"unknown scheme tag {tag}") from None
        cells = np.frombuffer(raw, dtype=np.uint8, offset=_HEADER.size).copy()
        return cls(scheme, cells)

    def save(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path) -> "CoverageMap":
        return cls.from_bytes(Path(path).read_bytes())


def _bump(cm: CoverageMap, idx: int) -> None:
    if cm.cells[idx] < 255:
        cm.cells[idx] += 1


def record_edge(cm: CoverageMap, prev: int, cur: int) -> CoverageMap:
    """Count one XOR-hash edge in place and return the map."""
    if cm.scheme is not Scheme.XOR_HASH:
        raise CoverageError("record_edge needs an XOR_HASH map")
    _bump(cm, xor_hash_index(prev, cur))
    return cm


def record_edge_uniform(cm: CoverageMap, edge_id: int) -> CoverageMap:
    """Count one collision-free edge in place and return the map."""
    if cm.scheme is not Scheme.COLLISION_FREE:
        raise CoverageError("record_edge_uniform needs a COLLISION_FREE map")
    if not 0 <= edge_id < MAP_SIZE:
        raise IndexError(f"edge id {edge_id} outside [0, {MAP_SIZE})")
    _bump(cm, edge_id)
    return cm


def count_covered(cm: CoverageMap) -> int:
    return int(np.count_nonzero(cm.cells))


def merge(a: CoverageMap, b: CoverageMap) -> CoverageMap:
    """Cell-wise maximum of two maps of the same scheme."""
    if a.scheme is not b.scheme:
        raise CoverageError(f"cannot merge {a.scheme.name} with {b.scheme.name}")
    return CoverageMap(a.scheme, np.maximum(a.cells, b.cells))

