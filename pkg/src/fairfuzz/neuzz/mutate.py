"""Gradient-guided fixed-length mutation and insert/delete variant-length mutation."""
from __future__ import annotations

import warnings

import numpy as np

from fairfuzz.neuzz.model import SIGN_EPS, ByteGradient

STEP_SIZES = (1, 16, 64, 255)
MAX_BLOCK = 16


class MutationWarning(UserWarning):
    pass


def top_positions(grad: ByteGradient, k: int) -> np.ndarray:
    """Up to ``k`` byte positions by descending ``|gradient|``, ties by index.

    Positions whose gradient is (numerically) zero are never selected.
    """
    mag = np.abs(np.asarray(grad.values, dtype=np.float64))
    live = np.flatnonzero(mag >= SIGN_EPS)
    order = live[np.lexsort((live, -mag[live]))]
    return order[:k]


def mutate_fixed_length(data: bytes, grad: ByteGradient, k: int) -> list[bytes]:
    """Step the top-``k`` gradient bytes along the gradient sign.

    For every prefix of the ranked positions and every step size in
    ``STEP_SIZES`` the prefix bytes move by ``sign * step`` (clamped to
    0..255).  Variants identical to ``data`` are dropped.
    """
    if len(grad) != len(data):
        raise ValueError(f"gradient has {len(grad)} entries for a {len(data)}-byte input")
    if k > len(data):
        warnings.warn(f"k={k} exceeds input length {len(data)}; clamped", MutationWarning, stacklevel=2)
        k = len(data)
    if k <= 0:
        return []
    base = np.frombuffer(data, dtype=np.uint8).astype(np.int16)
    positions = top_positions(grad, k)
    direction = np.sign(np.asarray(grad.values, dtype=np.float64))[positions].astype(np.int16)
    out = []
    for end in range(1, len(positions) + 1):
        idx = positions[:end]
        for step in STEP_SIZES:
            buf = base.copy()
            buf[idx] = np.clip(buf[idx] + direction[:end] * step, 0, 255)
            variant = buf.astype(np.uint8).tobytes()
            if variant != data:
                out.append(variant)
    return out


def mutate_variant_length(
    data: bytes, rng: np.random.Generator, n_insert: int = 4, n_delete: int = 4
) -> list[tuple[str, bytes]]:
    """Insert or delete random blocks of 1..16 bytes.

    Returns ``(op, variant)`` pairs with ``op`` in ``{"insert", "delete"}``;
    every variant's length differs from ``len(data)``.
    """
    if not data:
        raise ValueError("variant-length mutation needs a non-empty input")
    out: list[tuple[str, bytes]] = []
    for _ in range(n_insert):
        size = int(rng.integers(1, MAX_BLOCK + 1))
        at = int(rng.integers(0, len(data) + 1))
        block = rng.integers(0, 256, size=size, dtype=np.uint8).tobytes()
        out.append(("insert", data[:at] + block + data[at:]))
    if len(data) < 2:
        if n_delete:
            warnings.warn("1-byte input: insertion only", MutationWarning, stacklevel=2)
        return out
    for _ in range(n_delete):
        size = int(rng.integers(1, min(MAX_BLOCK, len(data) - 1) + 1))
        at = int(rng.integers(0, len(data) - size + 1))
        out.append(("delete", data[:at] + data[at + size:]))
    return out
