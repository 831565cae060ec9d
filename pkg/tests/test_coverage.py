from __future__ import annotations

import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fairfuzz.coverage import (
    MAP_SIZE,
    MAX_BLOCKS,
    CoverageError,
    CoverageMap,
    Scheme,
    block_label,
    count_covered,
    decode_uniform_edge,
    merge,
    record_edge,
    record_edge_uniform,
    uniform_edge_id,
    xor_hash_index,
)


def xor_oracle(prev: int, cur: int) -> int:
    # bit-by-bit reimplementation of cur ^ (prev >> 1) over 16 bits
    out = 0
    for bit in range(16):
        c = (cur >> bit) & 1
        p = (prev >> (bit + 1)) & 1
        out |= (c ^ p) << bit
    return out


@given(st.integers(0, MAP_SIZE - 1), st.integers(0, MAP_SIZE - 1))
def test_xor_index_matches_bitwise_oracle(prev, cur):
    assert xor_hash_index(prev, cur) == xor_oracle(prev, cur)


def test_first_xor_collision_by_brute_force():
    # scan pairs in lexicographic order for two distinct ones sharing a slot
    seen = {}
    first = None
    for prev, cur in itertools.product(range(4), range(4)):
        idx = xor_hash_index(prev, cur)
        if idx in seen:
            first = (seen[idx], (prev, cur))
            break
        seen[idx] = (prev, cur)
    assert first == ((0, 0), (1, 0))
    assert xor_hash_index(0, 0) == xor_hash_index(1, 0) == 0


def test_block_label_frozen_values():
    # regression values; the C runtime's copy is checked against real runs elsewhere
    assert [block_label(b, 0) for b in range(4)] == [0, 14096, 52717, 65174]
    assert [block_label(b, 0xC0FFEE) for b in range(4)] == [28647, 5549, 41474, 53301]
    assert all(0 <= block_label(b, s) < MAP_SIZE for b in range(MAX_BLOCKS) for s in (0, 7))
    assert len({block_label(b, 12345) for b in range(MAX_BLOCKS)}) > 240


@given(st.integers(-1, MAX_BLOCKS - 1), st.integers(0, MAX_BLOCKS - 1))
def test_uniform_id_roundtrip(prev, cur):
    assert decode_uniform_edge(uniform_edge_id(prev, cur)) == (prev, cur)


def test_uniform_ids_are_injective_over_all_pairs():
    ids = {uniform_edge_id(p, c) for p in range(-1, MAX_BLOCKS) for c in range(MAX_BLOCKS)}
    assert len(ids) == (MAX_BLOCKS + 1) * MAX_BLOCKS
    assert max(ids) < MAP_SIZE


@pytest.mark.parametrize("prev,cur", [(-2, 0), (0, MAX_BLOCKS), (MAX_BLOCKS, 0), (0, -1)])
def test_uniform_id_rejects_out_of_range(prev, cur):
    with pytest.raises(CoverageError):
        uniform_edge_id(prev, cur)


def test_record_edge_uniform_bounds():
    cm = CoverageMap(Scheme.COLLISION_FREE)
    with pytest.raises(IndexError):
        record_edge_uniform(cm, MAP_SIZE)
    record_edge_uniform(cm, 5)
    assert cm.edges() == frozenset({5})


def test_record_edge_saturates_at_255():
    cm = CoverageMap(Scheme.XOR_HASH)
    for _ in range(300):
        record_edge(cm, 3, 9)
    assert cm.cells[xor_hash_index(3, 9)] == 255
    assert count_covered(cm) == 1


maps = st.lists(st.tuples(st.integers(0, MAP_SIZE - 1), st.integers(1, 255)), max_size=30).map(
    lambda cells: _mk(cells)
)


def _mk(cells, scheme=Scheme.COLLISION_FREE):
    cm = CoverageMap(scheme)
    for i, v in cells:
        cm.cells[i] = v
    return cm


@given(maps, maps)
def test_merge_commutes(a, b):
    assert merge(a, b) == merge(b, a)


@given(maps, maps, maps)
def test_merge_associates(a, b, c):
    assert merge(merge(a, b), c) == merge(a, merge(b, c))


@given(maps)
def test_merge_idempotent(a):
    assert merge(a, a) == a


@given(maps, maps)
def test_merge_covers_union(a, b):
    assert merge(a, b).edges() == a.edges() | b.edges()


def test_merge_rejects_scheme_mismatch():
    with pytest.raises(CoverageError):
        merge(CoverageMap(Scheme.XOR_HASH), CoverageMap(Scheme.COLLISION_FREE))


@given(maps, st.sampled_from(list(Scheme)))
def test_serialization_roundtrip(a, scheme):
    a = CoverageMap(scheme, a.cells)
    back = CoverageMap.from_bytes(a.to_bytes())
    assert back == a and back.scheme is scheme


def test_from_bytes_rejects_garbage():
    good = CoverageMap(Scheme.XOR_HASH).to_bytes()
    for bad in (b"", b"NOTAMAP!" + good[8:], good[:-1], good[:8] + b"\x07" + good[9:]):
        with pytest.raises(CoverageError):
            CoverageMap.from_bytes(bad)


def test_save_load(tmp_path):
    a = _mk([(1, 2), (400, 1)], Scheme.XOR_HASH)
    a.save(tmp_path / "m")
    assert CoverageMap.load(tmp_path / "m") == a


def test_empty_map_counts_zero():
    assert count_covered(CoverageMap(Scheme.COLLISION_FREE)) == 0
    assert np.count_nonzero(CoverageMap(Scheme.XOR_HASH).covered_mask()) == 0
