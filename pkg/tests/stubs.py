"""Test doubles shared by several test modules."""
from __future__ import annotations

from fairfuzz.coverage import CoverageMap, Scheme, record_edge_uniform
from fairfuzz.executor import ExecResult
from fairfuzz.targets import ExecStatus


class StubSession:
    """Pretends to run a target: covers edge ``i`` when byte ``i`` is odd."""

    def __init__(self):
        self.execs = 0
        self.seen: list[bytes] = []

    def execute(self, data: bytes) -> ExecResult:
        self.execs += 1
        self.seen.append(data)
        cov = CoverageMap(Scheme.COLLISION_FREE)
        for i, b in enumerate(data[:256]):
            if b & 1:
                record_edge_uniform(cov, i)
        return ExecResult(ExecStatus.OK, cov, 1)
