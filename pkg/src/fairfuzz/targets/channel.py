"""Shared-memory testcase channel between executor and a persistent target.

Byte layout (little-endian), identical to ``csrc/ff_runtime.h``::

    0       status word         ChannelStatus
    4       exec status         ExecStatus
    8       input length        u32, <= PAYLOAD_CAPACITY
    16      input payload       PAYLOAD_CAPACITY bytes
    16+cap  coverage snapshot   MAP_SIZE bytes

The status word moves IDLE -> INPUT_READY -> RESULT_READY -> IDLE, or to
SHUTDOWN.  ``UNATTACHED`` (0) is the freshly zeroed region before the target
has mapped it.
"""
from __future__ import annotations

import enum
import mmap
import os
import struct
import tempfile
import time
from pathlib import Path
from typing import Callable, Container

import numpy as np

from fairfuzz.coverage import MAP_SIZE, CoverageMap, Scheme

PAYLOAD_CAPACITY = 1 << 20
OFF_STATUS = 0
OFF_EXEC = 4
OFF_LEN = 8
OFF_PAYLOAD = 16
OFF_COVERAGE = OFF_PAYLOAD + PAYLOAD_CAPACITY
CHANNEL_SIZE = OFF_COVERAGE + MAP_SIZE

_U32 = struct.Struct("<I")

SPIN_YIELDS = 256
SLEEP_S = 20e-6


class ChannelStatus(enum.IntEnum):
    UNATTACHED = 0
    IDLE = 1
    INPUT_READY = 2
    RESULT_READY = 3
    SHUTDOWN = 4


class ExecStatus(enum.IntEnum):
    OK = 0
    CRASH = 1
    HANG = 2


ALLOWED_TRANSITIONS = {
    ChannelStatus.UNATTACHED: {ChannelStatus.IDLE, ChannelStatus.SHUTDOWN},
    ChannelStatus.IDLE: {ChannelStatus.INPUT_READY, ChannelStatus.SHUTDOWN},
    ChannelStatus.INPUT_READY: {ChannelStatus.RESULT_READY, ChannelStatus.SHUTDOWN},
    ChannelStatus.RESULT_READY: {ChannelStatus.IDLE, ChannelStatus.SHUTDOWN},
    ChannelStatus.SHUTDOWN: set(),
}


class ChannelTimeout(TimeoutError):
    pass


def _shm_dir() -> str | None:
    return "/dev/shm" if os.path.isdir("/dev/shm") else None


class PersistentChannel:
    """One shared region; exactly one producer (executor) and one consumer (target).

    Set ``record=True`` to keep every status value written or observed through
    this handle in :attr:`transitions`.
    """

    def __init__(self, path, *, owner: bool = False, record: bool = False):
        self.path = Path(path)
        self.owner = owner
        self.record = record
        self.transitions: list[ChannelStatus] = []
        with open(self.path, "r+b") as fh:
            self._mm = mmap.mmap(fh.fileno(), CHANNEL_SIZE)

    @classmethod
    def create(cls, *, record: bool = False) -> "PersistentChannel":
        fd, name = tempfile.mkstemp(prefix="ff-shm-", dir=_shm_dir())
        try:
            os.ftruncate(fd, CHANNEL_SIZE)
        finally:
            os.close(fd)
        return cls(name, owner=True, record=record)

    @property
    def shm_id(self) -> str:
        return str(self.path)

    # status word -------------------------------------------------------
    @property
    def status(self) -> ChannelStatus:
        return ChannelStatus(_U32.unpack_from(self._mm, OFF_STATUS)[0])

    def set_status(self, value: ChannelStatus) -> None:
        _U32.pack_into(self._mm, OFF_STATUS, int(value))
        self._note(value)

    def _note(self, value: ChannelStatus) -> None:
        if self.record and (not self.transitions or self.transitions[-1] != value):
            self.transitions.append(ChannelStatus(value))

    def wait_for(
        self,
        wanted: Container[ChannelStatus],
        timeout: float | None = None,
        alive: Callable[[], bool] | None = None,
    ) -> ChannelStatus:
        """Spin (yielding the CPU) then sleep until the status is in ``wanted``.

        Raises :class:`ChannelTimeout` past ``timeout`` seconds, or as soon as
        ``alive()`` turns false.
        """
        deadline = None if timeout is None else time.monotonic() + timeout
        spins = 0
        while True:
            raw = _U32.unpack_from(self._mm, OFF_STATUS)[0]
            if raw in wanted:
                status = ChannelStatus(raw)
                self._note(status)
                return status
            spins += 1
            if spins < SPIN_YIELDS:
                os.sched_yield()
            else:
                time.sleep(SLEEP_S)
            if spins & 63 == 0:
                if deadline is not None and time.monotonic() > deadline:
                    raise ChannelTimeout(f"status stuck at {raw}")
                if alive is not None and not alive():
                    raise ChannelTimeout("peer exited")

    # payload / results -------------------------------------------------
    @property
    def exec_status(self) -> ExecStatus:
        return ExecStatus(_U32.unpack_from(self._mm, OFF_EXEC)[0])

    @exec_status.setter
    def exec_status(self, value: ExecStatus) -> None:
        _U32.pack_into(self._mm, OFF_EXEC, int(value))

    def write_input(self, data: bytes) -> None:
        if len(data) > PAYLOAD_CAPACITY:
            raise ValueError(f"input of {len(data)} bytes exceeds channel capacity {PAYLOAD_CAPACITY}")
        self._mm[OFF_PAYLOAD:OFF_PAYLOAD + len(data)] = data
        _U32.pack_into(self._mm, OFF_LEN, len(data))

    def read_input(self) -> bytes:
        n = min(_U32.unpack_from(self._mm, OFF_LEN)[0], PAYLOAD_CAPACITY)
        return self._mm[OFF_PAYLOAD:OFF_PAYLOAD + n]

    def write_coverage(self, cov: CoverageMap) -> None:
        self._mm[OFF_COVERAGE:OFF_COVERAGE + MAP_SIZE] = cov.cells.tobytes()

    def read_coverage(self, scheme: Scheme) -> CoverageMap:
        cells = np.frombuffer(self._mm, dtype=np.uint8, count=MAP_SIZE, offset=OFF_COVERAGE).copy()
        return CoverageMap(scheme, cells)

    def close(self) -> None:
        if not self._mm.closed:
            self._mm.close()
        if self.owner:
            try:
                self.path.unlink()
            except FileNotFoundError:
                pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def transitions_in_order(seq: list[ChannelStatus]) -> bool:
    """True when every consecutive pair in ``seq`` is an allowed transition."""
    return all(b in ALLOWED_TRANSITIONS[a] for a, b in zip(seq, seq[1:]))


def persistent_loop(
    channel: PersistentChannel,
    max_iters: int,
    body: Callable[[bytes, CoverageMap], None],
    *,
    scheme: Scheme = Scheme.COLLISION_FREE,
    handshake: bool | None = None,
    timeout: float | None = None,
) -> int:
    """Target side of the channel, in Python.

    Serves up to ``max_iters`` inputs (0 means none) and returns how many ran.
    ``body`` gets the payload and a fresh map; raising marks the run CRASH.
    Without the handshake (``FF_PERSISTENT=1`` unless ``handshake`` is given)
    the body runs at most once, like a target launched per testcase.
    """
    if handshake is None:
        handshake = os.environ.get("FF_PERSISTENT") == "1"
    if not handshake:
        max_iters = min(max_iters, 1)
    if max_iters <= 0:
        return 0
    channel.set_status(ChannelStatus.IDLE)
    done = 0
    while done < max_iters:
        got = channel.wait_for({ChannelStatus.INPUT_READY, ChannelStatus.SHUTDOWN}, timeout)
        if got is ChannelStatus.SHUTDOWN:
            break
        cov = CoverageMap(scheme)
        try:
            body(channel.read_input(), cov)
            status = ExecStatus.OK
        except Exception:
            status = ExecStatus.CRASH
        channel.write_coverage(cov)
        channel.exec_status = status
        channel.set_status(ChannelStatus.RESULT_READY)
        done += 1
    return done
