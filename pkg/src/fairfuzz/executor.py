"""Fuzzer side of persistent mode: handshake, testcase transmission, execution.

``init_session`` decides the execution mode once::

    is_persistent = requested_mode is Mode.PERSISTENT and check_binary(target)

Persistent sessions keep one resident target process and move testcases
through a :class:`~fairfuzz.targets.channel.PersistentChannel`; fork sessions
write each testcase to a temp file and start a new process.  Asking for
persistent mode on a target without the capability marker still works, but
emits :class:`ModeDowngraded` instead of degrading silently.
"""
from __future__ import annotations

import enum
import logging
import os
import shutil
import subprocess
import tempfile
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from fairfuzz.coverage import CoverageMap, Scheme
from fairfuzz.targets.build import (
    DEFAULT_HANG_MS,
    MARKER,
    LaunchError,
    TargetProgram,
    spawn_once,
    stop_hung,
    target_env,
    wait_with_deadline,
)
from fairfuzz.targets.channel import (
    PAYLOAD_CAPACITY,
    ChannelStatus,
    ChannelTimeout,
    ExecStatus,
    PersistentChannel,
)

logger = logging.getLogger(__name__)

ATTACH_TIMEOUT_S = 5.0


class Mode(str, enum.Enum):
    PERSISTENT = "persistent"
    FORK = "fork"


class ModeDowngraded(UserWarning):
    """Persistent mode was requested but the target cannot serve it."""


class SessionBroken(RuntimeError):
    """The resident target process is gone; re-initialize the session."""


@dataclass
class ExecResult:
    status: ExecStatus
    coverage: CoverageMap
    duration_us: int


def marker_count(path) -> int:
    return Path(path).read_bytes().count(MARKER)


def check_binary(target) -> bool:
    """True iff the executable carries the persistent-mode capability marker.

    An unreadable file raises ``OSError``; it is never reported as False.
    """
    path = target.path if isinstance(target, TargetProgram) else target
    return marker_count(path) > 0


class ExecSession:
    """Single-owner execution context; build it with :func:`init_session`."""

    def __init__(
        self,
        target: TargetProgram,
        requested_mode: Mode,
        *,
        scheme: Scheme = Scheme.COLLISION_FREE,
        hang_ms: int = DEFAULT_HANG_MS,
        spawn_counter=None,
        record: bool = False,
    ):
        self.target = target
        self.requested_mode = Mode(requested_mode)
        self.scheme = scheme
        self.hang_ms = hang_ms
        self.record = record
        self.is_persistent = False
        self.downgrade: ModeDowngraded | None = None
        self.channel: PersistentChannel | None = None
        self.input_path: Path | None = None
        self.execs = 0
        self.spawns = 0
        self.relaunches = 0
        self.start_time = time.monotonic()
        self.transition_log: list[list[ChannelStatus]] = []
        self._proc: subprocess.Popen | None = None
        self._tmp: str | None = None
        extra = {"FF_SPAWN_COUNTER": str(spawn_counter)} if spawn_counter else None
        self._env = target_env(scheme, extra)

    @property
    def mode(self) -> Mode:
        return Mode.PERSISTENT if self.is_persistent else Mode.FORK

    @property
    def resident_pid(self) -> int | None:
        if self._proc is not None and self._proc.poll() is None:
            return self._proc.pid
        return None

    def handshake_line(self) -> str:
        capable = "yes" if check_binary(self.target) else "no"
        return f"mode={self.mode.value} (requested={self.requested_mode.value}, capable={capable})"

    # setup ------------------------------------------------------------
    def _setup_fork(self) -> None:
        self._tmp = tempfile.mkdtemp(prefix="ff-exec-")
        self.input_path = Path(self._tmp) / "cur_input"
        self._cov_path = Path(self._tmp) / "cur_cov"

    def _setup_persistent(self) -> None:
        self.channel = PersistentChannel.create(record=self.record)
        self._launch_resident()

    def _launch_resident(self) -> None:
        assert self.channel is not None
        if self.record and self.channel.transitions:
            self.transition_log.append(self.channel.transitions)
            self.channel.transitions = []
        _raw_status(self.channel, ChannelStatus.UNATTACHED)
        env = dict(self._env, FF_PERSISTENT="1", FF_SHM_ID=self.channel.shm_id)
        try:
            self._proc = subprocess.Popen(
                [self.target.path],
                env=env,
                stdin=subprocess.DEVNULL,
                stdout=subprocess.DEVNULL,
                stderr=subprocess.DEVNULL,
            )
        except OSError as exc:
            raise LaunchError(f"cannot launch {self.target.path}: {exc}") from exc
        self.spawns += 1
        try:
            self.channel.wait_for({ChannelStatus.IDLE}, ATTACH_TIMEOUT_S, self._alive)
        except ChannelTimeout as exc:
            self._reap()
            raise SessionBroken(f"{self.target.name} never attached to the channel: {exc}") from exc

    def _alive(self) -> bool:
        return self._proc is not None and self._proc.poll() is None

    def _reap(self) -> None:
        if self._proc is None:
            return
        if self._proc.poll() is None and not wait_with_deadline(self._proc, 1.0):
            self._proc.kill()
            self._proc.wait()
        self._proc = None

    # execution --------------------------------------------------------
    def execute(self, data: bytes) -> ExecResult:
        if len(data) > PAYLOAD_CAPACITY:
            raise ValueError(f"input of {len(data)} bytes exceeds capacity {PAYLOAD_CAPACITY}")
        t0 = time.perf_counter_ns()
        if self.is_persistent:
            status, cov = self._execute_persistent(data)
        else:
            status, cov = self._execute_fork(data)
        self.execs += 1
        return ExecResult(status, cov, max(1, (time.perf_counter_ns() - t0) // 1000))

    def _execute_fork(self, data: bytes) -> tuple[ExecStatus, CoverageMap]:
        assert self.input_path is not None
        self.input_path.write_bytes(data)
        self.spawns += 1
        return spawn_once(
            self.target, self.input_path, self._cov_path,
            scheme=self.scheme, hang_ms=self.hang_ms, env=self._env,
        )

    def _execute_persistent(self, data: bytes) -> tuple[ExecStatus, CoverageMap]:
        ch = self.channel
        assert ch is not None
        if not self._alive():
            raise SessionBroken(f"resident {self.target.name} process exited")
        ch.write_input(data)
        ch.set_status(ChannelStatus.INPUT_READY)
        try:
            ch.wait_for({ChannelStatus.RESULT_READY}, self.hang_ms / 1000, self._alive)
        except ChannelTimeout:
            if self._alive():
                # over the hang threshold: the SIGUSR1 handler publishes a HANG result
                stop_hung(self._proc)
                fallback = ExecStatus.HANG
            else:
                fallback = ExecStatus.CRASH
            if ch.status is ChannelStatus.RESULT_READY:
                status, cov = ch.exec_status, ch.read_coverage(self.scheme)
            else:
                status, cov = fallback, CoverageMap(self.scheme)
            self._reap()
            self.relaunches += 1
            self._launch_resident()
            return status, cov
        status = ch.exec_status
        cov = ch.read_coverage(self.scheme)
        if status is ExecStatus.OK:
            ch.set_status(ChannelStatus.IDLE)
        else:
            # the crash handler re-raises the signal after publishing
            self._reap()
            self.relaunches += 1
            self._launch_resident()
        return status, cov

    def close(self) -> None:
        if self.channel is not None:
            if self._alive():
                self.channel.set_status(ChannelStatus.SHUTDOWN)
            self._reap()
            if self.record and self.channel.transitions:
                self.transition_log.append(self.channel.transitions)
                self.channel.transitions = []
            self.channel.close()
            self.channel = None
        if self._tmp is not None:
            shutil.rmtree(self._tmp, ignore_errors=True)
            self._tmp = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def __del__(self):
        try:
            self.close()
        except Exception:
            pass


def _raw_status(ch: PersistentChannel, value: ChannelStatus) -> None:
    # a relaunch restarts the protocol; not a transition of the old process
    record, ch.record = ch.record, False
    ch.set_status(value)
    ch.record = record


def init_session(
    target: TargetProgram,
    requested_mode: Mode | str,
    *,
    scheme: Scheme = Scheme.COLLISION_FREE,
    hang_ms: int = DEFAULT_HANG_MS,
    spawn_counter=None,
    record: bool = False,
) -> ExecSession:
    """Set up an :class:`ExecSession` and perform the persistent-mode handshake."""
    session = ExecSession(
        target, Mode(requested_mode), scheme=scheme, hang_ms=hang_ms,
        spawn_counter=spawn_counter, record=record,
    )
    capable = check_binary(target)
    session.is_persistent = session.requested_mode is Mode.PERSISTENT and capable
    if session.requested_mode is Mode.PERSISTENT and not capable:
        msg = f"{target.name} has no persistent-mode marker; falling back to one process per testcase"
        session.downgrade = ModeDowngraded(msg)
        warnings.warn(session.downgrade, stacklevel=2)
        logger.warning(msg)
    if session.is_persistent:
        session._setup_persistent()
    else:
        session._setup_fork()
    return session


@dataclass
class ThroughputReport:
    execs_per_sec: float
    execs: int
    elapsed_s: float
    latency_us: dict[str, float] = field(default_factory=dict)


def measure_throughput(session: ExecSession, corpus: list[bytes], duration: float) -> ThroughputReport:
    """Round-robin ``corpus`` through ``session`` for ``duration`` seconds."""
    if not corpus:
        raise ValueError("throughput corpus is empty")
    if duration <= 0:
        raise ValueError("duration must be positive")
    latencies = []
    n = 0
    start = time.monotonic()
    deadline = start + duration
    while True:
        res = session.execute(corpus[n % len(corpus)])
        latencies.append(res.duration_us)
        n += 1
        if time.monotonic() >= deadline:
            break
    elapsed = time.monotonic() - start
    pct = np.percentile(latencies, [50, 90, 99])
    return ThroughputReport(
        execs_per_sec=n / elapsed,
        execs=n,
        elapsed_s=elapsed,
        latency_us={"p50": float(pct[0]), "p90": float(pct[1]), "p99": float(pct[2])},
    )


def spawn_count(path) -> int:
    """Processes started with ``FF_SPAWN_COUNTER=path`` (one byte each)."""
    try:
        return os.path.getsize(path)
    except FileNotFoundError:
        return 0
