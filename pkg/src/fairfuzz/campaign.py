"""The mutate -> execute -> triage loop, with a random-havoc and a Neuzz engine.

Both engines share triage and bookkeeping:

* CRASH beats HANG beats new coverage; a crashing input goes only to ``crash/``.
* Crashes and hangs are kept when they reach an edge no earlier crash (or hang)
  reached.  Other inputs are kept when they reach an edge nothing reached before.
* ``stats.log`` gets one ``unix_millis,total_execs,covered_edges`` line per
  coverage change plus one at the end.

Mutation order depends only on the RNG seed and on coverage feedback, never on
timing, so two fork-mode runs with the same config walk the same input
sequence; ``max_execs`` cuts that sequence at a fixed length.
"""
from __future__ import annotations

import dataclasses
import logging
import time
import warnings
from collections import deque
from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np

from fairfuzz.config import CampaignConfig, ConfigError
from fairfuzz.corpus_store import STATS_FILE, Disposition, OutputLayout, TestCase
from fairfuzz.coverage import MAP_SIZE, Scheme
from fairfuzz.executor import ExecSession, init_session
from fairfuzz.neuzz.corpus import CorpusSizeWarning, collect_training_corpus
from fairfuzz.neuzz.mutate import mutate_fixed_length, mutate_variant_length
from fairfuzz.neuzz.model import (
    ByteGradient,
    CorpusRejected,
    FewVariableEdges,
    GradientKind,
    Hyper,
    save_model,
    train,
)
from fairfuzz.targets.build import TargetProgram, load_target
from fairfuzz.targets.channel import PAYLOAD_CAPACITY, ExecStatus

logger = logging.getLogger(__name__)

RNG_NAME = "PCG64"
MODEL_DIR = "models"

# havoc
HAVOC_STACK_POW = 7
INTERESTING_8 = (-128, -1, 0, 1, 16, 32, 64, 100, 127)
ARITH_MAX = 35
HAVOC_MAX_LEN = 64 * 1024

# neuzz
TOP_K = 8
STALL_ROUNDS = 200
# rare edges need balanced labels and a large step to outweigh the init noise
CAMPAIGN_HYPER = Hyper(hidden_units=64, max_edges=512, epochs=100, learning_rate=20.0, class_weight="balanced")


class _Stop(Exception):
    """Raised inside the loop when the time or exec budget is spent."""


@dataclass
class CampaignStats:
    target: str
    engine: str
    requested_mode: str
    mode: str
    rng: str
    rng_seed: int
    handshake: str
    downgraded: bool = False
    execs: int = 0
    elapsed_s: float = 0.0
    covered_edges: int = 0
    queued: int = 0
    variants: int = 0
    crashes: int = 0
    hangs: int = 0
    models: list[str] = field(default_factory=list)
    records: list[tuple[int, int, int]] = field(default_factory=list)

    @property
    def execs_per_sec(self) -> float:
        return self.execs / self.elapsed_s if self.elapsed_s > 0 else 0.0


class _Words:
    """Buffered 32-bit draws from one numpy generator; far cheaper per draw."""

    def __init__(self, rng: np.random.Generator, chunk: int = 1 << 14):
        self.rng = rng
        self.chunk = chunk
        self.buf: list[int] = []
        self.pos = 0

    def below(self, n: int) -> int:
        if self.pos >= len(self.buf):
            self.buf = self.rng.integers(0, 1 << 32, size=self.chunk, dtype=np.uint64).tolist()
            self.pos = 0
        w = self.buf[self.pos]
        self.pos += 1
        return w % n


def havoc(data: bytes, words: _Words) -> bytes:
    """One AFL-style havoc input: a stack of 2..128 random edits."""
    buf = bytearray(data)
    for _ in range(1 << (1 + words.below(HAVOC_STACK_POW))):
        n = len(buf)
        op = words.below(10)
        if op == 0:
            bit = words.below(n * 8)
            buf[bit >> 3] ^= 0x80 >> (bit & 7)
        elif op == 1:
            buf[words.below(n)] = INTERESTING_8[words.below(len(INTERESTING_8))] & 0xFF
        elif op == 2:
            i = words.below(n)
            buf[i] = (buf[i] + 1 + words.below(ARITH_MAX)) & 0xFF
        elif op == 3:
            i = words.below(n)
            buf[i] = (buf[i] - 1 - words.below(ARITH_MAX)) & 0xFF
        elif op == 4:
            i = words.below(n)
            buf[i] ^= 1 + words.below(255)
        elif op in (5, 6):
            if n < 2:
                continue
            size = 1 + words.below(min(n - 1, 32))
            at = words.below(n - size + 1)
            del buf[at:at + size]
        elif op == 7:
            if n >= HAVOC_MAX_LEN:
                continue
            size = 1 + words.below(min(n, 32))
            src = words.below(n - size + 1)
            at = words.below(n + 1)
            buf[at:at] = buf[src:src + size]
        elif op == 8:
            size = 1 + words.below(min(n, 32))
            src = words.below(n - size + 1)
            dst = words.below(n - size + 1)
            buf[dst:dst + size] = bytes(buf[src:src + size])
        else:
            size = 1 + words.below(min(n, 32))
            at = words.below(n - size + 1)
            buf[at:at + size] = bytes([words.below(256)]) * size
    return bytes(buf)


class _Campaign:
    def __init__(self, config: CampaignConfig, target: TargetProgram, session: ExecSession,
                 layout: OutputLayout, stats: CampaignStats, deadline: float, max_execs: int | None):
        self.config = config
        self.target = target
        self.session = session
        self.layout = layout
        self.stats = stats
        self.deadline = deadline
        self.max_execs = max_execs
        self.rng = np.random.Generator(np.random.PCG64(config.rng_seed))
        self.words = _Words(self.rng)
        self.seen = np.zeros(MAP_SIZE, dtype=bool)
        self.seen_crash = np.zeros(MAP_SIZE, dtype=bool)
        self.seen_hang = np.zeros(MAP_SIZE, dtype=bool)
        self.covered = np.zeros(MAP_SIZE, dtype=bool)
        # (id, bytes, covered edge indices) of every fixed-length queue entry
        self.queue: list[tuple[int, bytes, np.ndarray]] = []
        self.stats_fh = open(layout.root / STATS_FILE, "a")

    def log_point(self) -> None:
        rec = (int(time.time() * 1000), self.stats.execs, int(self.covered.sum()))
        self.stats.records.append(rec)
        self.stats_fh.write("%d,%d,%d\n" % rec)

    def run_one(self, data: bytes, parent: int | None, op: str, variant: bool = False) -> int | None:
        """Execute and triage one input; returns its id when it was saved."""
        if self.stats.execs >= (self.max_execs if self.max_execs is not None else 1 << 62):
            raise _Stop
        if time.monotonic() >= self.deadline:
            raise _Stop
        if len(data) > PAYLOAD_CAPACITY or not data:
            return None
        res = self.session.execute(data)
        self.stats.execs += 1
        return self.triage(data, res.status, np.flatnonzero(res.coverage.cells), parent, op, variant)

    def triage(self, data, status, idx, parent, op, variant) -> int | None:
        if status is ExecStatus.CRASH:
            virgin, disp = self.seen_crash, Disposition.CRASH
        elif status is ExecStatus.HANG:
            virgin, disp = self.seen_hang, Disposition.HANG
        else:
            virgin = self.seen
            disp = Disposition.NEW_EDGE_VARIANT if variant else Disposition.NEW_EDGE_FIXED
        if virgin[idx].all():
            return None
        virgin[idx] = True
        path = self.layout.save(TestCase(data, parent, op, variant), disp)
        ident = self.layout.counter - 1
        if disp is Disposition.CRASH:
            self.stats.crashes += 1
        elif disp is Disposition.HANG:
            self.stats.hangs += 1
        elif disp is Disposition.NEW_EDGE_VARIANT:
            self.stats.variants += 1
        else:
            self.stats.queued += 1
            self.queue.append((ident, data, idx))
        if not self.covered[idx].all():
            self.covered[idx] = True
            self.log_point()
        logger.debug("saved %s", path.name)
        return ident

    def load_seeds(self) -> list[bytes]:
        seeds = [p.read_bytes() for p in self.config.seed_files()]
        seeds = [s for s in seeds if s]
        if not seeds:
            raise ConfigError("seed corpus is empty", "seeds")
        return seeds

    def add_seeds(self, seeds: list[bytes]) -> None:
        # seeds always enter the queue, new coverage or not
        for s in seeds:
            if time.monotonic() >= self.deadline:
                raise _Stop
            res = self.session.execute(s)
            self.stats.execs += 1
            idx = np.flatnonzero(res.coverage.cells)
            if res.status is ExecStatus.OK:
                self.seen[idx] = True
                self.covered[idx] = True
                self.layout.save(TestCase(s), Disposition.NEW_EDGE_FIXED)
                self.queue.append((self.layout.counter - 1, s, idx))
                self.stats.queued += 1
            else:
                self.triage(s, res.status, idx, None, "seed", False)
        self.log_point()

    # engines

    def run_random(self, seeds: list[bytes]) -> None:
        self.add_seeds(seeds)
        if not self.queue:
            return
        cursor = 0
        while True:
            ident, data, _ = self.queue[cursor % len(self.queue)]
            cursor += 1
            for _ in range(256):
                self.run_one(havoc(data, self.words), ident, "havoc")

    def run_neuzz(self, seeds: list[bytes]) -> None:
        self.add_seeds(seeds)
        if not self.queue:
            return
        frontier_id, frontier, _ = self.queue[0]
        stage = 0
        while True:
            model = self.train_stage(frontier, frontier_id, stage)
            stage += 1
            if model is None:
                # untrainable seed: fall back to length-changing edits of it
                for op, v in mutate_variant_length(frontier, self.rng):
                    self.run_one(v, frontier_id, op, variant=True)
                continue
            self.gradient_rounds(model)
            frontier_id, frontier, _ = self.queue[-1]

    def train_stage(self, seed: bytes, seed_id: int, stage: int):
        def on_exec(data, res):
            if self.stats.execs >= (self.max_execs if self.max_execs is not None else 1 << 62):
                raise _Stop
            if time.monotonic() >= self.deadline:
                raise _Stop
            self.stats.execs += 1
            self.triage(data, res.status, np.flatnonzero(res.coverage.cells), seed_id, "det", False)

        with warnings.catch_warnings():
            warnings.simplefilter("ignore", CorpusSizeWarning)
            warnings.simplefilter("ignore", FewVariableEdges)
            corpus = collect_training_corpus(self.session, seed, self.config.train_budget, on_exec=on_exec)
            hyper = dataclasses.replace(CAMPAIGN_HYPER, random_state=self.config.rng_seed)
            try:
                model = train(corpus, hyper)
            except CorpusRejected as exc:
                logger.info("stage %d: %s", stage, exc)
                return None
        if len(model.edge_ids_) == 0:
            return None
        path = self.layout.root / MODEL_DIR / f"stage{stage:03d}.ffmlp"
        path.parent.mkdir(exist_ok=True)
        save_model(model, path)
        self.stats.models.append(str(path))
        if time.monotonic() >= self.deadline:
            raise _Stop
        return model

    def gradient_rounds(self, model) -> None:
        """Gradient rounds over same-length queue entries until coverage stalls.

        Each round takes the next parent (newest entries first), the next
        modelled edge the parent misses (all edges once it misses none), and
        steps the parent's top-gradient bytes; insert/delete variants of the
        parent ride along.
        """
        n = model.n_features_in_
        edge_ids = model.edge_ids_
        rr = 0
        stall = 0
        parents: deque[int] = deque()
        entries: dict[int, tuple[bytes, np.ndarray]] = {}
        scanned = 0
        while stall < STALL_ROUNDS:
            for ident, data, idx in self.queue[scanned:]:
                if len(data) == n:
                    entries[ident] = (data, idx)
                    parents.appendleft(ident)
            scanned = len(self.queue)
            ident = parents[0]
            parents.rotate(-1)
            data, idx = entries[ident]
            missing = np.flatnonzero(~np.isin(edge_ids, idx))
            pool = missing if len(missing) else np.arange(len(edge_ids))
            j = int(pool[rr % len(pool)])
            rr += 1
            xs = np.frombuffer(data, dtype=np.uint8) / 255.0
            grad = ByteGradient(model.scaled_gradient(xs, j), GradientKind.RAW)
            before = self.layout.counter
            for v in mutate_fixed_length(data, grad, TOP_K):
                self.run_one(v, ident, "grad")
            for op, v in mutate_variant_length(data, self.rng):
                self.run_one(v, ident, op, variant=True)
            stall = 0 if self.layout.counter > before else stall + 1


def fuzz_campaign(
    config: CampaignConfig,
    *,
    targets_dir,
    max_execs: int | None = None,
    on_start: Callable[[CampaignStats], None] | None = None,
) -> CampaignStats:
    """Run one campaign and return its statistics.

    ``max_execs`` caps the number of executions on top of ``config.duration``.
    ``on_start`` sees the stats right after the handshake, before any input runs.
    """
    target = load_target(targets_dir, config.target)
    if not config.seed_files():
        raise ConfigError("seed corpus is empty", "seeds")
    session = init_session(target, config.mode, scheme=Scheme.COLLISION_FREE, hang_ms=config.hang_ms)
    stats = CampaignStats(
        target=config.target,
        engine=config.engine,
        requested_mode=config.mode,
        mode=session.mode.value,
        rng=RNG_NAME,
        rng_seed=config.rng_seed,
        handshake=session.handshake_line(),
        downgraded=session.downgrade is not None,
    )
    layout = OutputLayout.create(
        config.output,
        target=config.target,
        engine=config.engine,
        mode=session.mode.value,
        requested_mode=config.mode,
        config_hash=config.digest(),
        rng=RNG_NAME,
        rng_seed=config.rng_seed,
    )
    layout.reset()
    if on_start is not None:
        on_start(stats)
    start = time.monotonic()
    camp = _Campaign(config, target, session, layout, stats, start + config.duration, max_execs)
    try:
        if config.duration > 0:
            seeds = camp.load_seeds()
            engine = camp.run_neuzz if config.engine == "neuzz" else camp.run_random
            engine(seeds)
    except _Stop:
        pass
    finally:
        stats.elapsed_s = time.monotonic() - start
        stats.covered_edges = int(camp.covered.sum())
        camp.log_point()
        camp.stats_fh.close()
        layout.meta.update(
            execs=stats.execs,
            elapsed_s=f"{stats.elapsed_s:.3f}",
            execs_per_sec=f"{stats.execs_per_sec:.1f}",
            covered_edges=stats.covered_edges,
        )
        layout.flush()
        session.close()
    return stats
