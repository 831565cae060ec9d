"""Training-data collection from a single seed, and the checks that guard it."""
from __future__ import annotations

import warnings
from collections.abc import Callable, Iterator
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

GUIDELINE_MIN_SAMPLES = 1_000
GUIDELINE_MAX_SAMPLES = 10_000
DEFAULT_BUDGET = 5_000
DEFAULT_ALIGNMENT = 4
DEFAULT_MIN_SAMPLES = 100

ARITH_MAX = 35
INTERESTING_8 = (-128, -1, 0, 1, 16, 32, 64, 100, 127)


class CorpusConfigError(ValueError):
    pass


class CorpusSizeWarning(UserWarning):
    pass


@dataclass(frozen=True)
class Sample:
    data: bytes
    edges: frozenset[int]
    stage: str = ""


@dataclass
class TrainingCorpus:
    seed: bytes
    samples: list[Sample] = field(default_factory=list)
    budget_used: int = 0
    schedule_pos: int = 0

    def __len__(self):
        return len(self.samples)

    def input_matrix(self) -> np.ndarray:
        return np.frombuffer(b"".join(s.data for s in self.samples), dtype=np.uint8).reshape(
            len(self.samples), len(self.seed)
        )

    def edge_sets(self) -> list[frozenset[int]]:
        return [s.edges for s in self.samples]


def _flip_bits(buf: bytearray, first: int, count: int) -> None:
    # AFL bit order: bit 0 is the MSB of byte 0
    for b in range(first, first + count):
        buf[b >> 3] ^= 0x80 >> (b & 7)


def deterministic_variants(seed: bytes) -> Iterator[tuple[str, bytes]]:
    """AFL's deterministic stages over one seed, in schedule order.

    Walking bit flips (1/2/4 bits), walking byte flips (1/2/4 bytes), 8-bit
    arithmetic +-1..35, then 8-bit interesting values.  Every variant keeps the
    seed length; no-op substitutions are skipped.
    """
    n = len(seed)
    for width in (1, 2, 4):
        for first in range(n * 8 - width + 1):
            buf = bytearray(seed)
            _flip_bits(buf, first, width)
            yield f"flip{width}", bytes(buf)
    for width in (1, 2, 4):
        for first in range(n - width + 1):
            buf = bytearray(seed)
            for i in range(first, first + width):
                buf[i] ^= 0xFF
            yield f"byteflip{width}", bytes(buf)
    for pos in range(n):
        for delta in range(1, ARITH_MAX + 1):
            for signed in (delta, -delta):
                buf = bytearray(seed)
                buf[pos] = (buf[pos] + signed) & 0xFF
                yield "arith8", bytes(buf)
    for pos in range(n):
        for value in INTERESTING_8:
            if seed[pos] == value & 0xFF:
                continue
            buf = bytearray(seed)
            buf[pos] = value & 0xFF
            yield "interest8", bytes(buf)


def collect_training_corpus(
    session,
    seed: bytes,
    budget_execs: int = DEFAULT_BUDGET,
    on_exec: Callable | None = None,
) -> TrainingCorpus:
    """Run the deterministic schedule of ``seed`` through ``session``.

    Stops after ``budget_execs`` executions or when the schedule runs out.
    ``on_exec(data, result)`` sees every execution, e.g. for campaign triage.
    """
    if not isinstance(seed, (bytes, bytearray)):
        raise TypeError("training data comes from exactly one seed (bytes), not a collection")
    seed = bytes(seed)
    if not seed:
        raise CorpusConfigError("seed is empty")
    if budget_execs < 1:
        raise CorpusConfigError("budget_execs must be at least 1")
    corpus = TrainingCorpus(seed)
    for stage, data in deterministic_variants(seed):
        if corpus.budget_used >= budget_execs:
            break
        res = session.execute(data)
        corpus.budget_used += 1
        corpus.schedule_pos += 1
        corpus.samples.append(Sample(data, res.coverage.edges(), stage))
        if on_exec is not None:
            on_exec(data, res)
    if not GUIDELINE_MIN_SAMPLES <= len(corpus) <= GUIDELINE_MAX_SAMPLES:
        warnings.warn(
            f"{len(corpus)} training samples is outside the "
            f"{GUIDELINE_MIN_SAMPLES}-{GUIDELINE_MAX_SAMPLES} guideline",
            CorpusSizeWarning,
            stacklevel=2,
        )
    return corpus


@dataclass(frozen=True)
class Violation:
    index: int | None
    reason: str


@dataclass
class ValidationReport:
    violations: list[Violation]
    n_samples: int

    @property
    def passed(self) -> bool:
        return not self.violations

    def __str__(self) -> str:
        head = f"{'PASS' if self.passed else 'FAIL'}: {self.n_samples} samples"
        lines = [head]
        for v in self.violations[:20]:
            where = "corpus" if v.index is None else f"sample {v.index}"
            lines.append(f"  {where}: {v.reason}")
        if len(self.violations) > 20:
            lines.append(f"  ... {len(self.violations) - 20} more")
        return "\n".join(lines)


def hamming_bytes(a: bytes, b: bytes) -> int:
    return int(np.count_nonzero(np.frombuffer(a, np.uint8) != np.frombuffer(b, np.uint8)))


def validate_corpus(
    corpus: TrainingCorpus,
    alignment_threshold: int = DEFAULT_ALIGNMENT,
    min_samples: int = DEFAULT_MIN_SAMPLES,
) -> ValidationReport:
    """Check that every sample is a small perturbation of the one seed.

    Never raises; problems are listed in the report.
    """
    violations = []
    n = len(corpus.seed)
    for i, s in enumerate(corpus.samples):
        if len(s.data) != n:
            violations.append(Violation(i, f"length {len(s.data)} != seed length {n}"))
            continue
        d = hamming_bytes(s.data, corpus.seed)
        if d > alignment_threshold:
            violations.append(Violation(i, f"{d} bytes differ from the seed (threshold {alignment_threshold})"))
    if len(corpus.samples) < min_samples:
        violations.append(Violation(None, f"only {len(corpus.samples)} samples, need {min_samples}"))
    return ValidationReport(violations, len(corpus.samples))


# on-disk layout: seed, samples/NNNNNN.bin + NNNNNN.edges (u16 ids), manifest.tsv
def save_corpus(corpus: TrainingCorpus, directory) -> Path:
    root = Path(directory)
    samples = root / "samples"
    samples.mkdir(parents=True, exist_ok=True)
    (root / "seed").write_bytes(corpus.seed)
    lines = ["sample\tedges\thamming\tstage"]
    for i, s in enumerate(corpus.samples):
        name = f"{i:06d}"
        (samples / f"{name}.bin").write_bytes(s.data)
        (samples / f"{name}.edges").write_bytes(np.array(sorted(s.edges), dtype="<u2").tobytes())
        dist = hamming_bytes(s.data, corpus.seed) if len(s.data) == len(corpus.seed) else -1
        lines.append(f"samples/{name}.bin\tsamples/{name}.edges\t{dist}\t{s.stage}")
    (root / "manifest.tsv").write_text("\n".join(lines) + "\n")
    return root


def load_corpus(directory) -> TrainingCorpus:
    root = Path(directory)
    corpus = TrainingCorpus((root / "seed").read_bytes())
    rows = (root / "manifest.tsv").read_text().splitlines()[1:]
    for row in rows:
        data_name, edges_name, _dist, stage = row.split("\t")
        edges = np.frombuffer((root / edges_name).read_bytes(), dtype="<u2")
        corpus.samples.append(Sample((root / data_name).read_bytes(), frozenset(edges.tolist()), stage))
    corpus.budget_used = corpus.schedule_pos = len(corpus.samples)
    return corpus
