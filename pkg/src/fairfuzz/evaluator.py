"""Coverage replay under one metric, and fuzzer comparison reports.

Campaigns are compared only after replaying everything they saved against the
same collision-free target in fork mode, so neither the fuzzer's own coverage
bookkeeping nor its execution mode leaks into the edge counts.
"""
from __future__ import annotations

import csv
import io
import warnings
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from pathlib import Path

from fairfuzz.corpus_store import (
    DIRS,
    STATS_FILE,
    Disposition,
    IncompleteCollectionWarning,
    OutputLayout,
    Selection,
)
from fairfuzz.coverage import MAP_SIZE, CoverageMap, Scheme, count_covered, merge
from fairfuzz.executor import Mode, init_session
from fairfuzz.targets.build import TargetProgram


class ModeMismatch(ValueError):
    """Campaigns recorded under different execution modes were compared."""

    def __init__(self, modes: dict[str, str]):
        listing = ", ".join(f"{name}={mode}" for name, mode in modes.items())
        super().__init__(f"campaigns ran in different execution modes: {listing}")
        self.modes = modes


class ReportError(ValueError):
    pass


def replay(
    layout: OutputLayout | str | Path,
    target: TargetProgram,
    selection: Selection | str = Selection.ALL,
    *,
    scheme: Scheme = Scheme.COLLISION_FREE,
    dirs: Sequence[Disposition] | None = None,
    hang_ms: int | None = None,
) -> CoverageMap:
    """Merge the coverage of every saved testcase, run one process each.

    Crashing and hanging testcases still contribute the edges they reached.
    """
    if not isinstance(layout, OutputLayout):
        layout = OutputLayout.open(layout)
    with warnings.catch_warnings():
        # the caller asked for the subset; warn once from here instead
        warnings.simplefilter("ignore", IncompleteCollectionWarning)
        cases = layout.enumerate(selection, dirs=dirs)
    picked = set(DIRS) if dirs is None and Selection(selection) is Selection.ALL else set(dirs or [Disposition.NEW_EDGE_FIXED])
    if picked != set(DIRS):
        warnings.warn(
            "replaying only part of the output directories undercounts coverage",
            IncompleteCollectionWarning,
            stacklevel=2,
        )
    total = CoverageMap(scheme)
    if not cases:
        return total
    kwargs = {} if hang_ms is None else {"hang_ms": hang_ms}
    with init_session(target, Mode.FORK, scheme=scheme, **kwargs) as session:
        for tc in cases:
            total = merge(total, session.execute(tc.data).coverage)
    return total


def replay_count(layout, target, selection=Selection.ALL, **kwargs) -> int:
    return count_covered(replay(layout, target, selection, **kwargs))


def read_stats_log(path) -> list[tuple[int, int, int]]:
    """``unix_millis,total_execs,covered_edges`` records."""
    out = []
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if line:
            ms, execs, edges = (int(v) for v in line.split(","))
            out.append((ms, execs, edges))
    return out


def throughput_from_log(records: Sequence[tuple[int, int, int]]) -> float:
    if len(records) < 2:
        return 0.0
    span = (records[-1][0] - records[0][0]) / 1000.0
    return records[-1][1] / span if span > 0 else 0.0


@dataclass(frozen=True)
class CampaignRun:
    """One campaign's output as input to a comparison."""

    fuzzer: str
    layout: Path
    stats_log: Path | None = None

    def throughput(self) -> float:
        root = Path(self.layout)
        meta = OutputLayout.open(root).meta
        if self.stats_log is None and "execs_per_sec" in meta:
            return float(meta["execs_per_sec"])
        log = Path(self.stats_log) if self.stats_log else root / STATS_FILE
        return throughput_from_log(read_stats_log(log)) if log.exists() else 0.0


@dataclass
class ComparisonRow:
    fuzzer: str
    target: str
    edges: float
    throughput: float
    runs: int
    run_edges: list[int] = field(default_factory=list)
    run_throughput: list[float] = field(default_factory=list)

    def __post_init__(self):
        if self.runs < 1:
            raise ValueError("a comparison row needs at least one run")
        if self.edges > MAP_SIZE:
            raise ValueError(f"{self.edges} edges exceeds the map size")


def _base(name: str) -> str:
    return name[: -len(".fork")] if name.endswith(".fork") else name


def compare_campaigns(runs: Iterable[CampaignRun], target: TargetProgram) -> list[ComparisonRow]:
    """One row per fuzzer: mean replayed edges and mean throughput over its runs."""
    runs = list(runs)
    if not runs:
        raise ReportError("nothing to compare")
    metas = {f"{r.fuzzer}:{r.layout}": OutputLayout.open(r.layout).meta for r in runs}
    modes = {k: m.get("mode", "unknown") for k, m in metas.items()}
    if len(set(modes.values())) > 1:
        raise ModeMismatch(modes)
    targets = {k: _base(m["target"]) for k, m in metas.items() if "target" in m}
    strangers = {k: t for k, t in targets.items() if t != target.base_name}
    if strangers:
        raise ReportError(f"campaigns ran against other targets than {target.base_name}: {strangers}")
    grouped: dict[str, list[CampaignRun]] = {}
    for r in runs:
        grouped.setdefault(r.fuzzer, []).append(r)
    rows = []
    for fuzzer, group in grouped.items():
        edges = [replay_count(r.layout, target) for r in group]
        rates = [r.throughput() for r in group]
        rows.append(ComparisonRow(
            fuzzer=fuzzer,
            target=target.base_name,
            edges=sum(edges) / len(edges),
            throughput=sum(rates) / len(rates),
            runs=len(group),
            run_edges=edges,
            run_throughput=rates,
        ))
    return rows


def _num(v: float) -> str:
    return f"{v:,.0f}" if float(v).is_integer() else f"{v:,.1f}"


def emit_report(rows: Sequence[ComparisonRow], fmt: str = "markdown") -> str:
    """Render rows as ``csv`` (per run plus a mean line) or a ``markdown`` table.

    The markdown table has one line per target and an edges/throughput column
    pair per fuzzer, both in order of first appearance.
    """
    rows = list(rows)
    if not rows:
        raise ReportError("no rows to report")
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["target", "fuzzer", "run", "edges", "execs_per_sec"])
        for r in rows:
            for i, (e, t) in enumerate(zip(r.run_edges, r.run_throughput), 1):
                w.writerow([r.target, r.fuzzer, i, e, f"{t:.1f}"])
            w.writerow([r.target, r.fuzzer, "mean", f"{r.edges:.1f}", f"{r.throughput:.1f}"])
        return buf.getvalue()
    if fmt != "markdown":
        raise ReportError(f"unknown report format {fmt!r}")
    fuzzers = list(dict.fromkeys(r.fuzzer for r in rows))
    targets = list(dict.fromkeys(r.target for r in rows))
    cell = {(r.target, r.fuzzer): r for r in rows}
    head = ["target"]
    for f in fuzzers:
        head += [f"{f} edges", f"{f} execs/s"]
    lines = ["| " + " | ".join(head) + " |", "|" + "|".join([":---"] + ["---:"] * (2 * len(fuzzers))) + "|"]
    for t in targets:
        line = [t]
        for f in fuzzers:
            r = cell.get((t, f))
            line += [_num(r.edges), _num(r.throughput)] if r else ["-", "-"]
        lines.append("| " + " | ".join(line) + " |")
    return "\n".join(lines) + "\n"
