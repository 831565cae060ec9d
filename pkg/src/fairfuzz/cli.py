"""``fairfuzz`` command line.

Exit codes: 0 ok, 2 bad config or layout, 3 ran but degraded (mode downgrade,
partial replay), 4 training data refused, 5 comparison across modes.
"""
from __future__ import annotations

import argparse
import logging
import sys
import warnings
from pathlib import Path

from fairfuzz.campaign import CampaignStats, fuzz_campaign
from fairfuzz.config import ConfigError, load_config
from fairfuzz.corpus_store import IncompleteCollectionWarning, LayoutError, Selection
from fairfuzz.coverage import Scheme, count_covered
from fairfuzz.evaluator import CampaignRun, ModeMismatch, ReportError, compare_campaigns, emit_report, replay
from fairfuzz.executor import Mode, ModeDowngraded, check_binary, init_session, measure_throughput
from fairfuzz.neuzz.corpus import collect_training_corpus, load_corpus, validate_corpus
from fairfuzz.neuzz.model import Hyper, save_model, train
from fairfuzz.targets.build import (
    TARGET_NAMES,
    BuildError,
    build_targets,
    bundled_seeds,
    default_targets_dir,
    ensure_targets,
    load_target,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DEGRADED = 3
EXIT_DATA = 4
EXIT_COMPARE = 5

MODEL_FILE = "model.ffmlp"
REPORT_CSV = "report.csv"
REPORT_MD = "report.md"


def _err(msg: str) -> None:
    print(f"fairfuzz: {msg}", file=sys.stderr)


def _targets(args) -> Path:
    return ensure_targets(args.targets_dir)


def cmd_targets_build(args) -> int:
    out = Path(args.targets_dir) if args.targets_dir else default_targets_dir()
    try:
        built = build_targets(out, force=args.force)
    except BuildError as exc:
        _err(str(exc))
        return EXIT_CONFIG
    print(f"{'target':<18} {'flavor':<10} {'blocks':>6}  marker")
    for t in built:
        flavor = "persistent" if t.persistent else "fork-only"
        print(f"{t.name:<18} {flavor:<10} {t.n_blocks:>6}  marker={'yes' if check_binary(t) else 'no'}")
    print(f"built into {out}")
    return EXIT_OK


def cmd_fuzz(args) -> int:
    try:
        config = load_config(args.config)
        config.seed_files()
    except (ConfigError, OSError) as exc:
        _err(f"config error: {exc}")
        return EXIT_CONFIG

    def announce(stats: CampaignStats) -> None:
        print(stats.handshake, flush=True)

    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", ModeDowngraded)
        try:
            stats = fuzz_campaign(config, targets_dir=_targets(args), max_execs=args.max_execs, on_start=announce)
        except (ConfigError, KeyError) as exc:
            _err(f"config error: {exc}")
            return EXIT_CONFIG
    downgraded = [w for w in caught if issubclass(w.category, ModeDowngraded)]
    for w in downgraded:
        _err(f"WARNING: {w.message}")
    print(
        f"engine={stats.engine} execs={stats.execs} edges={stats.covered_edges} "
        f"execs/s={stats.execs_per_sec:.1f} queue={stats.queued} variants={stats.variants} "
        f"crashes={stats.crashes} hangs={stats.hangs} rng={stats.rng}:{stats.rng_seed}"
    )
    return EXIT_DEGRADED if stats.downgraded else EXIT_OK


def cmd_train(args) -> int:
    try:
        config = load_config(args.config)
    except (ConfigError, OSError) as exc:
        _err(f"config error: {exc}")
        return EXIT_CONFIG
    out = Path(args.model) if args.model else Path(config.output) / MODEL_FILE
    if args.corpus:
        corpus = load_corpus(args.corpus)
    else:
        try:
            files = config.seed_files()
        except ConfigError as exc:
            _err(f"config error: {exc}")
            return EXIT_CONFIG
        if len(files) != 1:
            _err(f"training needs a single seed, found {len(files)} files in {config.seeds}")
            return EXIT_DATA
        seed = files[0].read_bytes()
        if not seed:
            _err(f"seed file {files[0]} is empty")
            return EXIT_CONFIG
        target = load_target(_targets(args), config.target)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ModeDowngraded)
            with init_session(target, config.mode, hang_ms=config.hang_ms) as session:
                corpus = collect_training_corpus(session, seed, config.train_budget)
    report = validate_corpus(corpus)
    print(report)
    if not report.passed:
        _err("refusing to train on this corpus")
        return EXIT_DATA
    model = train(corpus, Hyper(random_state=config.rng_seed))
    out.parent.mkdir(parents=True, exist_ok=True)
    save_model(model, out)
    print(f"model: {out} ({model.n_features_in_} bytes -> {len(model.edge_ids_)} edges, "
          f"final loss {model.final_loss_:.6f})")
    return EXIT_OK


def cmd_replay(args) -> int:
    selection = Selection(args.dirs)
    scheme = Scheme.XOR_HASH if args.scheme == "xor" else Scheme.COLLISION_FREE
    try:
        target = load_target(_targets(args), args.target)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", IncompleteCollectionWarning)
            cov = replay(args.layout, target, selection, scheme=scheme)
    except (LayoutError, KeyError) as exc:
        _err(str(exc))
        return EXIT_CONFIG
    print(count_covered(cov))
    if selection is Selection.QUEUE_ONLY:
        for w in caught[:1]:
            _err(f"WARNING: {w.message}")
        _err("WARNING: queue-only replay skips vari_seed/crash/hang; do not report this number")
        return EXIT_DEGRADED
    return EXIT_OK


def parse_compare_spec(path) -> tuple[str, list[CampaignRun]]:
    """``target = <name>`` plus ``run = <fuzzer> <layout> [<stats log>]`` lines."""
    p = Path(path)
    target = None
    runs = []
    for lineno, line in enumerate(p.read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, _, value = (s.strip() for s in line.partition("="))
        if key == "target":
            target = value
        elif key == "run":
            parts = value.split()
            if len(parts) not in (2, 3):
                raise ConfigError(f"line {lineno}: expected run = <fuzzer> <layout> [<stats log>]", "run")
            paths = [q if Path(q).is_absolute() else p.parent / q for q in parts[1:]]
            runs.append(CampaignRun(parts[0], Path(paths[0]), Path(paths[1]) if len(paths) > 1 else None))
        else:
            raise ConfigError(f"unknown key (line {lineno})", key)
    if target is None:
        raise ConfigError("missing required key", "target")
    if not runs:
        raise ConfigError("no runs listed", "run")
    return target, runs


def cmd_compare(args) -> int:
    try:
        target_name, runs = parse_compare_spec(args.spec)
        target = load_target(_targets(args), target_name)
        rows = compare_campaigns(runs, target)
    except ModeMismatch as exc:
        _err(str(exc))
        return EXIT_COMPARE
    except (ConfigError, LayoutError, ReportError, KeyError, OSError) as exc:
        _err(str(exc))
        return EXIT_CONFIG
    out = Path(args.out_dir) if args.out_dir else Path(args.spec).parent
    out.mkdir(parents=True, exist_ok=True)
    md = emit_report(rows, "markdown")
    (out / REPORT_CSV).write_text(emit_report(rows, "csv"))
    (out / REPORT_MD).write_text(md)
    print(md, end="")
    return EXIT_OK


def cmd_bench_throughput(args) -> int:
    root = _targets(args)
    names = args.target or list(TARGET_NAMES)
    for name in names:
        try:
            target = load_target(root, name)
        except KeyError as exc:
            _err(str(exc))
            return EXIT_CONFIG
        corpus = bundled_seeds(name)
        rates = {}
        for mode in (Mode.PERSISTENT, Mode.FORK):
            with init_session(target, mode) as session:
                rep = measure_throughput(session, corpus, args.duration)
            rates[mode] = rep.execs_per_sec
            print(f"{name:<12} {mode.value:<10} {rep.execs_per_sec:>10.1f} execs/s  "
                  f"p50={rep.latency_us['p50']:.0f}us p99={rep.latency_us['p99']:.0f}us")
        print(f"{name:<12} speedup    {rates[Mode.PERSISTENT] / rates[Mode.FORK]:>10.1f}x")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fairfuzz", description=__doc__.splitlines()[0])
    parser.add_argument("--targets-dir", help="where built targets live (default: $FF_TARGETS_DIR or ~/.cache)")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("targets-build", help="compile the toy targets in both flavors")
    p.add_argument("--force", action="store_true", help="rebuild even when up to date")
    p.set_defaults(func=cmd_targets_build)

    p = sub.add_parser("fuzz", help="run a campaign from a config file")
    p.add_argument("config")
    p.add_argument("--max-execs", type=int, help="stop after this many executions")
    p.set_defaults(func=cmd_fuzz)

    p = sub.add_parser("train", help="collect a corpus from one seed, validate it, fit a model")
    p.add_argument("config")
    p.add_argument("--corpus", help="train from a stored corpus directory instead of collecting")
    p.add_argument("--model", help=f"output model path (default: <output>/{MODEL_FILE})")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("replay", help="count collision-free edges of a campaign output")
    p.add_argument("layout")
    p.add_argument("--target", required=True)
    p.add_argument("--dirs", choices=[s.value for s in Selection], default=Selection.ALL.value)
    p.add_argument("--scheme", choices=["uniform", "xor"], default="uniform")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("compare", help="replay campaigns and write csv/markdown reports")
    p.add_argument("spec")
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("bench-throughput", help="persistent vs fork execs/s on bundled seeds")
    p.add_argument("--target", action="append", help="repeatable; default: all targets")
    p.add_argument("--duration", type=float, default=10.0)
    p.set_defaults(func=cmd_bench_throughput)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
