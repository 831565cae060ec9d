from __future__ import annotations

import shutil
import warnings

import numpy as np
import pytest

from conftest import FIXTURES, SEEDS
from fairfuzz.cli import (
    EXIT_COMPARE,
    EXIT_CONFIG,
    EXIT_DATA,
    EXIT_DEGRADED,
    EXIT_OK,
    main,
    parse_compare_spec,
)
from fairfuzz.config import ConfigError
from fairfuzz.corpus_store import OutputLayout
from fairfuzz.neuzz import collect_training_corpus, load_model, save_corpus
from stubs import StubSession

LAYOUTS = FIXTURES / "layouts"


@pytest.fixture
def run(targets_dir, capsys):
    def go(*argv):
        code = main(["--targets-dir", str(targets_dir), *map(str, argv)])
        out, err = capsys.readouterr()
        return code, out, err

    return go


def write_config(tmp_path, target="chunkparse", mode="fork", engine="random", seeds=None, **extra):
    lines = [f"target = {target}", f"mode = {mode}", f"engine = {engine}",
             f"seeds = {seeds or SEEDS / target.removesuffix('.fork')}", "duration = 30", "output = out"]
    lines += [f"{k} = {v}" for k, v in extra.items()]
    path = tmp_path / "campaign.conf"
    path.write_text("\n".join(lines) + "\n")
    return path


def test_fuzz_prints_handshake_first_and_exits_zero(tmp_path, run):
    code, out, _ = run("fuzz", write_config(tmp_path), "--max-execs", "200")
    assert code == EXIT_OK
    assert out.splitlines()[0] == "mode=fork (requested=fork, capable=yes)"
    assert "execs=200" in out


def test_fuzz_downgrade_exits_three(tmp_path, run):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        code, out, err = run("fuzz", write_config(tmp_path, "chunkparse.fork", "persistent"), "--max-execs", "30")
    assert code == EXIT_DEGRADED
    assert out.splitlines()[0] == "mode=fork (requested=persistent, capable=no)"
    assert "WARNING" in err


def test_fuzz_bad_config_exits_two(tmp_path, run):
    path = write_config(tmp_path, colour="blue")
    code, _, err = run("fuzz", path)
    assert code == EXIT_CONFIG and "colour" in err
    code, _, _ = run("fuzz", tmp_path / "missing.conf")
    assert code == EXIT_CONFIG


def test_train_writes_model(tmp_path, run, quiet):
    code, out, _ = run("train", write_config(tmp_path, train_budget=2000))
    assert code == EXIT_OK
    assert out.startswith("PASS")
    assert load_model(tmp_path / "out" / "model.ffmlp").n_features_in_ == 8


def test_train_refuses_multi_seed_dir(tmp_path, run):
    seeds = tmp_path / "seeds"
    seeds.mkdir()
    (seeds / "a").write_bytes(b"CHNK\x01\x01a")
    (seeds / "b").write_bytes(b"CHNK\x02\x02bb")
    code, _, err = run("train", write_config(tmp_path, seeds=seeds))
    assert code == EXIT_DATA and "single seed" in err
    assert not (tmp_path / "out" / "model.ffmlp").exists()


def test_train_refuses_mixed_corpus(tmp_path, run):
    rng = np.random.default_rng(3)
    a, b = (rng.integers(0, 256, 16, dtype=np.uint8).tobytes() for _ in range(2))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        mixed = collect_training_corpus(StubSession(), a, 300)
        mixed.samples += collect_training_corpus(StubSession(), b, 300).samples
    save_corpus(mixed, tmp_path / "corpus")
    code, out, err = run("train", write_config(tmp_path), "--corpus", tmp_path / "corpus")
    assert code == EXIT_DATA
    assert out.startswith("FAIL") and "refusing" in err
    assert not (tmp_path / "out" / "model.ffmlp").exists()


def test_replay_all_and_queue_only(run):
    code, out, _ = run("replay", LAYOUTS / "chunkparse_neuzz", "--target", "chunkparse")
    assert (code, out.strip()) == (EXIT_OK, "80")
    code, out, err = run("replay", LAYOUTS / "chunkparse_neuzz", "--target", "chunkparse", "--dirs", "queue-only")
    assert code == EXIT_DEGRADED and int(out) < 80 and "WARNING" in err


def test_replay_missing_layout_exits_two(tmp_path, run):
    code, _, _ = run("replay", tmp_path / "nope", "--target", "chunkparse")
    assert code == EXIT_CONFIG


def test_compare_writes_reports(tmp_path, run):
    spec = tmp_path / "cmp.spec"
    spec.write_text(f"target = chunkparse\nrun = neuzz {LAYOUTS / 'chunkparse_neuzz'}\n")
    code, out, _ = run("compare", spec)
    assert code == EXIT_OK
    assert out.splitlines()[0] == "| target | neuzz edges | neuzz execs/s |"
    assert (tmp_path / "report.md").read_text() == out
    assert (tmp_path / "report.csv").read_text().startswith("target,fuzzer,run,edges,execs_per_sec\n")


def test_compare_mixed_modes_exits_five(tmp_path, run):
    shutil.copytree(LAYOUTS / "chunkparse_neuzz", tmp_path / "p")
    lay = OutputLayout.open(tmp_path / "p")
    lay.meta["mode"] = "persistent"
    lay.flush()
    spec = tmp_path / "cmp.spec"
    spec.write_text(f"target = chunkparse\nrun = neuzz {LAYOUTS / 'chunkparse_neuzz'}\nrun = random p\n")
    code, _, err = run("compare", spec)
    assert code == EXIT_COMPARE and "persistent" in err
    assert not (tmp_path / "report.md").exists()


def test_compare_spec_errors(tmp_path):
    spec = tmp_path / "s"
    spec.write_text("run = a b\n")
    with pytest.raises(ConfigError):
        parse_compare_spec(spec)
    spec.write_text("target = x\nrun = onlyname\n")
    with pytest.raises(ConfigError):
        parse_compare_spec(spec)


def test_bench_throughput_runs(run):
    code, out, _ = run("bench-throughput", "--target", "csvish", "--duration", "0.3")
    assert code == EXIT_OK
    assert "speedup" in out


def test_targets_build_lists_flavors(tmp_path, capsys):
    assert main(["--targets-dir", str(tmp_path / "t"), "targets-build"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "chunkparse.fork" in out and "fork-only" in out
