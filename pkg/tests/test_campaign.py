from __future__ import annotations

import numpy as np
import pytest

from conftest import SEEDS
from fairfuzz.campaign import MODEL_DIR, _Words, fuzz_campaign, havoc
from fairfuzz.config import CampaignConfig, ConfigError
from fairfuzz.corpus_store import DIRS, OutputLayout
from fairfuzz.evaluator import read_stats_log
from fairfuzz.executor import ModeDowngraded


def config(tmp_path, target="chunkparse", engine="random", mode="fork", duration=30.0, **kw):
    return CampaignConfig(target, mode, engine, SEEDS / target.removesuffix(".fork"), duration, tmp_path / "out", **kw)


def saved(root) -> dict[str, bytes]:
    out = {}
    for d in DIRS.values():
        for f in sorted((root / d).iterdir()):
            out[f"{d}/{f.name}"] = f.read_bytes()
    return out


def test_zero_duration_runs_nothing(tmp_path, targets_dir):
    stats = fuzz_campaign(config(tmp_path, duration=0), targets_dir=targets_dir)
    assert stats.execs == 0
    layout = OutputLayout.open(tmp_path / "out")
    assert layout.enumerate() == []
    assert layout.meta["execs"] == "0" and layout.meta["mode"] == "fork"


def test_empty_seed_dir_is_a_config_error(tmp_path, targets_dir):
    empty = tmp_path / "none"
    empty.mkdir()
    cfg = CampaignConfig("chunkparse", "fork", "random", empty, 1, tmp_path / "out")
    with pytest.raises(ConfigError) as info:
        fuzz_campaign(cfg, targets_dir=targets_dir)
    assert info.value.field == "seeds"


def test_random_campaign_saves_seed_and_logs(tmp_path, targets_dir):
    stats = fuzz_campaign(config(tmp_path), targets_dir=targets_dir, max_execs=400)
    assert stats.execs == 400
    layout = OutputLayout.open(tmp_path / "out")
    cases = layout.enumerate()
    assert cases[0].op == "seed" and cases[0].data == (SEEDS / "chunkparse" / "seed").read_bytes()
    assert all(c.op == "havoc" for c in cases[1:])
    log = read_stats_log(tmp_path / "out" / "stats.log")
    assert log[-1][1:] == (400, stats.covered_edges)
    assert [r[2] for r in log] == sorted(r[2] for r in log)


def test_neuzz_campaign_trains_and_routes_variants(tmp_path, targets_dir):
    cfg = config(tmp_path, engine="neuzz", train_budget=300)
    stats = fuzz_campaign(cfg, targets_dir=targets_dir, max_execs=1500)
    root = tmp_path / "out"
    assert (root / MODEL_DIR / "stage000.ffmlp").exists()
    ops = {c.op: c for c in OutputLayout.open(root).enumerate()}
    assert "det" in ops
    for c in OutputLayout.open(root).enumerate():
        assert c.variant_length == (c.op in ("insert", "delete"))
    assert stats.models and stats.execs == 1500


@pytest.mark.parametrize("engine", ["random", "neuzz"])
def test_fork_campaigns_are_reproducible(tmp_path, targets_dir, engine):
    runs = []
    for i in range(2):
        cfg = CampaignConfig("chunkparse", "fork", engine, SEEDS / "chunkparse", 60, tmp_path / f"o{i}",
                             train_budget=300, rng_seed=5)
        fuzz_campaign(cfg, targets_dir=targets_dir, max_execs=1200)
        runs.append(tmp_path / f"o{i}")
    assert saved(runs[0]) == saved(runs[1])
    models = [sorted((r / MODEL_DIR).glob("*.ffmlp")) if (r / MODEL_DIR).exists() else [] for r in runs]
    assert [m.name for m in models[0]] == [m.name for m in models[1]]
    for a, b in zip(*models):
        assert a.read_bytes() == b.read_bytes()


def test_downgrade_is_reported(tmp_path, targets_dir):
    cfg = config(tmp_path, target="chunkparse.fork", mode="persistent")
    seen = []
    with pytest.warns(ModeDowngraded):
        stats = fuzz_campaign(cfg, targets_dir=targets_dir, max_execs=20, on_start=seen.append)
    assert stats.downgraded and stats.mode == "fork" and stats.requested_mode == "persistent"
    assert seen[0].handshake.startswith("mode=fork (requested=persistent, capable=no)")
    assert OutputLayout.open(tmp_path / "out").meta["mode"] == "fork"


def test_havoc_is_seeded_and_bounded():
    wa, wb = _Words(np.random.default_rng(1)), _Words(np.random.default_rng(1))
    a = [havoc(b"abcdefgh", wa) for _ in range(50)]
    b = [havoc(b"abcdefgh", wb) for _ in range(50)]
    assert a == b and len(set(a)) > 1
    assert all(0 < len(x) <= 64 * 1024 for x in a)
