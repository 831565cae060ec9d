from __future__ import annotations

import warnings
from pathlib import Path

import pytest

from fairfuzz.targets import build_targets, load_target

FIXTURES = Path(__file__).parent / "fixtures"
SEEDS = Path(__file__).parent.parent / "src" / "fairfuzz" / "targets" / "seeds"


@pytest.fixture(scope="session")
def targets_dir(tmp_path_factory) -> Path:
    out = tmp_path_factory.mktemp("targets")
    build_targets(out)
    return out


@pytest.fixture(scope="session")
def target(targets_dir):
    def get(name: str):
        return load_target(targets_dir, name)

    return get


@pytest.fixture
def quiet():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        yield


# acceptance verdicts, printed once at the end of the run
ACCEPTANCE: dict[int, tuple[str, bool, str]] = {}
ACCEPTANCE_TITLES = {
    1: "mode-semantics equivalence",
    2: "throughput ordering",
    3: "downgrade is never silent",
    4: "gradient correctness",
    5: "corpus discipline",
    6: "complete-collection replay",
    7: "metric soundness",
    8: "guided-fuzzing efficacy",
    9: "determinism",
}


@pytest.fixture
def verdict(capsys):
    def record(n: int, ok: bool, detail: str) -> None:
        ACCEPTANCE[n] = (ACCEPTANCE_TITLES[n], ok, detail)
        with capsys.disabled():
            print(f"\n[criterion {n}] {'PASS' if ok else 'FAIL'}: {ACCEPTANCE_TITLES[n]}: {detail}")
        assert ok, detail

    return record


def pytest_terminal_summary(terminalreporter):
    ran = [m for m in terminalreporter.stats.get("passed", []) + terminalreporter.stats.get("failed", [])
           if "test_acceptance" in m.nodeid]
    if not ran:
        return
    terminalreporter.section("acceptance criteria")
    for n, title in ACCEPTANCE_TITLES.items():
        if n in ACCEPTANCE:
            _, ok, detail = ACCEPTANCE[n]
            terminalreporter.write_line(f"criterion {n} {'PASS' if ok else 'FAIL'}: {title}: {detail}")
        else:
            terminalreporter.write_line(f"criterion {n} NOT RUN: {title}: deselected, or errored before reaching its verdict")
