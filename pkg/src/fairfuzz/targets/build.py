"""Compile the toy targets and run them one process per input."""
from __future__ import annotations

import hashlib
import json
import os
import select
import shutil
import signal
import subprocess
import tempfile
import zlib
from dataclasses import asdict, dataclass
from importlib import resources
from pathlib import Path

from fairfuzz.coverage import MAX_BLOCKS, CoverageMap, Scheme
from fairfuzz.targets.channel import ExecStatus

MARKER = b"##SIG_FF_PERSISTENT##"
TARGET_NAMES = ("chunkparse", "csvish", "magic16")
FORK_SUFFIX = ".fork"
MANIFEST = "targets.json"
DEFAULT_HANG_MS = 200
LAUNCH_FAILURE_EXIT = 111  # FF_EXIT_LAUNCH in ff_runtime.h


class BuildError(RuntimeError):
    pass


class LaunchError(OSError):
    pass


@dataclass(frozen=True)
class EdgeSite:
    block_id: int


@dataclass(frozen=True)
class TargetProgram:
    name: str
    path: str
    persistent: bool
    n_blocks: int
    label_seed: int

    @property
    def base_name(self) -> str:
        return self.name.removesuffix(FORK_SUFFIX)

    @property
    def edge_sites(self) -> list[EdgeSite]:
        return [EdgeSite(i) for i in range(self.n_blocks)]


def _csrc():
    return resources.files("fairfuzz.targets") / "csrc"


def default_label_seed(name: str) -> int:
    return zlib.crc32(name.encode())


def _compiler() -> str:
    cc = os.environ.get("CC") or shutil.which("cc") or shutil.which("gcc") or shutil.which("clang")
    if not cc:
        raise BuildError("no C compiler found (set CC)")
    return cc


def _compile(cc: str, src: Path, include: Path, out: Path, flags: list[str]) -> None:
    cmd = [cc, "-O2", "-std=gnu11", "-w", f"-I{include}", *flags, str(src), "-o", str(out)]
    proc = subprocess.run(cmd, capture_output=True, text=True)
    if proc.returncode != 0:
        raise BuildError(f"{' '.join(cmd)} failed:\n{proc.stderr}")


def _query_blocks(path: Path) -> int:
    out = subprocess.run([str(path), "--ff-blocks"], capture_output=True, text=True, check=True)
    n = int(out.stdout.strip())
    if not 0 < n <= MAX_BLOCKS:
        raise BuildError(f"{path.name}: {n} blocks, the collision-free map allows at most {MAX_BLOCKS}")
    return n


def build_targets(out_dir, *, label_seeds: dict[str, int] | None = None, force: bool = False) -> list[TargetProgram]:
    """Build every toy target in a persistent-capable and a fork-only flavor.

    Up-to-date binaries (same sources, compiler, and label seed) are reused.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cc = _compiler()
    label_seeds = label_seeds or {}
    manifest_path = out / MANIFEST
    old = {}
    if manifest_path.exists() and not force:
        old = {t["name"]: t for t in json.loads(manifest_path.read_text())["targets"]}

    targets: list[TargetProgram] = []
    records = []
    with resources.as_file(_csrc()) as include:
        runtime = (include / "ff_runtime.h").read_bytes()
        for base in TARGET_NAMES:
            src = include / f"{base}.c"
            seed = label_seeds.get(base, default_label_seed(base))
            for persistent in (True, False):
                name = base if persistent else base + FORK_SUFFIX
                exe = out / name
                digest = hashlib.sha256(runtime + src.read_bytes() + f"{cc}|{seed}|{persistent}".encode()).hexdigest()
                prev = old.get(name)
                if not (prev and prev["digest"] == digest and exe.exists()):
                    flags = [f"-DFF_LABEL_SEED={seed}u"]
                    if persistent:
                        flags.append("-DFF_PERSISTENT_BUILD")
                    _compile(cc, src, include, exe, flags)
                tp = TargetProgram(name, str(exe), persistent, _query_blocks(exe), seed)
                targets.append(tp)
                records.append({**asdict(tp), "digest": digest})
    manifest_path.write_text(json.dumps({"targets": records}, indent=2))
    return targets


def default_targets_dir() -> Path:
    """``$FF_TARGETS_DIR``, else a per-user cache directory."""
    env = os.environ.get("FF_TARGETS_DIR")
    if env:
        return Path(env)
    base = os.environ.get("XDG_CACHE_HOME") or os.path.join(os.path.expanduser("~"), ".cache")
    return Path(base) / "fairfuzz" / "targets"


def ensure_targets(out_dir=None) -> Path:
    """Build the targets into ``out_dir`` unless a manifest is already there."""
    out = Path(out_dir) if out_dir is not None else default_targets_dir()
    if not (out / MANIFEST).exists():
        build_targets(out)
    return out


def bundled_seeds(name: str) -> list[bytes]:
    """The seed inputs shipped for target ``name`` (either flavor)."""
    base = name[: -len(FORK_SUFFIX)] if name.endswith(FORK_SUFFIX) else name
    d = resources.files("fairfuzz.targets") / "seeds" / base
    return [f.read_bytes() for f in sorted(d.iterdir(), key=lambda f: f.name) if f.is_file()]


def load_target(out_dir, name: str) -> TargetProgram:
    """Look up a built target by name (``chunkparse`` or ``chunkparse.fork``)."""
    manifest_path = Path(out_dir) / MANIFEST
    if not manifest_path.exists():
        raise FileNotFoundError(f"no target manifest in {out_dir}; run targets-build")
    for rec in json.loads(manifest_path.read_text())["targets"]:
        if rec["name"] == name:
            rec.pop("digest", None)
            return TargetProgram(**rec)
    raise KeyError(f"unknown target {name!r}")


def target_env(scheme: Scheme, extra: dict[str, str] | None = None) -> dict[str, str]:
    env = {k: v for k, v in os.environ.items() if k not in ("FF_PERSISTENT", "FF_SHM_ID", "FF_COV_FILE")}
    env["FF_COV_SCHEME"] = scheme.env_name
    if extra:
        env.update(extra)
    return env


def wait_with_deadline(proc: subprocess.Popen, timeout_s: float) -> bool:
    """Wait for ``proc``; False if it is still running after ``timeout_s``."""
    try:
        fd = os.pidfd_open(proc.pid)
    except (AttributeError, OSError):
        try:
            proc.wait(timeout_s)
            return True
        except subprocess.TimeoutExpired:
            return False
    try:
        poller = select.poll()
        poller.register(fd, select.POLLIN)
        if not poller.poll(max(1, int(timeout_s * 1000))):
            return False
        proc.wait()
        return True
    finally:
        os.close(fd)


def stop_hung(proc: subprocess.Popen, grace_s: float = 1.0) -> None:
    """Ask the target to dump coverage (SIGUSR1); kill it if it does not comply."""
    try:
        proc.send_signal(signal.SIGUSR1)
    except ProcessLookupError:
        pass
    if not wait_with_deadline(proc, grace_s):
        proc.kill()
        proc.wait()


def spawn_once(
    target: TargetProgram,
    input_path: Path,
    cov_path: Path,
    *,
    scheme: Scheme,
    hang_ms: int,
    env: dict[str, str] | None = None,
) -> tuple[ExecStatus, CoverageMap]:
    """One fresh process: input via argv[1], coverage via ``FF_COV_FILE``."""
    try:
        cov_path.unlink()
    except FileNotFoundError:
        pass
    run_env = dict(env) if env is not None else target_env(scheme)
    run_env["FF_COV_FILE"] = str(cov_path)
    try:
        proc = subprocess.Popen(
            [target.path, str(input_path)],
            env=run_env,
            stdin=subprocess.DEVNULL,
            stdout=subprocess.DEVNULL,
            stderr=subprocess.DEVNULL,
        )
    except OSError as exc:
        raise LaunchError(f"cannot launch {target.path}: {exc}") from exc
    if wait_with_deadline(proc, hang_ms / 1000):
        rc = proc.returncode
        if rc == LAUNCH_FAILURE_EXIT:
            raise LaunchError(f"{target.name} could not read {input_path}")
        status = ExecStatus.CRASH if rc < 0 else ExecStatus.OK
    else:
        stop_hung(proc)
        status = ExecStatus.HANG
    try:
        cov = CoverageMap.load(cov_path)
    except FileNotFoundError:
        cov = CoverageMap(scheme)
    return status, cov


def run_target_once(
    target: TargetProgram,
    data: bytes,
    *,
    scheme: Scheme = Scheme.COLLISION_FREE,
    hang_ms: int = DEFAULT_HANG_MS,
) -> tuple[ExecStatus, CoverageMap]:
    """Run ``data`` through ``target`` in a fresh process."""
    if not os.access(target.path, os.X_OK):
        raise LaunchError(f"target executable missing: {target.path}")
    with tempfile.TemporaryDirectory(prefix="ff-once-") as tmp:
        input_path = Path(tmp) / "input"
        input_path.write_bytes(data)
        return spawn_once(target, input_path, Path(tmp) / "cov", scheme=scheme, hang_ms=hang_ms)
