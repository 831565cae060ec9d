"""On-disk campaign output: four result directories and provenance filenames.

Layout under the root::

    NEUZZ_out/   new-edge testcases of the parent's length (the queue)
    vari_seed/   new-edge testcases produced by insertion/deletion
    crash/       crashing testcases
    hang/        testcases over the hang threshold
    layout.meta  key=value: counter, campaign config hash, mode, target, ...

Files are named ``id:NNNNNN,src:NNNNNN,op:<kind>``.
"""
from __future__ import annotations

import enum
import os
import re
import tempfile
import warnings
from dataclasses import dataclass
from pathlib import Path

QUEUE_DIR = "NEUZZ_out"
VARIANT_DIR = "vari_seed"
CRASH_DIR = "crash"
HANG_DIR = "hang"
META_FILE = "layout.meta"
STATS_FILE = "stats.log"

_NAME = re.compile(r"^id:(\d{6}),src:(\d{6}),op:([\w.-]+)$")


class Disposition(enum.Enum):
    NEW_EDGE_FIXED = "queue"
    NEW_EDGE_VARIANT = "variant"
    CRASH = "crash"
    HANG = "hang"


class Selection(enum.Enum):
    ALL = "all"
    QUEUE_ONLY = "queue-only"


DIRS = {
    Disposition.NEW_EDGE_FIXED: QUEUE_DIR,
    Disposition.NEW_EDGE_VARIANT: VARIANT_DIR,
    Disposition.CRASH: CRASH_DIR,
    Disposition.HANG: HANG_DIR,
}


class LayoutError(RuntimeError):
    """The output layout on disk is missing a directory or is malformed."""


class IncompleteCollectionWarning(FutureWarning):
    """Only part of the output directories were enumerated; do not evaluate from it."""


@dataclass(frozen=True)
class TestCase:
    data: bytes
    parent: int | None = None
    op: str = "seed"
    variant_length: bool = False
    id: int | None = None
    disposition: Disposition | None = None

    __test__ = False  # not a pytest class


class OutputLayout:
    def __init__(self, root):
        self.root = Path(root)
        self.counter = 0
        self.meta: dict[str, str] = {}

    @classmethod
    def create(cls, root, **meta) -> "OutputLayout":
        """Create (or reopen) the four directories; idempotent."""
        layout = cls(root)
        for d in DIRS.values():
            (layout.root / d).mkdir(parents=True, exist_ok=True)
        if (layout.root / META_FILE).exists():
            layout._read_meta()
        layout.meta.update({k: str(v) for k, v in meta.items()})
        layout._write_meta()
        return layout

    @classmethod
    def open(cls, root) -> "OutputLayout":
        layout = cls(root)
        if not layout.root.is_dir():
            raise LayoutError(f"layout root {layout.root} does not exist")
        for d in DIRS.values():
            if not (layout.root / d).is_dir():
                raise LayoutError(f"layout {layout.root} is missing directory {d!r}")
        if (layout.root / META_FILE).exists():
            layout._read_meta()
        return layout

    def _read_meta(self) -> None:
        for line in (self.root / META_FILE).read_text().splitlines():
            if "=" in line:
                k, v = line.split("=", 1)
                self.meta[k.strip()] = v.strip()
        self.counter = int(self.meta.get("counter", "0"))

    def _write_meta(self) -> None:
        self.meta["counter"] = str(self.counter)
        body = "".join(f"{k}={v}\n" for k, v in sorted(self.meta.items()))
        _atomic_write(self.root / META_FILE, body.encode())

    def reset(self) -> None:
        """Drop every saved testcase and the counter (keeps the directories)."""
        for d in DIRS.values():
            for f in (self.root / d).iterdir():
                f.unlink()
        self.counter = 0
        stats = self.root / STATS_FILE
        if stats.exists():
            stats.unlink()
        self._write_meta()

    def path_for(self, disposition: Disposition) -> Path:
        return self.root / DIRS[disposition]

    def save(self, tc: TestCase, disposition: Disposition) -> Path:
        """Store ``tc`` in the directory for ``disposition`` and bump the counter."""
        ident = self.counter
        src = ident if tc.parent is None else tc.parent
        name = f"id:{ident:06d},src:{src:06d},op:{tc.op}"
        path = self.path_for(disposition) / name
        _atomic_write(path, tc.data)
        self.counter += 1
        self.meta["counter"] = str(self.counter)
        return path

    def flush(self) -> None:
        self._write_meta()

    def enumerate(self, selection: Selection | str = Selection.ALL, *, dirs=None) -> list[TestCase]:
        """Saved testcases in counter order.

        ``Selection.QUEUE_ONLY`` reproduces the incomplete collection that
        skips ``vari_seed``/``crash``/``hang`` and warns accordingly.  ``dirs``
        picks an explicit subset of dispositions instead.
        """
        selection = Selection(selection)
        if dirs is None:
            dirs = list(DIRS) if selection is Selection.ALL else [Disposition.NEW_EDGE_FIXED]
        if set(dirs) != set(DIRS):
            warnings.warn(
                f"enumerating only {[DIRS[d] for d in dirs]}; coverage evaluated from this "
                "subset undercounts the campaign",
                IncompleteCollectionWarning,
                stacklevel=2,
            )
        out = []
        for disp in dirs:
            d = self.root / DIRS[disp]
            if not d.is_dir():
                raise LayoutError(f"layout {self.root} is missing directory {DIRS[disp]!r}")
            for f in d.iterdir():
                m = _NAME.match(f.name)
                if not m:
                    continue
                ident, src, op = int(m.group(1)), int(m.group(2)), m.group(3)
                out.append(TestCase(
                    f.read_bytes(),
                    parent=src,
                    op=op,
                    variant_length=disp is Disposition.NEW_EDGE_VARIANT,
                    id=ident,
                    disposition=disp,
                ))
        out.sort(key=lambda t: t.id)
        return out


def save_testcase(layout: OutputLayout, tc: TestCase, disposition: Disposition) -> Path:
    return layout.save(tc, disposition)


def _atomic_write(path: Path, data: bytes) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise
