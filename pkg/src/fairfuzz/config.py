"""Flat ``key = value`` campaign configuration with strict key checking."""
from __future__ import annotations

import hashlib
import os
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from fairfuzz.neuzz.corpus import DEFAULT_BUDGET
from fairfuzz.targets.build import DEFAULT_HANG_MS

MODES = ("persistent", "fork")
ENGINES = ("random", "neuzz")


class ConfigError(ValueError):
    """Invalid campaign configuration; ``field`` names the offending key."""

    def __init__(self, message: str, field: str | None = None):
        super().__init__(f"{field}: {message}" if field else message)
        self.field = field


@dataclass(frozen=True)
class CampaignConfig:
    target: str
    mode: str
    engine: str
    seeds: Path
    duration: float
    output: Path
    train_budget: int = DEFAULT_BUDGET
    rng_seed: int = 0
    hang_ms: int = DEFAULT_HANG_MS

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"must be one of {MODES}, got {self.mode!r}", "mode")
        if self.engine not in ENGINES:
            raise ConfigError(f"must be one of {ENGINES}, got {self.engine!r}", "engine")
        if self.duration < 0:
            raise ConfigError("must be >= 0", "duration")
        if self.train_budget < 1:
            raise ConfigError("must be >= 1", "train_budget")
        if self.hang_ms < 1:
            raise ConfigError("must be >= 1", "hang_ms")

    def digest(self) -> str:
        """Stable hash of the settings that define the campaign."""
        items = sorted((k, str(v)) for k, v in asdict(self).items())
        return hashlib.sha256(repr(items).encode()).hexdigest()[:16]

    def seed_files(self) -> list[Path]:
        p = Path(self.seeds)
        if p.is_file():
            return [p]
        if p.is_dir():
            return sorted(f for f in p.iterdir() if f.is_file() and not f.name.startswith("."))
        raise ConfigError(f"seed path {p} does not exist", "seeds")


_CONVERT = {"duration": float, "train_budget": int, "rng_seed": int, "hang_ms": int}
_REQUIRED = ("target", "mode", "engine", "seeds", "duration", "output")
_ENV_OVERRIDES = {"FF_RNG_SEED": "rng_seed", "FF_HANG_MS": "hang_ms"}


def parse_config(text: str, base_dir=".", env=None) -> CampaignConfig:
    """Parse ``key = value`` lines; ``#`` starts a comment.

    Unknown or repeated keys are rejected, and so is a zero duration (the
    dataclass itself accepts 0 for dry runs through the API).  Relative paths resolve against
    ``base_dir``.  ``FF_RNG_SEED`` / ``FF_HANG_MS`` in ``env`` override the file.
    """
    env = os.environ if env is None else env
    known = {f.name for f in fields(CampaignConfig)}
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in known:
            raise ConfigError(f"unknown key (line {lineno})", key)
        if key in raw:
            raise ConfigError(f"repeated key (line {lineno})", key)
        raw[key] = value
    for var, key in _ENV_OVERRIDES.items():
        if env.get(var):
            raw[key] = env[var]
    for key in _REQUIRED:
        if key not in raw:
            raise ConfigError("missing required key", key)
    values: dict[str, object] = {}
    for key, value in raw.items():
        conv = _CONVERT.get(key)
        try:
            values[key] = conv(value) if conv else value
        except ValueError:
            raise ConfigError(f"cannot parse {value!r}", key) from None
    if values["duration"] <= 0:
        raise ConfigError("must be > 0", "duration")
    base = Path(base_dir)
    for key in ("seeds", "output"):
        p = Path(str(values[key]))
        values[key] = p if p.is_absolute() else base / p
    return CampaignConfig(**values)


def load_config(path, env=None) -> CampaignConfig:
    p = Path(path)
    return parse_config(p.read_text(), p.parent, env)
