"""Instrumented toy fuzz targets and the target side of persistent mode."""
from fairfuzz.targets.build import (
    DEFAULT_HANG_MS,
    FORK_SUFFIX,
    MARKER,
    TARGET_NAMES,
    BuildError,
    EdgeSite,
    LaunchError,
    TargetProgram,
    build_targets,
    bundled_seeds,
    default_targets_dir,
    ensure_targets,
    load_target,
    run_target_once,
)
from fairfuzz.targets.channel import (
    CHANNEL_SIZE,
    PAYLOAD_CAPACITY,
    ChannelStatus,
    ExecStatus,
    PersistentChannel,
    persistent_loop,
    transitions_in_order,
)

__all__ = [
    "CHANNEL_SIZE",
    "DEFAULT_HANG_MS",
    "FORK_SUFFIX",
    "MARKER",
    "PAYLOAD_CAPACITY",
    "TARGET_NAMES",
    "BuildError",
    "ChannelStatus",
    "EdgeSite",
    "ExecStatus",
    "LaunchError",
    "PersistentChannel",
    "TargetProgram",
    "build_targets",
    "bundled_seeds",
    "default_targets_dir",
    "ensure_targets",
    "load_target",
    "persistent_loop",
    "run_target_once",
    "transitions_in_order",
]
