"""Fictitious self-play: opponent pool lifecycle and the two-stage bootstrap.

The pool holds frozen policy snapshots. One opponent is drawn uniformly at
every episode start and kept until the episode ends; the pool grows with a
snapshot of the current learner on a fixed episode cadence and replaces a
uniformly random member once full.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, replace

import numpy as np
import yaml

from .errors import ConfigError
from .policy import PolicySnapshot, load_snapshot, save_snapshot

POOL_FORMAT_VERSION = 1

POOL_CAPACITY = 25
POOL_ADD_INTERVAL = 1000
CHECKPOINTS_PER_STRATEGY = 8
STAGE2_STRATEGIES = ("balanced", "aggressive", "defensive")


@dataclass(frozen=True)
class OpponentPool:
    """Bounded collection of frozen opponents plus its growth-schedule state."""

    members: tuple[PolicySnapshot, ...]
    episodes_since_add: int = 0
    add_interval: int = POOL_ADD_INTERVAL
    capacity: int = POOL_CAPACITY

    def __post_init__(self):
        if not 1 <= len(self.members) <= self.capacity:
            raise ConfigError(
                f"pool size {len(self.members)} outside [1, {self.capacity}]"
            )

    @property
    def size(self) -> int:
        return len(self.members)


def sample_opponent(pool: OpponentPool, rng: np.random.Generator) -> PolicySnapshot:
    """Uniform draw; the caller keeps it for the whole episode."""
    if pool.size == 0:
        raise ValueError("cannot sample from an empty pool")
    return pool.members[int(rng.integers(pool.size))]


def maybe_add(
    pool: OpponentPool,
    current: PolicySnapshot,
    episode_index: int,
    rng: np.random.Generator,
) -> OpponentPool:
    """Grow the pool when `episode_index` hits the add interval.

    At every positive multiple of `add_interval` a snapshot of the current
    learner joins the pool; when full, a uniformly random existing member is
    replaced (never the one being added).
    """
    since = episode_index % pool.add_interval
    if episode_index <= 0 or since != 0:
        return replace(pool, episodes_since_add=since)
    members = list(pool.members)
    if len(members) >= pool.capacity:
        del members[int(rng.integers(len(members)))]
    members.append(current)
    return replace(pool, members=tuple(members), episodes_since_add=0)


def evenly_spaced_checkpoints(
    history: list[PolicySnapshot], count: int = CHECKPOINTS_PER_STRATEGY
) -> list[PolicySnapshot]:
    """Pick `count` checkpoints evenly spread over a training history."""
    if len(history) < count:
        raise ConfigError(f"need at least {count} checkpoints, have {len(history)}")
    idx = np.round(np.linspace(0, len(history) - 1, count)).astype(int)
    return [history[i] for i in idx]


def bootstrap_stage2(
    checkpoints: dict[str, list[PolicySnapshot]], baseline: PolicySnapshot
) -> OpponentPool:
    """Stage-2 pool: the baseline plus eight checkpoints from each strategy."""
    members = [baseline]
    for strategy in STAGE2_STRATEGIES:
        snaps = checkpoints.get(strategy, [])
        if len(snaps) != CHECKPOINTS_PER_STRATEGY:
            raise ConfigError(
                f"stage-2 bootstrap needs exactly {CHECKPOINTS_PER_STRATEGY} "
                f"{strategy} checkpoints, got {len(snaps)}"
            )
        members.extend(snaps)
    return OpponentPool(members=tuple(members))


class SelfPlayOpponents:
    """Training-loop adapter: per-episode sampling plus scheduled pool growth."""

    def __init__(self, pool: OpponentPool):
        self.pool = pool
        self.episode_index = 0

    def sample(self, rng: np.random.Generator) -> PolicySnapshot:
        return sample_opponent(self.pool, rng)

    def after_episode(self, make_current, rng: np.random.Generator) -> None:
        self.episode_index += 1
        if self.episode_index % self.pool.add_interval == 0:
            self.pool = maybe_add(self.pool, make_current(), self.episode_index, rng)
        else:
            self.pool = replace(
                self.pool, episodes_since_add=self.episode_index % self.pool.add_interval
            )


class FixedOpponent:
    """Degenerate source: the same single opponent every episode."""

    def __init__(self, snapshot: PolicySnapshot):
        self.snapshot = snapshot

    def sample(self, rng: np.random.Generator) -> PolicySnapshot:
        return self.snapshot

    def after_episode(self, make_current, rng: np.random.Generator) -> None:
        pass


def _file_sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        digest.update(fh.read())
    return digest.hexdigest()


def save_pool(directory, pool: OpponentPool) -> str:
    """Write every member checkpoint plus a manifest enabling exact reconstruction."""
    os.makedirs(directory, exist_ok=True)
    entries = []
    for i, member in enumerate(pool.members):
        name = f"pool_{i:02d}_{member.kind}_{member.strategy}.ckpt"
        path = os.path.join(directory, name)
        save_snapshot(path, member)
        entries.append({"path": name, "sha256": _file_sha256(path)})
    manifest = {
        "format_version": POOL_FORMAT_VERSION,
        "add_interval": pool.add_interval,
        "capacity": pool.capacity,
        "episodes_since_add": pool.episodes_since_add,
        "members": entries,
    }
    manifest_path = os.path.join(directory, "pool_manifest.yaml")
    with open(manifest_path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(manifest, fh, sort_keys=False)
    return manifest_path


def load_pool(manifest_path) -> OpponentPool:
    """Rebuild a pool from its manifest, verifying checkpoint hashes."""
    with open(manifest_path, "r", encoding="utf-8") as fh:
        manifest = yaml.safe_load(fh)
    if not isinstance(manifest, dict) or manifest.get("format_version") != POOL_FORMAT_VERSION:
        raise ConfigError(f"{manifest_path}: unsupported pool manifest")
    base = os.path.dirname(str(manifest_path))
    members = []
    for entry in manifest["members"]:
        path = os.path.join(base, entry["path"])
        actual = _file_sha256(path)
        if actual != entry["sha256"]:
            raise ConfigError(f"{path}: checkpoint hash mismatch (pool manifest is stale)")
        members.append(load_snapshot(path))
    return OpponentPool(
        members=tuple(members),
        episodes_since_add=int(manifest.get("episodes_since_add", 0)),
        add_interval=int(manifest.get("add_interval", POOL_ADD_INTERVAL)),
        capacity=int(manifest.get("capacity", POOL_CAPACITY)),
    )
