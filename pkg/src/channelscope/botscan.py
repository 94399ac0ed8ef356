"""Isolated follower-step detection and dataset filtering.

With ``d[j] = f[j+1] - f[j]`` a slot ``j`` is flagged when its jump dwarfs
both neighbouring jumps::

    |d[j]| > ratio * |d[j-1]|  and  |d[j]| > ratio * |d[j+1]|  and  |d[j]| >= min_jump

for ``1 <= j <= len(d) - 2``. Any flagged slot marks the whole channel.

Note that a one-slot spike that immediately reverts is *not* caught: its
second edge is as large as the first, so neither edge beats its neighbour.
A neighbour delta of zero makes any non-zero jump pass the ratio test; use
``min_jump`` to require a minimum absolute step when that matters.
"""

from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .ingest import GRID, ChannelSnapshot, SnapshotStore
from .tables import write_json

log = logging.getLogger(__name__)

TIER_10K = 10_000
TIER_100K = 100_000


@dataclass(frozen=True)
class BotScanConfig:
    ratio: float = 100.0
    min_jump: int = 0

    def __post_init__(self):
        if not self.ratio > 1:
            raise ValueError(f"ratio must be > 1, got {self.ratio}")
        if self.min_jump < 0:
            raise ValueError("min_jump must be >= 0")


@dataclass
class BotScanReport:
    removed: list[tuple[str, list[int]]] = field(default_factory=list)
    gt10k: int = 0
    gt100k: int = 0
    scanned: int = 0

    @property
    def suspicious_users(self) -> list[str]:
        return [u for u, _ in self.removed]

    def to_dict(self) -> dict:
        return {
            "removed": [{"user_id": u, "flags": flags} for u, flags in self.removed],
            "tiers": {"gt10k": self.gt10k, "gt100k": self.gt100k},
        }

    def write(self, path: str | Path) -> None:
        write_json(path, self.to_dict())


def detect_bot_behavior(followers: Sequence[int] | np.ndarray,
                        config: BotScanConfig = BotScanConfig()) -> list[int]:
    """Indices ``j`` of the difference series that satisfy the step predicate."""
    f = np.asarray(followers, dtype=np.float64)
    if f.size < 4:
        return []
    d = np.abs(np.diff(f))
    mid, left, right = d[1:-1], d[:-2], d[2:]
    hit = (mid > config.ratio * left) & (mid > config.ratio * right) & (mid >= config.min_jump)
    return (np.flatnonzero(hit) + 1).tolist()


def forward_filled_followers(snapshots: Sequence[ChannelSnapshot]) -> np.ndarray:
    """Follower counts on the uniform grid, carrying the last value over missing slots."""
    if not snapshots:
        return np.zeros(0, dtype=np.int64)
    t0 = snapshots[0].ts
    idx = np.fromiter(((s.ts - t0) // GRID for s in snapshots), dtype=np.int64, count=len(snapshots))
    vals = np.fromiter((s.followers for s in snapshots), dtype=np.int64, count=len(snapshots))
    if idx[-1] == len(snapshots) - 1:
        return vals
    out = np.empty(idx[-1] + 1, dtype=np.int64)
    # position of the latest observation at or before each grid slot
    pos = np.searchsorted(idx, np.arange(idx[-1] + 1), side="right") - 1
    out[:] = vals[pos]
    return out


def filter_dataset(store: SnapshotStore, config: BotScanConfig = BotScanConfig()) -> tuple[SnapshotStore, BotScanReport]:
    report = BotScanReport(scanned=len(store))
    for uid, snaps in store.items():
        flags = detect_bot_behavior(forward_filled_followers(snaps), config)
        if flags:
            report.removed.append((uid, flags))
            initial = snaps[0].followers
            report.gt10k += initial > TIER_10K
            report.gt100k += initial > TIER_100K
    if report.removed:
        log.info("botscan: removing %d of %d channels", len(report.removed), len(store))
    return store.without(report.suspicious_users), report
