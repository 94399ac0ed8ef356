"""Cohort analyses: categories, buckets, outliers, growth labels, peak hours,
content mix and the streaming-strategy comparison.

All follower ranges are half-open: ``[lo, hi)``.
"""

from __future__ import annotations

import enum
import math
import statistics
from collections import Counter, defaultdict
from collections.abc import Collection, Iterable, Mapping, Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .ingest import SLOTS_PER_DAY, slot_of_day
from .sessions import (DEFAULT_NON_GAMING_TAGS, ChannelRecord, ChannelWeekStats, StreamSession,
                       is_non_gaming)
from .tables import write_csv

N_BUCKETS = 20
BUCKET_WIDTH = 1000
BUCKET_LIMIT = N_BUCKETS * BUCKET_WIDTH
TOP_FRACTION = 0.05


class Category(str, enum.Enum):
    SMALL = "small"
    MEDIUM = "medium"
    BIG = "big"
    MEGA = "mega"


CATEGORY_BOUNDS = {
    Category.SMALL: (0, 5_000),
    Category.MEDIUM: (5_000, 10_000),
    Category.BIG: (10_000, 100_000),
    Category.MEGA: (100_000, None),
}


class GrowthClass(enum.IntEnum):
    BAD = -1
    AVERAGE = 0
    GOOD = 1


@dataclass(frozen=True)
class Bucket:
    index: int
    lo: int
    hi: int


@dataclass(frozen=True)
class GrowthLabel:
    cls: GrowthClass
    bucket_avg: float
    bucket: int


@dataclass(frozen=True)
class StrategyCriteria:
    min_streams_per_week: int = 5
    max_stream_hours: float = 5.0
    require_mixed_content: bool = True
    min_hours_per_week: float | None = None

    def __post_init__(self):
        if self.min_streams_per_week < 0 or self.max_stream_hours < 0:
            raise ValueError("strategy thresholds must be >= 0")
        if self.min_hours_per_week is not None and self.min_hours_per_week < 0:
            raise ValueError("strategy thresholds must be >= 0")

    def matches(self, s: ChannelWeekStats) -> bool:
        if s.streams_per_week < self.min_streams_per_week or s.streams_per_week == 0:
            return False
        if s.max_stream_hours > self.max_stream_hours:
            return False
        if self.require_mixed_content and not (s.has_gaming and s.has_non_gaming):
            return False
        if self.min_hours_per_week is not None and s.hours_per_week <= self.min_hours_per_week:
            return False
        return True


def _stats(c) -> ChannelWeekStats:
    return c.stats if isinstance(c, ChannelRecord) else c


def categorize(initial_followers: int) -> Category:
    if initial_followers < 0:
        raise ValueError("initial_followers must be >= 0")
    if initial_followers < 5_000:
        return Category.SMALL
    if initial_followers < 10_000:
        return Category.MEDIUM
    if initial_followers < 100_000:
        return Category.BIG
    return Category.MEGA


def bucketize(initial_followers: int) -> Bucket:
    if not 0 <= initial_followers < BUCKET_LIMIT:
        raise ValueError(f"{initial_followers} followers is outside the bucket range [0, {BUCKET_LIMIT})")
    i = initial_followers // BUCKET_WIDTH
    return Bucket(i, i * BUCKET_WIDTH, (i + 1) * BUCKET_WIDTH)


def in_bucket_range(channels: Iterable) -> list:
    return [c for c in channels if 0 <= _stats(c).initial_followers < BUCKET_LIMIT]


def _by_bucket(channels: Iterable) -> dict[int, list]:
    out: dict[int, list] = defaultdict(list)
    for c in channels:
        out[bucketize(_stats(c).initial_followers).index].append(c)
    return dict(sorted(out.items()))


def top_count(n: int, top_fraction: float = TOP_FRACTION) -> int:
    # round first so 0.05 * 60 (= 3.0000000000000004) yields 3, not 4
    return math.ceil(round(top_fraction * n, 9))


def isolate_outliers(channels: Iterable, top_fraction: float = TOP_FRACTION) -> set[str]:
    """Per bucket, the ceil(top_fraction * n) channels that gained the most followers."""
    if not 0 <= top_fraction <= 1:
        raise ValueError("top_fraction must be in [0, 1]")
    out: set[str] = set()
    for members in _by_bucket(channels).values():
        ranked = sorted(members, key=lambda c: (-_stats(c).followers_gained_total, _stats(c).user_id))
        out.update(_stats(c).user_id for c in ranked[:top_count(len(ranked), top_fraction)])
    return out


def bucket_averages(channels: Iterable) -> dict[int, float]:
    return {b: sum(_stats(c).followers_gained_total for c in members) / len(members)
            for b, members in _by_bucket(channels).items()}


def label_growth(channels: Sequence, averages: Mapping[int, float] | None = None) -> dict[str, GrowthLabel]:
    """bad if the channel lost followers, good if it beat its bucket average, else average."""
    if averages is None:
        averages = bucket_averages(channels)
    labels = {}
    for c in channels:
        s = _stats(c)
        b = bucketize(s.initial_followers).index
        avg = averages[b]
        if s.followers_gained_total < 0:
            cls = GrowthClass.BAD
        elif s.followers_gained_total > avg:
            cls = GrowthClass.GOOD
        else:
            cls = GrowthClass.AVERAGE
        labels[s.user_id] = GrowthLabel(cls, avg, b)
    return labels


@dataclass
class PeakProfile:
    language: str
    mean_gain: np.ndarray  # shape (48,); NaN where no active slot was observed
    counts: np.ndarray
    peaks: list[int]

    @property
    def empty(self) -> bool:
        return not self.counts.any()

    def regions(self) -> list[list[int]]:
        """Peak bins grouped into runs of adjacent bins (wrapping at midnight)."""
        if not self.peaks:
            return []
        peaks = set(self.peaks)
        if len(peaks) == SLOTS_PER_DAY:
            return [sorted(peaks)]
        start = next(b for b in range(SLOTS_PER_DAY) if b not in peaks)
        runs, cur = [], []
        for k in range(1, SLOTS_PER_DAY + 1):
            b = (start + k) % SLOTS_PER_DAY
            if b in peaks:
                cur.append(b)
            elif cur:
                runs.append(cur)
                cur = []
        if cur:
            runs.append(cur)
        return runs


def peak_hours(channels: Iterable[ChannelRecord], language: str, percentile: float = 90.0) -> PeakProfile:
    """Mean active-slot follower gain per half-hour UTC bin for one language.

    A delta is attributed to the session covering its end slot and counted
    when that session's language matches. Peak bins strictly exceed the given
    percentile of the (observed) bin means.
    """
    sums = np.zeros(SLOTS_PER_DAY)
    counts = np.zeros(SLOTS_PER_DAY, dtype=np.int64)
    language = language.lower()
    for c in channels:
        sessions = sorted(c.sessions, key=lambda x: x.start_ts)
        k = 0
        for ts, delta, active in c.gains.deltas:
            if not active:
                continue
            while k < len(sessions) and not sessions[k].contains(ts):
                k += 1
            if k == len(sessions):
                break
            if sessions[k].language == language:
                b = slot_of_day(ts)
                sums[b] += delta
                counts[b] += 1
    with np.errstate(invalid="ignore", divide="ignore"):
        means = np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)
    peaks: list[int] = []
    if counts.any():
        threshold = np.nanpercentile(means, percentile)
        peaks = [int(b) for b in np.flatnonzero(np.nan_to_num(means, nan=-np.inf) > threshold)]
    return PeakProfile(language, means, counts, peaks)


def content_split(sessions: Iterable[StreamSession],
                  non_gaming_tags: Collection[str] = DEFAULT_NON_GAMING_TAGS) -> dict[str, float]:
    if not non_gaming_tags:
        raise ValueError("non_gaming_tags must be non-empty")
    flags = [is_non_gaming(x, non_gaming_tags) for x in sessions]
    if not flags:
        return {"gaming_pct": 0.0, "non_gaming_pct": 0.0}
    ng = 100.0 * sum(flags) / len(flags)
    return {"gaming_pct": 100.0 - ng, "non_gaming_pct": ng}


@dataclass
class StrategyComparison:
    n_all: int
    n_matching: int
    mean_gained_all: float
    mean_gained_matching: float | None
    median_gained_all: float
    median_gained_matching: float | None
    mean_viewers_all: float
    mean_viewers_matching: float | None
    matching_users: list[str]

    @property
    def mean_ratio(self) -> float | None:
        if self.mean_gained_matching is None or self.mean_gained_all == 0:
            return None
        return self.mean_gained_matching / self.mean_gained_all

    def rows(self):
        return [
            ("channels", self.n_all, self.n_matching),
            ("average_followers_gained", self.mean_gained_all, self.mean_gained_matching),
            ("median_followers_gained", self.median_gained_all, self.median_gained_matching),
            ("average_viewers_per_hour", self.mean_viewers_all, self.mean_viewers_matching),
        ]


def compare_strategy(channels: Iterable, criteria: StrategyCriteria = StrategyCriteria()) -> StrategyComparison:
    stats = [_stats(c) for c in channels]
    if not stats:
        raise ValueError("no channels to compare")
    match = [s for s in stats if criteria.matches(s)]

    def viewers(group):
        streamed = [s.avg_viewers for s in group if s.hours_per_week > 0]
        return statistics.fmean(streamed) if streamed else 0.0

    gains = [s.followers_gained_total for s in stats]
    mgains = [s.followers_gained_total for s in match]
    return StrategyComparison(
        n_all=len(stats),
        n_matching=len(match),
        mean_gained_all=statistics.fmean(gains),
        mean_gained_matching=statistics.fmean(mgains) if match else None,
        median_gained_all=float(statistics.median(gains)),
        median_gained_matching=float(statistics.median(mgains)) if match else None,
        mean_viewers_all=viewers(stats),
        mean_viewers_matching=viewers(match) if match else None,
        matching_users=sorted(s.user_id for s in match),
    )


# -- table exports ------------------------------------------------------------

def category_table(channels: Iterable) -> list[tuple[str, str, int]]:
    counts = Counter(categorize(_stats(c).initial_followers) for c in channels)
    rows = []
    for cat, (lo, hi) in CATEGORY_BOUNDS.items():
        rng = f"{lo}-{hi}" if hi is not None else f">={lo}"
        rows.append((cat.value, rng, counts.get(cat, 0)))
    return rows


def write_category_table(channels, path: str | Path) -> int:
    return write_csv(path, ("category", "initial_followers", "users"), category_table(channels))


def write_content_table(all_sessions, outlier_sessions, path, non_gaming_tags=DEFAULT_NON_GAMING_TAGS) -> int:
    a = content_split(all_sessions, non_gaming_tags)
    o = content_split(outlier_sessions, non_gaming_tags)
    rows = [("gaming", a["gaming_pct"], o["gaming_pct"]),
            ("non-gaming", a["non_gaming_pct"], o["non_gaming_pct"])]
    return write_csv(path, ("content", "entire_dataset_pct", "outliers_pct"), rows)


def write_strategy_table(cmp: StrategyComparison, path: str | Path) -> int:
    return write_csv(path, ("metric", "entire_dataset", "strategy"), cmp.rows())


def write_bucket_table(averages: Mapping[int, float], path: str | Path) -> int:
    rows = []
    for b in range(N_BUCKETS):
        lo, hi = b * BUCKET_WIDTH, (b + 1) * BUCKET_WIDTH
        rows.append((b, f"{lo}-{hi}", averages.get(b, float("nan"))))
    return write_csv(path, ("bucket", "initial_followers", "average_followers_gained"), rows)


def write_class_table(labels: Mapping[str, GrowthLabel], path: str | Path) -> int:
    counts = Counter(l.cls for l in labels.values())
    rows = [(name, int(cls), counts.get(cls, 0)) for name, cls in
            (("good", GrowthClass.GOOD), ("average", GrowthClass.AVERAGE), ("bad", GrowthClass.BAD))]
    rows.append(("total", "", len(labels)))
    return write_csv(path, ("class", "code", "users"), rows)


def write_peak_profile(profile: PeakProfile, path: str | Path) -> int:
    peaks = set(profile.peaks)
    rows = [(b, f"{b // 2:02d}:{30 * (b % 2):02d}", float(profile.mean_gain[b]), b in peaks)
            for b in range(SLOTS_PER_DAY)]
    return write_csv(path, ("bin", "utc_start", "mean_gain", "is_peak"), rows)
