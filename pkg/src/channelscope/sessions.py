"""Stream sessions, follower-gain series and per-channel weekly aggregates.

Everything here is a pure function of one channel's snapshots, so channels can
be processed independently.
"""

from __future__ import annotations

import bisect
from collections import Counter
from collections.abc import Collection, Iterable, Mapping, Sequence
from dataclasses import asdict, dataclass, field, fields
from datetime import date, datetime, timedelta
from pathlib import Path

from .ingest import GRID, ChannelProfile, ChannelSnapshot, GamePopularityRecord, SnapshotStore, format_ts
from .tables import write_csv

# Platform categories treated as non-gaming content. Override per run as needed.
DEFAULT_NON_GAMING_TAGS = frozenset({
    "Just Chatting", "Music", "Art", "ASMR", "IRL",
    "Talk Shows & Podcasts", "Sports", "Travel & Outdoors",
})
POPULAR_TOP_K = 20
SHORT_HOURS, LONG_HOURS = 5.0, 10.0

SESSION_HEADER = ("user_id", "stream_id", "start_ts", "end_ts", "duration_hours",
                  "avg_viewers", "start_viewers", "followers_gained", "language")


@dataclass(frozen=True)
class StreamSession:
    user_id: str
    stream_id: str | None
    start_ts: datetime
    end_ts: datetime
    duration_hours: float
    avg_viewers: float
    start_viewers: int
    followers_gained: int
    games: tuple[str, ...] = ()
    tags: tuple[str, ...] = ()
    language: str = ""
    primary_tag: str = ""

    def contains(self, ts: datetime) -> bool:
        return self.start_ts <= ts < self.end_ts

    def days(self) -> list[date]:
        last = (self.end_ts - timedelta(microseconds=1)).date()
        d, out = self.start_ts.date(), []
        while d <= last:
            out.append(d)
            d += timedelta(days=1)
        return out


@dataclass(frozen=True)
class GainSeries:
    user_id: str
    deltas: tuple[tuple[datetime, int, bool], ...] = ()

    @property
    def total(self) -> int:
        return sum(d for _, d, _ in self.deltas)

    @property
    def active_total(self) -> int:
        return sum(d for _, d, a in self.deltas if a)

    @property
    def inactive_total(self) -> int:
        return sum(d for _, d, a in self.deltas if not a)


@dataclass(frozen=True)
class ChannelWeekStats:
    user_id: str
    initial_followers: int
    streams_per_week: int = 0
    hours_per_week: float = 0.0
    followers_gained_total: int = 0
    followers_gained_active: int = 0
    followers_gained_inactive: int = 0
    n_streams_lt5h: int = 0
    n_streams_5to10h: int = 0
    n_streams_gt10h: int = 0
    has_gaming: bool = False
    has_non_gaming: bool = False
    played_popular_game: bool = False
    language: str = ""
    # not part of the feature set; used by the strategy comparison
    avg_viewers: float = 0.0
    max_stream_hours: float = 0.0


@dataclass
class ChannelRecord:
    """One channel's derived data, as consumed by cohort and learn."""
    profile: ChannelProfile
    sessions: list[StreamSession]
    gains: GainSeries
    stats: ChannelWeekStats
    snapshots: list[ChannelSnapshot] = field(default_factory=list, repr=False)

    @property
    def user_id(self) -> str:
        return self.profile.user_id


def _mode(values: Iterable[str]) -> str:
    counts = Counter(v for v in values if v)
    if not counts:
        return ""
    best = max(counts.values())
    return min(v for v, c in counts.items() if c == best)


def duration_class(hours: float) -> int:
    """0 for [0,5) hours, 1 for [5,10), 2 for [10, inf)."""
    if hours < SHORT_HOURS:
        return 0
    if hours < LONG_HOURS:
        return 1
    return 2


def _close(run: list[tuple[int, ChannelSnapshot]], snaps: Sequence[ChannelSnapshot]) -> StreamSession:
    first_i, first = run[0]
    last_i, last = run[-1]
    end = last.ts + GRID
    viewers = [s.viewers for _, s in run if s.viewers is not None]
    base = snaps[first_i - 1].followers if first_i > 0 else first.followers
    games = tuple(dict.fromkeys(s.game_id for _, s in run if s.game_id))
    tags = tuple(dict.fromkeys(t for _, s in run for t in s.tags))
    return StreamSession(
        user_id=first.user_id,
        stream_id=first.stream_id,
        start_ts=first.ts,
        end_ts=end,
        duration_hours=(end - first.ts) / timedelta(hours=1),
        avg_viewers=sum(viewers) / len(viewers) if viewers else 0.0,
        start_viewers=first.viewers or 0,
        followers_gained=last.followers - base,
        games=games,
        tags=tags,
        language=_mode(s.language for _, s in run),
        primary_tag=_mode(s.game_name or "" for _, s in run) or (tags[0] if tags else ""),
    )


def sort_snapshots(snapshots: Iterable[ChannelSnapshot]) -> list[ChannelSnapshot]:
    return sorted(snapshots, key=lambda s: s.ts)


def build_sessions(snapshots: Iterable[ChannelSnapshot]) -> list[StreamSession]:
    """Group live snapshots into sessions.

    A run continues while the stream id stays the same and at most one grid
    slot is missing between consecutive live snapshots; an offline snapshot
    always ends it. Duration counts the run's full span in half-hour slots.
    """
    snaps = sort_snapshots(snapshots)
    sessions: list[StreamSession] = []
    run: list[tuple[int, ChannelSnapshot]] = []
    for i, s in enumerate(snaps):
        if not s.live:
            if run:
                sessions.append(_close(run, snaps))
                run = []
            continue
        if run:
            prev = run[-1][1]
            if s.stream_id != prev.stream_id or s.ts - prev.ts > 2 * GRID:
                sessions.append(_close(run, snaps))
                run = []
        run.append((i, s))
    if run:
        sessions.append(_close(run, snaps))
    return sessions


def gain_series(snapshots: Iterable[ChannelSnapshot], sessions: Sequence[StreamSession]) -> GainSeries:
    snaps = sort_snapshots(snapshots)
    if len(snaps) < 2:
        return GainSeries(snaps[0].user_id if snaps else "")
    ordered = sorted(sessions, key=lambda x: x.start_ts)
    starts = [x.start_ts for x in ordered]

    def active(ts):
        k = bisect.bisect_right(starts, ts) - 1
        return k >= 0 and ordered[k].contains(ts)

    deltas = tuple((b.ts, b.followers - a.followers, active(b.ts)) for a, b in zip(snaps, snaps[1:]))
    return GainSeries(snaps[0].user_id, deltas)


def popular_by_day(records: Iterable[GamePopularityRecord], top_k: int = POPULAR_TOP_K) -> dict[date, frozenset[str]]:
    out: dict[date, set[str]] = {}
    for r in records:
        if r.rank <= top_k:
            out.setdefault(r.date, set()).add(r.game_id)
    return {d: frozenset(g) for d, g in out.items()}


def played_popular(session: StreamSession, popular: Mapping[date, Collection[str]] | Collection[str]) -> bool:
    """Whether any game of the session was popular on a day the session touched.

    ``popular`` is either a per-day mapping (from :func:`popular_by_day`) or
    a flat set applied to every day.
    """
    if isinstance(popular, Mapping):
        return any(g in popular.get(d, ()) for d in session.days() for g in session.games)
    return any(g in popular for g in session.games)


def is_non_gaming(session: StreamSession, non_gaming_tags: Collection[str] = DEFAULT_NON_GAMING_TAGS) -> bool:
    return session.primary_tag in non_gaming_tags


def week_stats(profile: ChannelProfile, sessions: Sequence[StreamSession], gains: GainSeries,
               popular_games: Mapping[date, Collection[str]] | Collection[str] = frozenset(),
               non_gaming_tags: Collection[str] = DEFAULT_NON_GAMING_TAGS) -> ChannelWeekStats:
    classes = Counter(duration_class(x.duration_hours) for x in sessions)
    non_gaming = [is_non_gaming(x, non_gaming_tags) for x in sessions]
    hours = sum(x.duration_hours for x in sessions)
    weighted_viewers = sum(x.avg_viewers * x.duration_hours for x in sessions)
    return ChannelWeekStats(
        user_id=profile.user_id,
        initial_followers=profile.initial_followers,
        streams_per_week=len(sessions),
        hours_per_week=hours,
        followers_gained_total=gains.total,
        followers_gained_active=gains.active_total,
        followers_gained_inactive=gains.inactive_total,
        n_streams_lt5h=classes[0],
        n_streams_5to10h=classes[1],
        n_streams_gt10h=classes[2],
        has_gaming=any(not ng for ng in non_gaming),
        has_non_gaming=any(non_gaming),
        played_popular_game=any(played_popular(x, popular_games) for x in sessions),
        language=_mode(x.language for x in sessions),
        avg_viewers=weighted_viewers / hours if hours else 0.0,
        max_stream_hours=max((x.duration_hours for x in sessions), default=0.0),
    )


def analyze_channel(snapshots: Sequence[ChannelSnapshot], profile: ChannelProfile | None = None,
                    popular_games=frozenset(), non_gaming_tags=DEFAULT_NON_GAMING_TAGS,
                    keep_snapshots: bool = False) -> ChannelRecord:
    snaps = sort_snapshots(snapshots)
    if profile is None:
        profile = ChannelProfile(snaps[0].user_id, snaps[0].followers)
    sess = build_sessions(snaps)
    gains = gain_series(snaps, sess)
    stats = week_stats(profile, sess, gains, popular_games, non_gaming_tags)
    return ChannelRecord(profile, sess, gains, stats, snaps if keep_snapshots else [])


def analyze_store(store: SnapshotStore, popular_games=frozenset(),
                  non_gaming_tags=DEFAULT_NON_GAMING_TAGS,
                  media_counts=None, keep_snapshots: bool = False) -> list[ChannelRecord]:
    profiles = store.profiles(media_counts)
    return [analyze_channel(snaps, profiles[uid], popular_games, non_gaming_tags, keep_snapshots)
            for uid, snaps in store.items()]


def session_rows(sessions: Iterable[StreamSession]):
    for x in sessions:
        yield (x.user_id, x.stream_id, format_ts(x.start_ts), format_ts(x.end_ts),
               x.duration_hours, x.avg_viewers, x.start_viewers, x.followers_gained, x.language)


def write_sessions_csv(sessions: Iterable[StreamSession], path: str | Path) -> int:
    return write_csv(path, SESSION_HEADER, session_rows(sessions))


WEEK_STATS_HEADER = tuple(f.name for f in fields(ChannelWeekStats))


def write_week_stats_csv(stats: Iterable[ChannelWeekStats], path: str | Path) -> int:
    return write_csv(path, WEEK_STATS_HEADER, (tuple(asdict(s).values()) for s in stats))
