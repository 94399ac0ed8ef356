"""Snapshot data model, telemetry sources and the rotating polling schedule.

A channel is observed every 30 minutes. Each observation becomes a
:class:`ChannelSnapshot`; snapshots are persisted as a line-delimited JSON log
and reloaded into a :class:`SnapshotStore` for analysis.
"""

from __future__ import annotations

import csv
import gzip
import io
import json
import logging
import os
import threading
import time
from collections import deque
from collections.abc import Iterable, Iterator, Mapping, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta, timezone
from pathlib import Path
from typing import Any, Protocol

import httpx

log = logging.getLogger(__name__)

GRID = timedelta(minutes=30)
SLOTS_PER_DAY = 48
SLOTS_PER_WEEK = 7 * SLOTS_PER_DAY
TOKEN_ENV = "CHANNELSCOPE_API_TOKEN"

LOG_KEYS = ("ts", "user_id", "live", "followers", "stream_id", "viewers",
            "game_id", "game_name", "language", "tags")
GAMES_HEADER = ("date", "game_id", "rank", "viewers")


class IngestError(Exception):
    pass


class SourceUnavailable(IngestError):
    """The source did not answer (transient; retried)."""


class MalformedPayload(IngestError):
    """The source answered with something that is not a valid channel record."""


class EmptyStoreError(IngestError):
    pass


# -- timestamps ---------------------------------------------------------------

def parse_ts(value: str) -> datetime:
    if not isinstance(value, str):
        raise ValueError(f"timestamp must be a string, got {type(value).__name__}")
    ts = datetime.fromisoformat(value.replace("Z", "+00:00"))
    if ts.tzinfo is None:
        raise ValueError(f"timestamp {value!r} has no UTC offset")
    return ts.astimezone(timezone.utc)


def format_ts(ts: datetime) -> str:
    return ts.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def floor_to_grid(ts: datetime, interval: timedelta = GRID) -> datetime:
    """Floor an aware timestamp onto the polling grid (anchored at the epoch)."""
    ts = ts.astimezone(timezone.utc)
    step = int(interval.total_seconds())
    epoch = int(ts.timestamp())
    return datetime.fromtimestamp(epoch - epoch % step, tz=timezone.utc)


def slot_of_day(ts: datetime) -> int:
    """Half-hour bin index in [0, 48) of a UTC timestamp."""
    ts = ts.astimezone(timezone.utc)
    return ts.hour * 2 + ts.minute // 30


# -- domain types -------------------------------------------------------------

@dataclass(frozen=True)
class ChannelSnapshot:
    ts: datetime
    user_id: str
    live: bool
    followers: int
    stream_id: str | None = None
    viewers: int | None = None
    game_id: str | None = None
    game_name: str | None = None
    language: str = ""
    tags: tuple[str, ...] = ()

    def __post_init__(self):
        if self.ts.tzinfo is None:
            raise ValueError("snapshot timestamp must be timezone-aware")
        if self.followers < 0:
            raise ValueError(f"followers must be >= 0, got {self.followers}")
        if self.viewers is not None and self.viewers < 0:
            raise ValueError(f"viewers must be >= 0, got {self.viewers}")
        if not self.live and (self.stream_id is not None or self.viewers is not None
                              or self.game_id is not None):
            raise ValueError("offline snapshot cannot carry stream fields")
        if not isinstance(self.tags, tuple):
            object.__setattr__(self, "tags", tuple(self.tags))
        object.__setattr__(self, "language", (self.language or "").lower())

    def to_record(self) -> dict[str, Any]:
        return {
            "ts": format_ts(self.ts),
            "user_id": self.user_id,
            "live": self.live,
            "followers": self.followers,
            "stream_id": self.stream_id,
            "viewers": self.viewers,
            "game_id": self.game_id,
            "game_name": self.game_name,
            "language": self.language,
            "tags": list(self.tags),
        }

    @classmethod
    def from_record(cls, rec: Mapping[str, Any]) -> ChannelSnapshot:
        missing = [k for k in LOG_KEYS if k not in rec]
        if missing:
            raise ValueError(f"missing keys {missing}")
        live, followers, viewers = rec["live"], rec["followers"], rec["viewers"]
        if not isinstance(live, bool):
            raise ValueError("live must be a boolean")
        if isinstance(followers, bool) or not isinstance(followers, int):
            raise ValueError("followers must be an integer")
        if viewers is not None and (isinstance(viewers, bool) or not isinstance(viewers, int)):
            raise ValueError("viewers must be an integer or null")
        tags = rec["tags"] if rec["tags"] is not None else []
        if not isinstance(tags, list) or not all(isinstance(t, str) for t in tags):
            raise ValueError("tags must be a list of strings")
        return cls(
            ts=parse_ts(rec["ts"]),
            user_id=str(rec["user_id"]),
            live=live,
            followers=followers,
            stream_id=rec["stream_id"],
            viewers=viewers,
            game_id=rec["game_id"],
            game_name=rec["game_name"],
            language=rec["language"] or "",
            tags=tuple(tags),
        )


@dataclass(frozen=True)
class GamePopularityRecord:
    date: date
    game_id: str
    rank: int
    viewers: int

    def __post_init__(self):
        if self.rank < 1:
            raise ValueError("rank must be positive")
        if self.viewers < 0:
            raise ValueError("viewers must be >= 0")


@dataclass(frozen=True)
class ChannelProfile:
    user_id: str
    initial_followers: int
    video_count: int = 0
    clip_count: int = 0


@dataclass
class CollectorConfig:
    cohort_size: int = 4000
    poll_interval: timedelta = GRID
    weeks: int = 4
    max_in_flight: int = 8
    rate_limit: int = 800  # requests per minute

    def __post_init__(self):
        if self.cohort_size < 1 or self.weeks < 1 or self.max_in_flight < 1:
            raise ValueError("cohort_size, weeks and max_in_flight must be positive")
        if self.rate_limit < 1:
            raise ValueError("rate_limit must be positive")
        secs = self.poll_interval.total_seconds()
        if secs <= 0 or (24 * 3600) % secs:
            raise ValueError("poll_interval must divide 24h evenly")

    @property
    def slots_per_week(self) -> int:
        return int(timedelta(days=7) / self.poll_interval)

    def cohorts(self, population: Sequence[str]) -> list[list[str]]:
        need = self.cohort_size * self.weeks
        if need > len(population):
            raise ValueError(f"cohort_size x weeks = {need} exceeds population of {len(population)}")
        if len(set(population)) != len(population):
            raise ValueError("population contains duplicate user ids")
        return [list(population[w * self.cohort_size:(w + 1) * self.cohort_size])
                for w in range(self.weeks)]


# -- clocks and rate limiting -------------------------------------------------

class Clock(Protocol):
    def now(self) -> float: ...
    def sleep(self, seconds: float) -> None: ...


class SystemClock:
    def now(self) -> float:
        return time.time()

    def sleep(self, seconds: float) -> None:
        if seconds > 0:
            time.sleep(seconds)


class SimulatedClock:
    """Clock whose sleep advances virtual time instantly."""

    def __init__(self, start: datetime | float = 0.0):
        self._t = start.timestamp() if isinstance(start, datetime) else float(start)
        self._lock = threading.Lock()

    def now(self) -> float:
        with self._lock:
            return self._t

    def sleep(self, seconds: float) -> None:
        if seconds > 0:
            with self._lock:
                self._t += seconds

    def advance_to(self, t: float) -> None:
        with self._lock:
            self._t = max(self._t, t)


class SlidingWindowLimiter:
    """At most ``budget`` grants in any trailing ``window`` seconds."""

    def __init__(self, budget: int, clock: Clock, window: float = 60.0):
        if budget < 1:
            raise ValueError("budget must be positive")
        self.budget = budget
        self.window = window
        self.clock = clock
        self._granted: deque[float] = deque()
        self._lock = threading.Lock()

    def acquire(self) -> float:
        while True:
            with self._lock:
                now = self.clock.now()
                while self._granted and self._granted[0] <= now - self.window:
                    self._granted.popleft()
                if len(self._granted) < self.budget:
                    self._granted.append(now)
                    return now
                wait = self._granted[0] + self.window - now
            self.clock.sleep(wait)


# -- sources ------------------------------------------------------------------

class TelemetrySource:
    """Base for anything that answers "what is channel X doing right now".

    Subclasses implement ``_fetch``. Every request passes the source's
    limiter (when one is attached) and its grant time lands in ``journal``.
    """

    def __init__(self, clock: Clock | None = None, limiter: SlidingWindowLimiter | None = None):
        self.clock = clock or SystemClock()
        self.limiter = limiter
        self.journal: list[float] = []
        self._journal_lock = threading.Lock()

    def request(self, user_id: str, at: datetime) -> Mapping[str, Any]:
        issued = self.limiter.acquire() if self.limiter else self.clock.now()
        with self._journal_lock:
            self.journal.append(issued)
        return self._fetch(user_id, at)

    def _fetch(self, user_id: str, at: datetime) -> Mapping[str, Any]:
        raise NotImplementedError


class FixtureSource(TelemetrySource):
    """Answers from recorded payloads.

    ``payloads`` maps user id to either a single payload (answered at every
    slot) or a mapping from grid timestamp to payload. Users absent from the
    fixture, and every request during a slot in ``fail_at``, raise
    :class:`SourceUnavailable`.
    """

    def __init__(self, payloads: Mapping[str, Any], *, clock: Clock | None = None,
                 limiter: SlidingWindowLimiter | None = None,
                 fail_at: Iterable[datetime] = ()):
        super().__init__(clock or SimulatedClock(), limiter)
        self.payloads = payloads
        self.fail_at = set(fail_at)

    @classmethod
    def from_store(cls, store: SnapshotStore, **kwargs) -> FixtureSource:
        payloads = {uid: {s.ts: s.to_record() for s in snaps} for uid, snaps in store.items()}
        return cls(payloads, **kwargs)

    def _fetch(self, user_id, at):
        if at in self.fail_at:
            raise SourceUnavailable(f"fixture outage at {format_ts(at)}")
        entry = self.payloads.get(user_id)
        if entry is None:
            raise SourceUnavailable(f"no fixture record for {user_id}")
        if isinstance(entry, Mapping) and entry and all(isinstance(k, datetime) for k in entry):
            if at not in entry:
                raise SourceUnavailable(f"no fixture record for {user_id} at {format_ts(at)}")
            return entry[at]
        return entry


class HttpSource(TelemetrySource):
    """Thin adapter for a JSON channel-status endpoint.

    ``GET {base_url}/channels/{user_id}`` must return an object with the
    snapshot payload keys (live, followers, stream_id, viewers, game_id,
    game_name, language, tags). The bearer token is read from
    ``CHANNELSCOPE_API_TOKEN`` and never logged.
    """

    def __init__(self, base_url: str, *, token: str | None = None,
                 client: httpx.Client | None = None, timeout: float = 10.0, **kwargs):
        super().__init__(**kwargs)
        token = token if token is not None else os.environ.get(TOKEN_ENV)
        headers = {"Authorization": f"Bearer {token}"} if token else {}
        self._client = client or httpx.Client(timeout=timeout)
        self._client.headers.update(headers)
        self.base_url = base_url.rstrip("/")

    def __repr__(self):
        return f"HttpSource({self.base_url!r})"

    def _fetch(self, user_id, at):
        url = f"{self.base_url}/channels/{user_id}"
        try:
            resp = self._client.get(url)
        except httpx.HTTPError as exc:
            raise SourceUnavailable(f"{user_id}: {type(exc).__name__}") from None
        if resp.status_code == 429 or resp.status_code >= 500:
            raise SourceUnavailable(f"{user_id}: HTTP {resp.status_code}")
        if resp.status_code != 200:
            raise SourceUnavailable(f"{user_id}: HTTP {resp.status_code} (not answered)")
        try:
            return resp.json()
        except ValueError:
            raise MalformedPayload(f"{user_id}: response is not JSON") from None

    def close(self):
        self._client.close()


def parse_payload(user_id: str, payload: Mapping[str, Any], at: datetime) -> ChannelSnapshot:
    if not isinstance(payload, Mapping):
        raise MalformedPayload(f"{user_id}: payload is not an object")
    rec = {k: payload.get(k) for k in LOG_KEYS}
    rec["ts"] = format_ts(floor_to_grid(at))
    rec["user_id"] = user_id
    if rec["language"] is None:
        rec["language"] = ""
    if rec["tags"] is None:
        rec["tags"] = []
    try:
        return ChannelSnapshot.from_record(rec)
    except (ValueError, TypeError) as exc:
        raise MalformedPayload(f"{user_id}: {exc}") from None


# -- polling ------------------------------------------------------------------

@dataclass
class PollResult:
    snapshots: list[ChannelSnapshot]
    failures: dict[str, str] = field(default_factory=dict)
    malformed: dict[str, str] = field(default_factory=dict)


RETRY_BACKOFF = (1.0, 2.0, 4.0)


def _poll_user(source: TelemetrySource, user_id: str, at: datetime,
               backoff: Sequence[float]) -> ChannelSnapshot:
    for attempt in range(len(backoff) + 1):
        try:
            payload = source.request(user_id, at)
        except SourceUnavailable:
            if attempt == len(backoff):
                raise
            source.clock.sleep(backoff[attempt])
            continue
        return parse_payload(user_id, payload, at)
    raise AssertionError("unreachable")


def poll_once(source: TelemetrySource, user_ids: Sequence[str], *,
              at: datetime | None = None, max_in_flight: int = 1,
              backoff: Sequence[float] = RETRY_BACKOFF) -> PollResult:
    """Poll every user once for the current grid slot.

    Results come back in ``user_ids`` order regardless of completion order.
    Users the source never answered are listed in ``failures``; payloads that
    fail validation are listed in ``malformed``. Neither is fabricated.
    """
    if not user_ids:
        raise ValueError("user_ids must be non-empty")
    slot = floor_to_grid(at) if at is not None else floor_to_grid(
        datetime.fromtimestamp(source.clock.now(), tz=timezone.utc))

    def work(uid):
        try:
            return uid, _poll_user(source, uid, slot, backoff), None
        except (SourceUnavailable, MalformedPayload) as exc:
            return uid, None, exc

    if max_in_flight > 1:
        with ThreadPoolExecutor(max_workers=max_in_flight) as pool:
            outcomes = list(pool.map(work, user_ids))
    else:
        outcomes = [work(uid) for uid in user_ids]

    result = PollResult(snapshots=[])
    for uid, snap, exc in outcomes:
        if snap is not None:
            result.snapshots.append(snap)
        elif isinstance(exc, MalformedPayload):
            result.malformed[uid] = str(exc)
        else:
            result.failures[uid] = str(exc)
    return result


@dataclass
class CollectionSummary:
    started: float
    finished: float = 0.0
    snapshots_written: int = 0
    slots_polled: int = 0
    failures: int = 0
    malformed: int = 0
    gaps: list[tuple[str, str]] = field(default_factory=list)
    aborted: bool = False
    error: str | None = None

    @property
    def wall_clock_span(self) -> float:
        return self.finished - self.started

    def to_dict(self) -> dict[str, Any]:
        return {
            "snapshots_written": self.snapshots_written,
            "slots_polled": self.slots_polled,
            "failures": self.failures,
            "malformed": self.malformed,
            "gap_count": len(self.gaps),
            "gaps": [{"user_id": u, "ts": t} for u, t in self.gaps],
            "wall_clock_span_s": self.wall_clock_span,
            "aborted": self.aborted,
            "error": self.error,
        }


def run_collection(config: CollectorConfig, source: TelemetrySource, sink,
                   population: Sequence[str], *, start: datetime | None = None) -> CollectionSummary:
    """Poll ``config.weeks`` disjoint cohorts, one week each, every poll interval.

    ``sink`` needs a ``write(snapshot)`` method. A failing sink aborts the
    run; the summary reports what was written before it failed.
    """
    cohorts = config.cohorts(population)
    clock = source.clock
    if source.limiter is None:
        source.limiter = SlidingWindowLimiter(config.rate_limit, clock)
    t0 = floor_to_grid(start or datetime.fromtimestamp(clock.now(), tz=timezone.utc),
                       config.poll_interval)
    summary = CollectionSummary(started=clock.now())
    n_slots = config.slots_per_week
    for week, cohort in enumerate(cohorts):
        log.info("week %d: polling %d users", week + 1, len(cohort))
        for k in range(n_slots):
            slot = t0 + (week * n_slots + k) * config.poll_interval
            clock.sleep(slot.timestamp() - clock.now())
            if summary.slots_polled == 0:
                summary.started = clock.now()
            res = poll_once(source, cohort, at=slot, max_in_flight=config.max_in_flight)
            summary.slots_polled += 1
            summary.failures += len(res.failures)
            summary.malformed += len(res.malformed)
            ts = format_ts(slot)
            summary.gaps.extend((uid, ts) for uid in cohort
                                if uid in res.failures or uid in res.malformed)
            try:
                for snap in res.snapshots:
                    sink.write(snap)
                    summary.snapshots_written += 1
            except Exception as exc:  # noqa: BLE001 - any sink failure aborts the run
                summary.aborted = True
                summary.error = f"sink write failed: {exc}"
                summary.finished = clock.now()
                log.error("aborting collection: %s", summary.error)
                return summary
    summary.finished = clock.now()
    return summary


# -- storage ------------------------------------------------------------------

class SnapshotStore:
    """Snapshots indexed by user, each user's list sorted by timestamp.

    Treated as immutable once built; filtering returns a new store.
    """

    def __init__(self, by_user: Mapping[str, Sequence[ChannelSnapshot]] | None = None,
                 skipped: Sequence[int] = ()):
        self._by_user = {u: list(v) for u, v in sorted((by_user or {}).items())}
        self.skipped_lines = list(skipped)

    @classmethod
    def from_snapshots(cls, snapshots: Iterable[ChannelSnapshot], skipped: Sequence[int] = ()):
        latest: dict[tuple[str, datetime], ChannelSnapshot] = {}
        for s in snapshots:
            latest[(s.user_id, s.ts)] = s
        by_user: dict[str, list[ChannelSnapshot]] = {}
        for (uid, _), s in sorted(latest.items(), key=lambda kv: (kv[0][0], kv[0][1])):
            by_user.setdefault(uid, []).append(s)
        return cls(by_user, skipped)

    def __len__(self):
        return len(self._by_user)

    def __contains__(self, user_id):
        return user_id in self._by_user

    def __getitem__(self, user_id) -> list[ChannelSnapshot]:
        return self._by_user[user_id]

    def __eq__(self, other):
        if not isinstance(other, SnapshotStore):
            return NotImplemented
        return self._by_user == other._by_user

    def __repr__(self):
        return f"SnapshotStore(users={len(self)}, snapshots={self.n_snapshots})"

    @property
    def users(self) -> list[str]:
        return list(self._by_user)

    @property
    def n_snapshots(self) -> int:
        return sum(len(v) for v in self._by_user.values())

    def items(self):
        return self._by_user.items()

    def __iter__(self) -> Iterator[ChannelSnapshot]:
        for snaps in self._by_user.values():
            yield from snaps

    def without(self, user_ids: Iterable[str]) -> SnapshotStore:
        drop = set(user_ids)
        return SnapshotStore({u: v for u, v in self._by_user.items() if u not in drop})

    def only(self, user_ids: Iterable[str]) -> SnapshotStore:
        keep = set(user_ids)
        return SnapshotStore({u: v for u, v in self._by_user.items() if u in keep})

    def profiles(self, media_counts: Mapping[str, tuple[int, int]] | None = None) -> dict[str, ChannelProfile]:
        """Profiles keyed by user; ``media_counts`` maps user -> (videos, clips)."""
        media_counts = media_counts or {}
        out = {}
        for uid, snaps in self._by_user.items():
            videos, clips = media_counts.get(uid, (0, 0))
            out[uid] = ChannelProfile(uid, snaps[0].followers, videos, clips)
        return out


def _open_text(path: Path, mode: str):
    if path.suffix == ".gz":
        return io.TextIOWrapper(gzip.open(path, mode + "b"), encoding="utf-8", newline="\n")
    return open(path, mode, encoding="utf-8", newline="\n")


def dump_line(snapshot: ChannelSnapshot) -> str:
    return json.dumps(snapshot.to_record(), ensure_ascii=False, separators=(",", ":"))


class SnapshotLogWriter:
    """Single-writer append log (one JSON object per line)."""

    def __init__(self, path: str | Path, append: bool = False):
        self.path = Path(path)
        self._fh = _open_text(self.path, "a" if append else "w")
        self._lock = threading.Lock()

    def write(self, snapshot: ChannelSnapshot) -> None:
        with self._lock:
            self._fh.write(dump_line(snapshot) + "\n")

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def write_log(snapshots: Iterable[ChannelSnapshot], path: str | Path) -> int:
    n = 0
    with SnapshotLogWriter(path) as w:
        for s in snapshots:
            w.write(s)
            n += 1
    return n


def replay_load(path: str | Path) -> SnapshotStore:
    """Load a snapshot log; bad lines are skipped and their numbers kept on the store."""
    path = Path(path)
    snaps, skipped = [], []
    with _open_text(path, "r") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                snaps.append(ChannelSnapshot.from_record(json.loads(line)))
            except (ValueError, TypeError, KeyError) as exc:
                skipped.append(lineno)
                log.warning("%s:%d skipped: %s", path, lineno, exc)
    if not snaps:
        raise EmptyStoreError(f"{path}: no valid snapshot lines ({len(skipped)} skipped)")
    store = SnapshotStore.from_snapshots(snaps, skipped)
    if skipped:
        log.info("%s: loaded %d snapshots, skipped %d lines", path, len(snaps), len(skipped))
    return store


# -- game popularity ----------------------------------------------------------

def validate_game_ranks(records: Iterable[GamePopularityRecord]) -> None:
    by_day: dict[date, list[int]] = {}
    for r in records:
        by_day.setdefault(r.date, []).append(r.rank)
    for day, ranks in by_day.items():
        if sorted(ranks) != list(range(1, len(ranks) + 1)):
            raise ValueError(f"{day}: ranks are not unique and contiguous from 1")


def load_game_popularity(path: str | Path) -> list[GamePopularityRecord]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != GAMES_HEADER:
            raise ValueError(f"{path}: expected header {','.join(GAMES_HEADER)}")
        records = [GamePopularityRecord(date.fromisoformat(row["date"]), row["game_id"],
                                        int(row["rank"]), int(row["viewers"]))
                   for row in reader]
    validate_game_ranks(records)
    return records


def write_game_popularity(records: Iterable[GamePopularityRecord], path: str | Path) -> int:
    rows = sorted(records, key=lambda r: (r.date, r.rank))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(GAMES_HEADER)
        for r in rows:
            w.writerow([r.date.isoformat(), r.game_id, r.rank, r.viewers])
    return len(rows)
