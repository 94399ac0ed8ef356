"""Synthetic streamer populations with known ground truth.

The generator is deliberately simple and fully seeded:

* initial followers are power-law distributed (inverse transform);
* each channel streams a planned schedule of sessions inside its cohort week,
  always separated by at least one offline slot and never starting at slot 0;
* every 30-minute delta is non-zero and bounded relative to its neighbours,
  so clean channels never trip the step detector. Active-slot gains scale
  with ``sqrt(followers)``, a language-specific hour-of-day multiplier and a
  fatigue factor that decays over long sessions;
* bot anomalies are single follower steps injected afterwards.

None of these modelling choices is a claim about real platforms; they exist
so each analysis has a known answer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from datetime import date, datetime, timedelta, timezone

import numpy as np

from .cohort import StrategyCriteria
from .ingest import (GRID, SLOTS_PER_DAY, SLOTS_PER_WEEK, ChannelProfile, ChannelSnapshot,
                     GamePopularityRecord, SnapshotStore)
from .sessions import ChannelWeekStats, POPULAR_TOP_K

DEFAULT_START = datetime(2021, 7, 5, tzinfo=timezone.utc)  # a Monday

NON_GAMING_CATALOG = (("ng-509658", "Just Chatting"), ("ng-26936", "Music"), ("ng-509660", "Art"))
N_GAMES = 40


def _flat(value=1.0):
    return np.full(SLOTS_PER_DAY, value)


def _profile(peaks: dict[int, float]):
    m = _flat()
    for b, v in peaks.items():
        m[b] = v
    return m


# Half-hour bins: 13:00-14:00 for "es"; 05:00-07:00, 16:00-17:00, 20:00-21:00 for "en".
HOUR_MULTIPLIERS = {
    "es": _profile({26: 3.0, 27: 3.0}),
    "en": _profile({10: 2.0, 11: 3.0, 12: 3.0, 13: 2.0, 32: 2.0, 33: 3.0, 40: 2.0, 41: 3.0}),
}


def hour_multiplier(language: str) -> np.ndarray:
    return HOUR_MULTIPLIERS.get(language, _flat())


@dataclass
class SynthConfig:
    n_channels: int = 1000
    follower_alpha: float = 1.25
    follower_xmin: float = 50.0
    follower_cap: int = 10**9
    weeks: int = 1
    start: datetime = DEFAULT_START
    language_mix: dict[str, float] = field(default_factory=lambda: {"en": 0.55, "es": 0.25, "de": 0.1, "pt": 0.1})
    bot_rate: float = 0.0
    bot_magnitude_ratio: float = 200.0
    seed: int = 0
    max_streams_per_week: int = 10
    non_gaming_share: float = 0.3
    decline_rate: float = 0.05
    gain_coef: float = 0.05
    gain_cap: float = 60.0
    inactive_frac: float = 0.2
    strategy_fraction: float = 0.0
    strategy_boost: float = 1.0

    def __post_init__(self):
        if self.n_channels < 1:
            raise ValueError("n_channels must be >= 1")
        if not self.follower_alpha > 1 or not self.follower_xmin > 0:
            raise ValueError("follower_alpha must be > 1 and follower_xmin > 0")
        if self.weeks < 1:
            raise ValueError("weeks must be >= 1")
        if not self.language_mix or any(v < 0 for v in self.language_mix.values()):
            raise ValueError("language_mix must hold non-negative fractions")
        if abs(sum(self.language_mix.values()) - 1.0) > 1e-9:
            raise ValueError("language_mix fractions must sum to 1")
        for name in ("bot_rate", "non_gaming_share", "decline_rate", "strategy_fraction"):
            if not 0 <= getattr(self, name) <= 1:
                raise ValueError(f"{name} must be in [0, 1]")
        if not self.bot_magnitude_ratio > 1:
            raise ValueError("bot_magnitude_ratio must be > 1")
        if not 0 <= self.max_streams_per_week <= 20:
            raise ValueError("max_streams_per_week must be in [0, 20]")


@dataclass(frozen=True)
class PlannedSession:
    start_slot: int
    n_slots: int
    stream_id: str
    game_id: str
    game_name: str
    non_gaming: bool

    @property
    def end_slot(self) -> int:
        return self.start_slot + self.n_slots


@dataclass
class ChannelBehavior:
    user_id: str
    initial_followers: int
    language: str
    week: int
    declining: bool
    gain_rate: float
    viewer_base: float
    sessions: list[PlannedSession]
    follows_strategy: bool = False

    @property
    def profile(self) -> ChannelProfile:
        return ChannelProfile(self.user_id, self.initial_followers)


@dataclass
class Population:
    config: SynthConfig
    channels: list[ChannelBehavior]
    games: list[GamePopularityRecord]

    @property
    def profiles(self) -> list[ChannelProfile]:
        return [c.profile for c in self.channels]

    def week_start(self, week: int) -> datetime:
        return self.config.start + week * SLOTS_PER_WEEK * GRID


@dataclass
class SynthLog:
    store: SnapshotStore
    truth: dict[str, ChannelWeekStats]
    session_truth: dict[str, list[tuple[datetime, datetime, float]]]
    games: list[GamePopularityRecord]


def power_law_samples(n: int, alpha: float, xmin: float, rng: np.random.Generator) -> np.ndarray:
    """Inverse-transform draws: ``x = xmin * (1 - u) ** (-1 / (alpha - 1))``."""
    u = rng.random(n)
    return xmin * (1.0 - u) ** (-1.0 / (alpha - 1.0))


def _rng(config: SynthConfig, *stream: int) -> np.random.Generator:
    return np.random.default_rng([config.seed, *stream])


def _plan_sessions(uid: str, rng: np.random.Generator, config: SynthConfig, forced: bool,
                   gaming_ids: list[str], gaming_weights: np.ndarray) -> list[PlannedSession]:
    if forced:
        k = int(rng.integers(5, 9))
        lengths = rng.integers(2, 11, size=k)  # 1h..5h
        ng_flags = rng.random(k) < 0.5
        ng_flags[0], ng_flags[1] = True, False  # guarantee mixed content
    else:
        k = int(rng.integers(0, config.max_streams_per_week + 1))
        kind = rng.random(k)
        lengths = np.where(kind < 0.6, rng.integers(2, 10, size=k),
                           np.where(kind < 0.85, rng.integers(10, 20, size=k), rng.integers(20, 61, size=k)))
        ng_flags = rng.random(k) < config.non_gaming_share
    if k == 0:
        return []
    # sessions live in disjoint segments of slots [1, 335); one offline slot after each
    seg = (SLOTS_PER_WEEK - 2) // k
    out = []
    for i in range(k):
        n_slots = int(min(lengths[i], seg - 1))
        lo = 1 + i * seg
        start = lo + int(rng.integers(0, seg - n_slots))
        if ng_flags[i]:
            gid, gname = NON_GAMING_CATALOG[int(rng.integers(0, len(NON_GAMING_CATALOG)))]
        else:
            gid = gaming_ids[int(rng.choice(len(gaming_ids), p=gaming_weights))]
            gname = f"Game {gid[1:]}"
        out.append(PlannedSession(start, n_slots, f"{uid}-s{i}", gid, gname, bool(ng_flags[i])))
    return out


def _game_catalog():
    ids = [f"g{i:03d}" for i in range(N_GAMES)]
    w = 1.0 / np.arange(1, N_GAMES + 1)
    return ids, w / w.sum()


def _popularity_table(config: SynthConfig) -> list[GamePopularityRecord]:
    rng = _rng(config, 3)
    ids, w = _game_catalog()
    all_ids = [g for g, _ in NON_GAMING_CATALOG] + ids
    base = np.concatenate([[5e5, 8e4, 3e4], 4e5 * w])
    records = []
    n_days = 7 * config.weeks
    for d in range(n_days):
        day = (config.start + timedelta(days=d)).date()
        viewers = base * rng.lognormal(0.0, 0.6, size=base.size)
        for rank, j in enumerate(np.argsort(-viewers, kind="stable"), 1):
            records.append(GamePopularityRecord(day, all_ids[j], rank, int(viewers[j])))
    return records


def _matches_strategy(sessions: list[PlannedSession], criteria=StrategyCriteria()) -> bool:
    if len(sessions) < criteria.min_streams_per_week or not sessions:
        return False
    if max(s.n_slots for s in sessions) * 0.5 > criteria.max_stream_hours:
        return False
    kinds = {s.non_gaming for s in sessions}
    return not criteria.require_mixed_content or kinds == {True, False}


def generate_population(config: SynthConfig) -> Population:
    rng = _rng(config, 1)
    n = config.n_channels
    followers = np.minimum(power_law_samples(n, config.follower_alpha, config.follower_xmin, rng),
                           config.follower_cap).astype(np.int64)
    langs = list(config.language_mix)
    lang_idx = rng.choice(len(langs), size=n, p=np.array([config.language_mix[l] for l in langs]))
    declining = rng.random(n) < config.decline_rate
    forced = rng.random(n) < config.strategy_fraction
    gaming_ids, gaming_w = _game_catalog()
    width = max(1, len(str(n - 1)))
    per_week = math.ceil(n / config.weeks)
    channels = []
    for i in range(n):
        uid = f"u{i:0{width}d}"
        crng = _rng(config, 2, i)
        sessions = _plan_sessions(uid, crng, config, bool(forced[i]), gaming_ids, gaming_w)
        f0 = int(followers[i])
        channels.append(ChannelBehavior(
            user_id=uid,
            initial_followers=f0,
            language=langs[lang_idx[i]],
            week=i // per_week,
            declining=bool(declining[i]),
            gain_rate=min(config.gain_coef * math.sqrt(f0), config.gain_cap),
            viewer_base=max(1.0, 0.02 * f0 ** 0.9),
            sessions=sessions,
            follows_strategy=_matches_strategy(sessions),
        ))
    return Population(config, channels, _popularity_table(config))


def _popular_by_day(games: list[GamePopularityRecord]) -> dict[date, set[str]]:
    out: dict[date, set[str]] = {}
    for r in games:
        if r.rank <= POPULAR_TOP_K:
            out.setdefault(r.date, set()).add(r.game_id)
    return out


def _realize(ch: ChannelBehavior, pop: Population, popular: dict[date, set[str]]):
    config = pop.config
    rng = _rng(config, 4, int(ch.user_id[1:]))
    t0 = pop.week_start(ch.week)
    session_at = np.full(SLOTS_PER_WEEK, -1)
    for k, s in enumerate(ch.sessions):
        session_at[s.start_slot:s.end_slot] = k
    slots = np.arange(SLOTS_PER_WEEK)
    bins = (slots + (t0.hour * 2 + t0.minute // 30)) % SLOTS_PER_DAY
    mult = hour_multiplier(ch.language)[bins]
    boost = config.strategy_boost if ch.follows_strategy else 1.0
    active = session_at >= 0

    offset = np.zeros(SLOTS_PER_WEEK)
    for s in ch.sessions:
        offset[s.start_slot:s.end_slot] = np.arange(s.n_slots)
    active_mean = ch.gain_rate * mult * boost / (1.0 + offset / 12.0)
    if ch.declining:
        active_mean *= 0.1
    deltas = np.where(active, 1 + rng.poisson(active_mean), 1 + rng.poisson(ch.gain_rate * config.inactive_frac, SLOTS_PER_WEEK))
    if ch.declining:
        signs = np.where(rng.random(SLOTS_PER_WEEK) < 0.75, -1, 1)
        deltas = np.where(active, deltas, signs)
    deltas[0] = 0  # slot 0 has no predecessor
    followers = np.empty(SLOTS_PER_WEEK, dtype=np.int64)
    f = ch.initial_followers
    for t in range(SLOTS_PER_WEEK):
        if t and f + deltas[t] < 0:
            deltas[t] = 1
        f += int(deltas[t])
        followers[t] = f
    viewers = rng.poisson(ch.viewer_base * mult)

    snaps = []
    for t in range(SLOTS_PER_WEEK):
        ts = t0 + t * GRID
        k = session_at[t]
        if k >= 0:
            s = ch.sessions[k]
            snaps.append(ChannelSnapshot(ts, ch.user_id, True, int(followers[t]), s.stream_id,
                                         int(viewers[t]), s.game_id, s.game_name, ch.language, (s.game_name,)))
        else:
            snaps.append(ChannelSnapshot(ts, ch.user_id, False, int(followers[t]), language=ch.language))

    d = deltas[1:]
    act = active[1:]
    lengths = [s.n_slots for s in ch.sessions]
    live_viewers = viewers[active]
    sessions_truth = [(t0 + s.start_slot * GRID, t0 + s.end_slot * GRID, s.n_slots * 0.5) for s in ch.sessions]

    def touched_days(s):
        first = (t0 + s.start_slot * GRID).date()
        last = (t0 + s.end_slot * GRID - timedelta(microseconds=1)).date()
        return [first + timedelta(days=i) for i in range((last - first).days + 1)]

    truth = ChannelWeekStats(
        user_id=ch.user_id,
        initial_followers=ch.initial_followers,
        streams_per_week=len(ch.sessions),
        hours_per_week=sum(lengths) * 0.5,
        followers_gained_total=int(d.sum()),
        followers_gained_active=int(d[act].sum()),
        followers_gained_inactive=int(d[~act].sum()),
        n_streams_lt5h=sum(1 for n in lengths if n < 10),
        n_streams_5to10h=sum(1 for n in lengths if 10 <= n < 20),
        n_streams_gt10h=sum(1 for n in lengths if n >= 20),
        has_gaming=any(not s.non_gaming for s in ch.sessions),
        has_non_gaming=any(s.non_gaming for s in ch.sessions),
        played_popular_game=any(s.game_id in popular.get(day, ()) for s in ch.sessions for day in touched_days(s)),
        language=ch.language if ch.sessions else "",
        avg_viewers=float(live_viewers.mean()) if live_viewers.size else 0.0,
        max_stream_hours=max(lengths, default=0) * 0.5,
    )
    return snaps, truth, sessions_truth


def generate_snapshots(population: Population) -> SynthLog:
    popular = _popular_by_day(population.games)
    by_user, truth, sess = {}, {}, {}
    for ch in population.channels:
        snaps, t, st = _realize(ch, population, popular)
        by_user[ch.user_id] = snaps
        truth[ch.user_id] = t
        sess[ch.user_id] = st
    return SynthLog(SnapshotStore(by_user), truth, sess, population.games)


@dataclass
class InjectionResult:
    store: SnapshotStore
    tainted: set[str]
    steps: dict[str, int]
    skipped: list[str]


def inject_bot_anomalies(store: SnapshotStore, config: SynthConfig) -> InjectionResult:
    """Insert one follower step into ``round(bot_rate * n)`` seeded channels.

    The step lands on a random interior delta ``j`` and is larger than
    ``(bot_magnitude_ratio + 1)`` times the channel's largest smooth delta, so
    it beats both neighbours by at least ``bot_magnitude_ratio`` whatever the
    sign of the original delta.
    """
    users = store.users
    n_taint = int(round(config.bot_rate * len(users)))
    if n_taint == 0:
        return InjectionResult(store, set(), {}, [])
    rng = _rng(config, 5)
    chosen = sorted(rng.choice(len(users), size=n_taint, replace=False).tolist())
    by_user = {u: list(v) for u, v in store.items()}
    tainted, steps, skipped = set(), {}, []
    for i in chosen:
        uid = users[i]
        snaps = by_user[uid]
        if len(snaps) < 4:
            skipped.append(uid)
            continue
        f = np.array([s.followers for s in snaps], dtype=np.int64)
        biggest = max(int(np.abs(np.diff(f)).max()), 1)
        size = math.ceil((config.bot_magnitude_ratio + 1) * biggest) + 1
        j = int(rng.integers(1, len(snaps) - 2))  # delta index, both neighbours exist
        sign = -1 if rng.random() < 0.5 and f[j + 1:].min() - size >= 0 else 1
        by_user[uid] = snaps[:j + 1] + [replace(s, followers=s.followers + sign * size) for s in snaps[j + 1:]]
        tainted.add(uid)
        steps[uid] = j
    return InjectionResult(SnapshotStore(by_user), tainted, steps, skipped)


def generate(config: SynthConfig) -> tuple[SynthLog, InjectionResult]:
    """Population, snapshots and (if configured) bot anomalies in one call."""
    synth_log = generate_snapshots(generate_population(config))
    return synth_log, inject_bot_anomalies(synth_log.store, config)


FIXTURE_CONFIG = SynthConfig(n_channels=400, bot_rate=0.03, strategy_fraction=0.05,
                             strategy_boost=3.0, seed=2021)


def strategy_population(n: int = 2000, match_fraction: float = 0.05, boost: float = 3.0,
                        base_gain: float = 100.0, seed: int = 0) -> tuple[list[ChannelWeekStats], set[str]]:
    """Week stats where strategy followers gain ``boost`` times the base rate.

    Non-followers are drawn so they never satisfy the default strategy
    criteria (too few streams, a long stream, or single-kind content).
    Returns the stats and the set of planted followers.
    """
    rng = np.random.default_rng([seed, 6])
    stats, planted = [], set()
    for i in range(n):
        uid = f"c{i:05d}"
        follows = rng.random() < match_fraction
        if follows:
            k = int(rng.integers(5, 9))
            hours = rng.integers(2, 11, size=k) * 0.5
            ng = gm = True
            planted.add(uid)
        else:
            k = int(rng.integers(1, 11))
            hours = rng.integers(2, 61, size=k) * 0.5
            breaker = int(rng.integers(0, 3))
            if breaker == 0:
                k = min(k, 4)
                hours = hours[:k]
            elif breaker == 1:
                hours[0] = max(hours[0], 5.5)
            ng, gm = (True, False) if rng.random() < 0.3 else (False, True)
            if breaker != 2:
                ng, gm = bool(rng.random() < 0.5), True
        gain = int(rng.poisson(base_gain * (boost if follows else 1.0)))
        active = int(round(gain * 0.8))
        stats.append(ChannelWeekStats(
            user_id=uid, initial_followers=int(rng.integers(0, 20000)), streams_per_week=k,
            hours_per_week=float(hours.sum()), followers_gained_total=gain,
            followers_gained_active=active, followers_gained_inactive=gain - active,
            n_streams_lt5h=int((hours < 5).sum()), n_streams_5to10h=int(((hours >= 5) & (hours < 10)).sum()),
            n_streams_gt10h=int((hours >= 10).sum()), has_gaming=gm, has_non_gaming=ng,
            played_popular_game=bool(rng.random() < 0.5), language="en",
            avg_viewers=float(rng.gamma(2.0, 20.0)), max_stream_hours=float(hours.max()),
        ))
    return stats, planted
