from __future__ import annotations

from datetime import datetime, timedelta, timezone

import pytest

from channelscope.ingest import GRID, ChannelSnapshot

T0 = datetime(2021, 7, 5, tzinfo=timezone.utc)


def snap(k: int, followers: int, *, uid: str = "u1", live: bool = False, stream: str | None = "s1",
         viewers: int = 10, game: str = "g1", game_name: str = "Game", language: str = "en",
         start: datetime = T0) -> ChannelSnapshot:
    """Snapshot at grid slot ``k`` after ``start``."""
    ts = start + k * GRID
    if not live:
        return ChannelSnapshot(ts, uid, False, followers, language=language)
    return ChannelSnapshot(ts, uid, True, followers, stream, viewers, game, game_name, language, ())


def series(followers, live_slots=(), uid="u1", **kw) -> list[ChannelSnapshot]:
    live_slots = set(live_slots)
    return [snap(k, f, uid=uid, live=k in live_slots, **kw) for k, f in enumerate(followers)]


@pytest.fixture
def t0():
    return T0


def hours(n):
    return timedelta(hours=n)
