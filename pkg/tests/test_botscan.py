from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from channelscope.botscan import BotScanConfig, detect_bot_behavior, filter_dataset, forward_filled_followers
from channelscope.ingest import SnapshotStore
from channelscope.synth import SynthConfig, generate

from conftest import series, snap


def oracle(f, ratio=100.0, min_jump=0):
    """Direct loop over the predicate."""
    d = [f[i + 1] - f[i] for i in range(len(f) - 1)]
    return [j for j in range(1, len(d) - 1)
            if abs(d[j]) > ratio * abs(d[j - 1]) and abs(d[j]) > ratio * abs(d[j + 1]) and abs(d[j]) >= min_jump]


def test_step_flagged():
    assert detect_bot_behavior([100, 101, 102, 10000, 10001, 10002]) == [2]


def test_constant_unflagged():
    assert detect_bot_behavior([100] * 10) == []


def test_spike_and_revert_unflagged():
    assert detect_bot_behavior([100, 101, 102, 10000, 103, 104]) == []


def test_short_series_empty():
    assert detect_bot_behavior([1, 500000, 1]) == []


def test_min_jump_suppresses_plateau_blip():
    f = [10, 10, 10, 11, 11, 11]
    assert detect_bot_behavior(f) == [2]
    assert detect_bot_behavior(f, BotScanConfig(min_jump=5)) == []


def test_config_validation():
    with pytest.raises(ValueError):
        BotScanConfig(ratio=1.0)
    with pytest.raises(ValueError):
        BotScanConfig(min_jump=-1)


def test_forward_fill_bridges_missing_slots():
    snaps = [snap(0, 5), snap(1, 6), snap(4, 9)]
    assert forward_filled_followers(snaps).tolist() == [5, 6, 6, 6, 9]


def test_filter_three_users_one_step():
    log, inj = generate(SynthConfig(n_channels=3, bot_rate=1 / 3, seed=4))
    clean, report = filter_dataset(inj.store)
    assert len(clean) == 2 and report.suspicious_users == sorted(inj.tainted)
    assert report.to_dict()["removed"][0]["flags"] == [inj.steps[report.suspicious_users[0]]]


def test_filter_no_anomalies():
    store = SnapshotStore.from_snapshots(series([10, 11, 12, 13, 14]) + series([5, 5, 6, 7, 8], uid="u2"))
    clean, report = filter_dataset(store)
    assert clean == store and report.removed == []
    assert report.to_dict() == {"removed": [], "tiers": {"gt10k": 0, "gt100k": 0}}


def test_tier_counts():
    base = [0, 1, 2, 100000, 100001, 100002]
    snaps = []
    for uid, start in [("small", 50), ("big", 20_000), ("mega", 150_000), ("edge", 10_000)]:
        snaps += series([start + x for x in base], uid=uid)
    _, report = filter_dataset(SnapshotStore.from_snapshots(snaps))
    assert len(report.removed) == 4
    assert (report.gt10k, report.gt100k) == (2, 1)


series_st = st.lists(st.integers(-10**6, 10**6), min_size=0, max_size=40)


@settings(max_examples=200, deadline=None)
@given(series_st, st.sampled_from([2.0, 10.0, 100.0]), st.integers(0, 50))
def test_matches_loop_oracle(f, ratio, min_jump):
    assert detect_bot_behavior(f, BotScanConfig(ratio, min_jump)) == oracle(f, ratio, min_jump)


@settings(max_examples=150, deadline=None)
@given(series_st, st.integers(-10**6, 10**6))
def test_shift_invariance(f, c):
    assert detect_bot_behavior([x + c for x in f]) == detect_bot_behavior(f)


@settings(max_examples=150, deadline=None)
@given(series_st, st.integers(1, 1000))
def test_scale_covariance(f, c):
    assert detect_bot_behavior([x * c for x in f]) == detect_bot_behavior(f)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(-20, 20).filter(lambda v: v != 0), min_size=6, max_size=60),
       st.data())
def test_injected_step_recalled_smooth_clean(deltas, data):
    """Bounded non-zero deltas never trip; a big enough interior step always does."""
    f = np.concatenate([[1000], 1000 + np.cumsum(deltas)])
    assert detect_bot_behavior(f) == []
    j = data.draw(st.integers(1, len(deltas) - 2))
    step = 101 * max(abs(d) for d in deltas) + 1
    g = f.copy()
    g[j + 1:] += step
    assert j in detect_bot_behavior(g)
