from __future__ import annotations

import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from channelscope.cohort import (
    Category, GrowthClass, StrategyCriteria, bucket_averages, bucketize, categorize, compare_strategy,
    content_split, isolate_outliers, label_growth, peak_hours, top_count, write_bucket_table,
    write_category_table, write_class_table,
)
from channelscope.sessions import ChannelWeekStats, analyze_channel

from conftest import T0, snap


def ws(uid, followers, gain, **kw):
    return ChannelWeekStats(user_id=uid, initial_followers=followers, followers_gained_total=gain, **kw)


# -- independent reimplementations ------------------------------------------------

def oracle_category(f):
    for name, hi in (("small", 5000), ("medium", 10000), ("big", 100000)):
        if f < hi:
            return name
    return "mega"


def oracle_labels(pairs):
    sums, counts = {}, {}
    for f, g in pairs:
        b = f // 1000
        sums[b] = sums.get(b, 0) + g
        counts[b] = counts.get(b, 0) + 1
    out = []
    for f, g in pairs:
        avg = sums[f // 1000] / counts[f // 1000]
        out.append(-1 if g < 0 else 1 if g > avg else 0)
    return out


@pytest.mark.parametrize("f,cat", [(0, Category.SMALL), (4999, Category.SMALL), (5000, Category.MEDIUM),
                                   (10000, Category.BIG), (99999, Category.BIG), (100000, Category.MEGA),
                                   (150000, Category.MEGA)])
def test_categorize(f, cat):
    assert categorize(f) == cat


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 10**7))
def test_categorize_matches_oracle(f):
    assert categorize(f).value == oracle_category(f)


def test_bucketize_bounds():
    assert bucketize(0).index == 0 and bucketize(19999).index == 19
    assert (bucketize(1000).lo, bucketize(1000).hi) == (1000, 2000)
    with pytest.raises(ValueError):
        bucketize(20000)
    with pytest.raises(ValueError):
        categorize(-1)


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 19999), st.integers(0, 19999))
def test_category_bucket_consistency(a, b):
    lo, hi = sorted((a, b))
    order = list(Category)
    assert order.index(categorize(lo)) <= order.index(categorize(hi))
    assert bucketize(lo).index <= bucketize(hi).index
    idx = bucketize(a).index
    assert categorize(a) == (Category.SMALL if idx <= 4 else Category.MEDIUM if idx <= 9 else Category.BIG)


def test_label_examples():
    labels = label_growth([ws("a", 500, 40)], {0: 33.39})
    assert labels["a"].cls == GrowthClass.GOOD and labels["a"].bucket_avg == 33.39
    assert label_growth([ws("b", 500, -5)], {0: -100.0})["b"].cls == GrowthClass.BAD
    assert label_growth([ws("c", 500, 10)], {0: 10.0})["c"].cls == GrowthClass.AVERAGE


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 19999), st.integers(-50, 500)), min_size=1, max_size=300))
def test_labels_match_oracle_and_partition(pairs):
    chans = [ws(f"c{i}", f, g) for i, (f, g) in enumerate(pairs)]
    labels = label_growth(chans)
    assert [int(labels[c.user_id].cls) for c in chans] == oracle_labels(pairs)
    assert len(labels) == len(chans)


def test_top_count_ceiling():
    assert top_count(40) == 2 and top_count(1) == 1 and top_count(60) == 3 and top_count(0) == 0
    assert top_count(5738) == 287


def test_outliers_bucket_of_forty_and_of_one():
    chans = [ws(f"c{i:02d}", 100 + i, i) for i in range(40)] + [ws("solo", 5500, -3)]
    assert isolate_outliers(chans) == {"c39", "c38", "solo"}


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 19999), st.integers(-100, 100)), min_size=1, max_size=400),
       st.sampled_from([0.05, 0.1, 0.5]))
def test_outlier_size_and_dominance(pairs, frac):
    chans = [ws(f"c{i}", f, g) for i, (f, g) in enumerate(pairs)]
    out = isolate_outliers(chans, frac)
    buckets = {}
    for c in chans:
        buckets.setdefault(c.initial_followers // 1000, []).append(c)
    for members in buckets.values():
        chosen = [c for c in members if c.user_id in out]
        rest = [c for c in members if c.user_id not in out]
        assert len(chosen) == math.ceil(round(frac * len(members), 9))
        if chosen and rest:
            assert min(c.followers_gained_total for c in chosen) >= max(c.followers_gained_total for c in rest)


def test_tables(tmp_path):
    chans = [ws("a", 10, 5), ws("b", 10, -1), ws("c", 7000, 3), ws("d", 200000, 9)]
    assert write_category_table(chans, tmp_path / "t1.csv") == 4
    ranged = [c for c in chans if c.initial_followers < 20000]
    avgs = bucket_averages(ranged)
    assert avgs == {0: 2.0, 7: 3.0}
    write_bucket_table(avgs, tmp_path / "t4.csv")
    write_class_table(label_growth(ranged, avgs), tmp_path / "t5.csv")
    t1 = (tmp_path / "t1.csv").read_text().splitlines()
    assert t1[0] == "category,initial_followers,users" and t1[1].startswith("small,") and t1[1].endswith(",2")
    t5 = (tmp_path / "t5.csv").read_text().splitlines()
    assert t5[0] == "class,code,users" and t5[-1] == "total,,3"


# -- peak hours ------------------------------------------------------------------

def day_channel(uid, language, gain_by_bin):
    """Channel live for one full UTC day; the delta ending in bin b is gain_by_bin(b)."""
    snaps, f = [snap(0, 1000, uid=uid, language=language)], 1000
    for b in range(48):
        f += gain_by_bin(b)
        snaps.append(snap(48 + b, f, uid=uid, live=True, language=language, start=T0))
    snaps.append(snap(96, f, uid=uid, language=language))
    return analyze_channel(snaps)


EN_PEAKS = {11: 9, 12: 9, 33: 8, 41: 8, 10: 3, 13: 3, 32: 3, 40: 3}


def test_peak_hours_concentrated_afternoon():
    recs = [day_channel(f"es{i}", "es", lambda b: 10 if b in (26, 27) else 1) for i in range(3)]
    prof = peak_hours(recs, "es")
    assert prof.peaks == [26, 27] and prof.regions() == [[26, 27]]


def test_peak_hours_multi_vs_single_peak():
    recs = [day_channel("en1", "en", lambda b: EN_PEAKS.get(b, 1)),
            day_channel("es1", "es", lambda b: 10 if b in (26, 27) else 1)]
    en, es = peak_hours(recs, "en"), peak_hours(recs, "es")
    assert len(en.regions()) >= 3 and len(es.regions()) == 1
    assert en.peaks == [11, 12, 33, 41]


def test_peak_hours_uniform_and_missing_language():
    recs = [day_channel("u", "en", lambda b: 2)]
    assert peak_hours(recs, "en").peaks == []
    prof = peak_hours(recs, "fr")
    assert prof.empty and prof.peaks == []


def test_peak_hours_input_order_invariant():
    recs = [day_channel(f"c{i}", "en", lambda b, i=i: (b * (i + 3)) % 17) for i in range(6)]
    base = peak_hours(recs, "en")
    shuffled = list(recs)
    random.Random(5).shuffle(shuffled)
    other = peak_hours(shuffled, "en")
    assert other.mean_gain.tolist() == pytest.approx(base.mean_gain.tolist()) and other.peaks == base.peaks


def test_peak_regions_wrap_midnight():
    recs = [day_channel("u", "en", lambda b: 20 if b in (47, 0) else 1)]
    assert peak_hours(recs, "en").regions() == [[47, 0]]


# -- content split and strategy --------------------------------------------------------

def test_content_split_70_30():
    snaps = []
    for i in range(10):
        name = "Just Chatting" if i < 3 else "Some Game"
        snaps += [snap(3 * i, 5, live=True, stream=f"s{i}", game_name=name), snap(3 * i + 1, 5)]
    split = content_split(analyze_channel(snaps).sessions)
    assert split == {"gaming_pct": pytest.approx(70.0), "non_gaming_pct": pytest.approx(30.0)}
    assert content_split([]) == {"gaming_pct": 0.0, "non_gaming_pct": 0.0}


def strat(uid, gain, streams, max_h, ng=True, gm=True):
    return ChannelWeekStats(uid, 100, streams_per_week=streams, hours_per_week=streams * max_h,
                            followers_gained_total=gain, has_gaming=gm, has_non_gaming=ng,
                            max_stream_hours=max_h, avg_viewers=10.0)


def test_strategy_criteria():
    c = StrategyCriteria()
    assert c.matches(strat("a", 0, 5, 5.0))
    assert not c.matches(strat("b", 0, 4, 2.0))
    assert not c.matches(strat("c", 0, 6, 5.5))
    assert not c.matches(strat("d", 0, 6, 2.0, ng=False))
    assert StrategyCriteria(require_mixed_content=False).matches(strat("e", 0, 6, 2.0, ng=False))
    # the stricter variant: at most 2h per stream and more than 40h per week
    strict = StrategyCriteria(min_streams_per_week=0, max_stream_hours=2.0, min_hours_per_week=40.0)
    assert not strict.matches(strat("f", 0, 20, 2.0)) and strict.matches(strat("g", 0, 21, 2.0))


def test_compare_strategy():
    chans = [strat("m1", 300, 5, 3.0), strat("m2", 300, 6, 4.0)] + [strat(f"o{i}", 100, 2, 8.0) for i in range(8)]
    cmp = compare_strategy(chans)
    assert cmp.matching_users == ["m1", "m2"] and cmp.n_all == 10
    assert cmp.mean_gained_all == 140.0 and cmp.mean_ratio == pytest.approx(300 / 140)
    none = compare_strategy([strat("x", 1, 1, 1.0)])
    assert none.mean_ratio is None and none.n_matching == 0
