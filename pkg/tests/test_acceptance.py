"""Acceptance checks, one test per criterion.

Each test prints a single ``[PASS]`` or ``[FAIL]`` line (visible without
``-s``) and then asserts the same condition. Run just this file with::

    pytest tests/test_acceptance.py -v
"""

from __future__ import annotations

import filecmp
import math
import time

import numpy as np
import pytest

from channelscope.botscan import BotScanConfig, detect_bot_behavior, filter_dataset
from channelscope.cli import main
from channelscope.cohort import (
    bucketize, categorize, compare_strategy, isolate_outliers, label_growth, top_count,
)
from channelscope.distfit import fit_power_law
from channelscope.learn import smote, split_train_test, train_forest
from channelscope.learn.metrics import SWEEP_HEADER, evaluate
from channelscope.sessions import ChannelWeekStats, analyze_store, popular_by_day
from channelscope.synth import SynthConfig, generate, strategy_population


@pytest.fixture
def verdict(capsys):
    def check(number: int, title: str, ok: bool, detail: str = "") -> None:
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {number}: {title}" + (f" ({detail})" if detail else ""))
        assert ok, f"criterion {number} failed: {detail}"
    return check


@pytest.fixture(scope="module")
def thousand():
    return generate(SynthConfig(n_channels=1000, bot_rate=0.1, bot_magnitude_ratio=200.0, seed=1))


def test_1_bot_detector_recall_and_precision(thousand, verdict):
    synth_log, injected = thousand
    t = time.perf_counter()
    clean, report = filter_dataset(injected.store, BotScanConfig(ratio=100.0))
    elapsed = time.perf_counter() - t
    flagged = set(report.suspicious_users)
    recall = len(flagged & injected.tainted) / len(injected.tainted)
    false_flags = len(flagged - injected.tainted)
    ok = (len(injected.tainted) == 100 and recall == 1.0 and false_flags == 0 and elapsed < 1.0
          and all(len(s) == 336 for _, s in injected.store.items()))
    verdict(1, "bot detector recall and zero false flags", ok,
            f"recall={recall:.3f} false_flags={false_flags} runtime={elapsed:.3f}s")


def test_2_hand_series(verdict):
    step = detect_bot_behavior([100, 101, 102, 10000, 10001, 10002])
    const = detect_bot_behavior([100] * 10)
    spike = detect_bot_behavior([100, 101, 102, 10000, 103, 104])
    ok = step == [2] and const == [] and spike == []
    verdict(2, "hand-evaluated series", ok, f"step={step} constant={const} spike={spike}")


def test_3_power_law_recovery(verdict):
    n, parts, ok = 100_000, [], True
    for i, alpha in enumerate((1.25, 1.11, 2.0)):
        u = np.random.default_rng(100 + i).random(n)
        x = (1.0 - u) ** (-1.0 / (alpha - 1.0))
        fit = fit_power_law(x, 1.0)
        formula = (alpha - 1.0) / math.sqrt(n)
        ok &= abs(fit.alpha - alpha) <= 0.05
        ok &= abs(fit.stderr - formula) <= 0.01 * formula
        ok &= math.isclose(fit.stderr, (fit.alpha - 1.0) / math.sqrt(fit.n_tail), rel_tol=1e-12)
        parts.append(f"{alpha}->{fit.alpha:.4f}")
    verdict(3, "power-law exponent recovery", ok, " ".join(parts))


def test_4_session_roundtrip(thousand, verdict):
    synth_log, _ = thousand
    records = analyze_store(synth_log.store, popular_by_day(synth_log.games))
    got = {r.user_id: r.stats for r in records}
    mismatched = [u for u, truth in synth_log.truth.items() if got.get(u) != truth]
    sessions_ok = all([(s.start_ts, s.end_ts, s.duration_hours) for s in r.sessions] == synth_log.session_truth[r.user_id]
                      for r in records)
    ok = len(records) == 1000 and not mismatched and sessions_ok
    verdict(4, "week stats equal generator truth", ok, f"{len(mismatched)} mismatched of {len(records)}")


def _oracle_category(f):
    return "small" if f < 5000 else "medium" if f < 10000 else "big" if f < 100000 else "mega"


def test_5_cohort_rules(verdict):
    rng = np.random.default_rng(5)
    followers = rng.integers(0, 20000, size=10_000)
    gains = rng.integers(-200, 2000, size=10_000)
    chans = [ChannelWeekStats(f"c{i:05d}", int(f), followers_gained_total=int(g))
             for i, (f, g) in enumerate(zip(followers, gains))]
    sums, counts = np.zeros(20), np.zeros(20)
    for f, g in zip(followers, gains):
        sums[f // 1000] += g
        counts[f // 1000] += 1
    labels = label_growth(chans)
    agree = 0
    for c, f, g in zip(chans, followers, gains):
        b = f // 1000
        avg = sums[b] / counts[b]
        expected = -1 if g < 0 else 1 if g > avg else 0
        agree += (categorize(int(f)).value == _oracle_category(f) and bucketize(int(f)).index == b
                  and int(labels[c.user_id].cls) == expected)
    wide = rng.integers(0, 10**7, size=10_000)
    agree_wide = sum(categorize(int(f)).value == _oracle_category(f) for f in wide)

    sub = chans[:1000]
    out = isolate_outliers(sub)
    invariant = True
    for b in range(20):
        members = [c for c in sub if c.initial_followers // 1000 == b]
        chosen = [c.followers_gained_total for c in members if c.user_id in out]
        rest = [c.followers_gained_total for c in members if c.user_id not in out]
        invariant &= len(chosen) == top_count(len(members))
        if chosen and rest:
            invariant &= min(chosen) >= max(rest)
    ok = agree == 10_000 and agree_wide == 10_000 and invariant and len(labels) == 10_000
    verdict(5, "cohort rules match brute force; outlier invariant", ok,
            f"match={agree}/10000 category_wide={agree_wide}/10000 outliers={len(out)}")


def _convex_ok(s, members, tol=1e-7):
    for a in range(len(members)):
        d = members - members[a]
        r = s - members[a]
        dd = np.einsum("ij,ij->i", d, d)
        if np.linalg.norm(r) <= tol:
            return True
        nz = dd > 0
        u = np.where(nz, d @ r / np.where(nz, dd, 1.0), -1.0)
        resid = np.linalg.norm(r[None, :] - u[:, None] * d, axis=1)
        if np.any(nz & (u >= -tol) & (u <= 1 + tol) & (resid <= tol * max(1.0, np.linalg.norm(r)))):
            return True
    return False


def test_6_smote_contract(verdict):
    rng = np.random.default_rng(6)
    sizes = {1: 1071, 0: 3370, -1: 149}
    X = np.vstack([rng.integers(0, 20, size=(n, 8)) + 3 * c for c, n in sizes.items()]).astype(float)
    y = np.concatenate([np.full(n, c) for c, n in sizes.items()])
    Xb, yb = smote(X, y, k=5, seed=0)
    counts = {c: int((yb == c).sum()) for c in sizes}
    synth_idx = np.arange(len(y), len(yb))
    pick = np.random.default_rng(0).choice(synth_idx, size=50, replace=False)
    convex = all(_convex_ok(Xb[i], X[y == yb[i]]) for i in pick)
    ok = counts == {1: 3370, 0: 3370, -1: 3370} and convex and np.array_equal(Xb[:len(y)], X)
    verdict(6, "SMOTE balancing and convex combinations", ok, f"counts={counts} convex_subsample={convex}")


def _two_feature_problem():
    rng = np.random.default_rng(7)
    X = rng.integers(0, 20, size=(2000, 8)).astype(float)
    y = np.where(X[:, 2] + X[:, 5] > 25, 1, np.where(X[:, 2] < 5, -1, 0))
    return split_train_test(X, y, 0.8, 0)


def test_7_classifier_sanity(verdict):
    Xtr, ytr, Xte, yte = _two_feature_problem()
    runs = [evaluate(train_forest(Xtr, ytr, 10, n_trees=100, seed=0, n_jobs=j), Xte, yte) for j in (1, 1, 4)]
    baseline = np.bincount(yte + 1).max() / yte.size
    acc = runs[0].accuracy
    ok = acc >= 0.90 and acc > baseline and runs[0] == runs[1] == runs[2]
    verdict(7, "forest accuracy and determinism", ok,
            f"accuracy={acc:.4f} baseline={baseline:.4f} identical={runs[0] == runs[1] == runs[2]}")


def test_8_pipeline_determinism(tmp_path, verdict):
    a, b = tmp_path / "a", tmp_path / "b"
    rcs = [main(["report", "--out", str(a), "--seed", "0"]), main(["report", "--out", str(b), "--seed", "0"])]
    csvs = sorted(p.name for p in a.glob("*.csv"))
    _, mismatch, errors = filecmp.cmpfiles(a, b, csvs, shallow=False)

    def header(name):
        return (a / name).read_text().splitlines()[0]

    sweep = (a / "table6_depth_sweep.csv").read_text().splitlines()
    headers_ok = (header("table1_categories.csv") == "category,initial_followers,users"
                  and header("table4_bucket_averages.csv") == "bucket,initial_followers,average_followers_gained"
                  and header("table5_classes.csv") == "class,code,users"
                  and sweep[0] == ",".join(SWEEP_HEADER))
    ok = rcs == [0, 0] and len(csvs) > 20 and not mismatch and not errors and headers_ok and len(sweep) - 1 == 8
    verdict(8, "report is byte-identical across runs", ok,
            f"{len(csvs)} csv files, {len(mismatch)} differ, sweep rows={len(sweep) - 1}")


def test_9_strategy_comparison(verdict):
    stats, planted = strategy_population(n=2000, match_fraction=0.05, boost=3.0, seed=0)
    cmp = compare_strategy(stats)
    ratio = cmp.mean_ratio
    ok = ratio is not None and 2.5 <= ratio <= 3.5 and set(cmp.matching_users) == planted
    verdict(9, "strategy matching/overall gain ratio", ok, f"ratio={ratio:.3f} matching={cmp.n_matching}")
