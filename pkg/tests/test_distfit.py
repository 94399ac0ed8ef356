from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from channelscope.distfit import (
    DegenerateSample, InsufficientData, fit_power_law, histogram, scan_xmin, write_fits_csv,
    write_histogram_csv,
)


def inverse_transform(n, alpha, xmin=1.0, seed=0):
    u = np.random.default_rng(seed).random(n)
    return xmin * (1.0 - u) ** (-1.0 / (alpha - 1.0))


def hill_oracle(x, xmin):
    tail = [v for v in x if v >= xmin]
    return 1.0 + len(tail) / math.fsum(math.log(v / xmin) for v in tail)


@pytest.mark.parametrize("alpha,lo,hi", [(2.0, 1.95, 2.05), (1.25, 1.20, 1.30)])
def test_inverse_transform_recovery(alpha, lo, hi):
    fit = fit_power_law(inverse_transform(100_000, alpha, seed=11), 1.0)
    assert lo <= fit.alpha <= hi
    assert fit.n_tail == 100_000


def test_matches_closed_form_oracle():
    x = inverse_transform(500, 1.7, xmin=3.0, seed=2)
    fit = fit_power_law(x, 3.0)
    assert fit.alpha == pytest.approx(hill_oracle(x, 3.0), rel=1e-12)
    assert fit.stderr == pytest.approx((fit.alpha - 1) / math.sqrt(500), rel=1e-12)


def test_degenerate_and_insufficient():
    with pytest.raises(DegenerateSample):
        fit_power_law([5.0] * 50, 5.0)
    with pytest.raises(InsufficientData):
        fit_power_law([1.0, 2.0, 3.0], 1.0)


def test_zeros_excluded_and_counted():
    x = np.concatenate([inverse_transform(200, 2.0, seed=5), np.zeros(7)])
    fit = fit_power_law(x, 1.0)
    assert fit.n_nonpositive == 7 and fit.n_tail == 200


def test_ks_small_for_true_model_large_for_wrong():
    x = inverse_transform(20_000, 2.5, seed=9)
    assert fit_power_law(x, 1.0).ks_distance < 0.02
    assert fit_power_law(np.random.default_rng(0).uniform(1, 2, 20_000), 1.0).ks_distance > 0.05


def test_scan_xmin_finds_tail_start():
    rng = np.random.default_rng(3)
    body = rng.uniform(1, 10, 3000)
    tail = inverse_transform(3000, 2.2, xmin=10.0, seed=4)
    fit = scan_xmin(np.concatenate([body, tail]))
    assert 8.0 <= fit.xmin <= 14.0
    assert abs(fit.alpha - 2.2) < 0.15


@settings(max_examples=40, deadline=None)
@given(st.floats(1e-3, 1e4), st.sampled_from([1.3, 2.0, 3.1]), st.integers(0, 1000))
def test_scale_invariance(c, alpha, seed):
    x = inverse_transform(300, alpha, xmin=2.0, seed=seed)
    a = fit_power_law(x, 2.0).alpha
    assert fit_power_law(c * x, c * 2.0).alpha == pytest.approx(a, rel=1e-9)


def test_stderr_decreases_on_nested_samples():
    x = inverse_transform(64_000, 1.8, seed=21)
    errs = [fit_power_law(x[:n], 1.0).stderr for n in (1000, 4000, 16_000, 64_000)]
    assert all(a > b for a, b in zip(errs, errs[1:]))


def test_histogram_examples():
    assert histogram([1, 2, 3, 4], "linear", 2) == [(1.0, 2.5, 2), (2.5, 4.0, 2)]
    assert histogram([7.0], "linear", 5) == [(7.0, 7.0, 1)]
    assert histogram([], "log", 4) == []
    edges = histogram([1, 5, 50, 1000], "log", 3)
    assert [b[0] for b in edges] + [edges[-1][1]] == pytest.approx([1, 10, 100, 1000])
    assert [b[2] for b in edges] == [2, 1, 1]


def test_histogram_log_rejects_nonpositive():
    with pytest.raises(ValueError):
        histogram([0, 1, 2], "log", 2)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6, allow_nan=False), max_size=200), st.integers(1, 50))
def test_histogram_counts_sum(values, n_bins):
    assert sum(c for _, _, c in histogram(values, "linear", n_bins)) == len(values)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(1e-3, 1e9), max_size=200), st.integers(1, 50))
def test_log_histogram_counts_sum(values, n_bins):
    assert sum(c for _, _, c in histogram(values, "log", n_bins)) == len(values)


def test_exports(tmp_path):
    fit = fit_power_law(inverse_transform(100, 2.0), 1.0)
    write_fits_csv({"followers": fit}, tmp_path / "f.csv")
    write_histogram_csv(histogram([1, 2, 3], "linear", 2), tmp_path / "h.csv")
    assert (tmp_path / "f.csv").read_text().splitlines()[0] == "quantity,alpha,xmin,n_tail,stderr,ks"
    assert (tmp_path / "h.csv").read_text().splitlines()[0] == "bin_lo,bin_hi,count"
