"""Power-law tail fits (continuous maximum likelihood) and histogram data."""

from __future__ import annotations

import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .tables import write_csv

MIN_TAIL = 10
FIT_HEADER = ("quantity", "alpha", "xmin", "n_tail", "stderr", "ks")
HIST_HEADER = ("bin_lo", "bin_hi", "count")


class FitError(ValueError):
    pass


class InsufficientData(FitError):
    pass


class DegenerateSample(FitError):
    pass


@dataclass(frozen=True)
class PowerLawFit:
    alpha: float
    xmin: float
    n_tail: int
    stderr: float
    ks_distance: float
    n_nonpositive: int = 0


def _ks(tail_sorted: np.ndarray, alpha: float, xmin: float) -> float:
    n = tail_sorted.size
    model = 1.0 - (tail_sorted / xmin) ** (1.0 - alpha)
    upper = np.arange(1, n + 1) / n
    lower = np.arange(0, n) / n
    return float(max(np.max(upper - model), np.max(model - lower)))


def fit_power_law(samples: Iterable[float], xmin: float) -> PowerLawFit:
    """Continuous MLE of the exponent for samples at or above ``xmin``.

    ``alpha = 1 + n / sum(ln(x_i / xmin))``, ``stderr = (alpha - 1) / sqrt(n)``.
    Non-positive samples are dropped and counted.
    """
    if not xmin > 0:
        raise ValueError("xmin must be positive")
    x = np.asarray(list(samples) if not isinstance(samples, np.ndarray) else samples, dtype=np.float64)
    positive = x > 0
    n_nonpos = int(x.size - positive.sum())
    tail = np.sort(x[positive & (x >= xmin)])
    n = tail.size
    if n < MIN_TAIL:
        raise InsufficientData(f"{n} samples >= xmin={xmin}; need at least {MIN_TAIL}")
    log_sum = float(np.sum(np.log(tail / xmin)))
    if log_sum <= 0:
        raise DegenerateSample("every tail sample equals xmin; the estimator diverges")
    alpha = 1.0 + n / log_sum
    return PowerLawFit(alpha, float(xmin), n, (alpha - 1.0) / math.sqrt(n),
                       _ks(tail, alpha, xmin), n_nonpos)


def scan_xmin(samples: Iterable[float], min_tail: int = 50, max_candidates: int = 200) -> PowerLawFit:
    """Pick xmin among observed values by minimising the KS distance."""
    x = np.asarray(list(samples), dtype=np.float64)
    x = x[x > 0]
    candidates = np.unique(x)
    if candidates.size > max_candidates:
        candidates = np.unique(np.quantile(x, np.linspace(0, 1, max_candidates, endpoint=False)))
    best = None
    for xm in candidates:
        if np.count_nonzero(x >= xm) < min_tail:
            break
        try:
            fit = fit_power_law(x, xm)
        except FitError:
            continue
        if best is None or fit.ks_distance < best.ks_distance:
            best = fit
    if best is None:
        raise InsufficientData("no xmin candidate leaves a usable tail")
    return best


def histogram(values: Sequence[float], binning: str = "linear", n_bins: int = 20) -> list[tuple[float, float, int]]:
    """Bins covering [min, max]; the last bin is closed so counts sum to len(values)."""
    if n_bins < 1:
        raise ValueError("n_bins must be >= 1")
    x = np.asarray(values, dtype=np.float64)
    if x.size == 0:
        return []
    lo, hi = float(x.min()), float(x.max())
    if lo == hi:
        return [(lo, hi, int(x.size))]
    if binning == "linear":
        edges = np.linspace(lo, hi, n_bins + 1)
    elif binning == "log":
        if lo <= 0:
            raise ValueError("log binning needs strictly positive values")
        edges = np.logspace(math.log10(lo), math.log10(hi), n_bins + 1)
        edges[0], edges[-1] = lo, hi
    else:
        raise ValueError(f"unknown binning {binning!r}")
    counts, _ = np.histogram(x, bins=edges)
    return [(float(a), float(b), int(c)) for a, b, c in zip(edges[:-1], edges[1:], counts)]


def write_fits_csv(fits: dict[str, PowerLawFit], path: str | Path) -> int:
    rows = [(q, f.alpha, f.xmin, f.n_tail, f.stderr, f.ks_distance) for q, f in fits.items()]
    return write_csv(path, FIT_HEADER, rows)


def write_histogram_csv(bins: Iterable[tuple[float, float, int]], path: str | Path) -> int:
    return write_csv(path, HIST_HEADER, bins)
