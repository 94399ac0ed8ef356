"""Feature vectors for the growth classifier."""

from __future__ import annotations

from collections.abc import Mapping, Sequence

import numpy as np

from ..cohort import BUCKET_LIMIT, GrowthLabel, bucketize
from ..sessions import ChannelRecord, ChannelWeekStats

FEATURE_NAMES = (
    "initial_followers",
    "bucket_index",
    "streams_per_week",
    "n_streams_lt5h",
    "n_streams_5to10h",
    "n_streams_gt10h",
    "has_non_gaming",
    "played_popular_game",
)
N_FEATURES = len(FEATURE_NAMES)


def extract_features(stats: ChannelWeekStats) -> np.ndarray:
    f = stats.initial_followers
    if not 0 <= f < BUCKET_LIMIT:
        raise ValueError(f"{stats.user_id}: {f} initial followers is outside the modelled range [0, {BUCKET_LIMIT})")
    return np.array([
        f,
        bucketize(f).index,
        stats.streams_per_week,
        stats.n_streams_lt5h,
        stats.n_streams_5to10h,
        stats.n_streams_gt10h,
        int(stats.has_non_gaming),
        int(stats.played_popular_game),
    ], dtype=np.float64)


def build_dataset(channels: Sequence, labels: Mapping[str, GrowthLabel]) -> tuple[np.ndarray, np.ndarray, list[str]]:
    """Stack features and integer labels for every labelled channel, in input order."""
    rows, ys, ids = [], [], []
    for c in channels:
        s = c.stats if isinstance(c, ChannelRecord) else c
        if s.user_id not in labels:
            continue
        rows.append(extract_features(s))
        ys.append(int(labels[s.user_id].cls))
        ids.append(s.user_id)
    X = np.vstack(rows) if rows else np.zeros((0, N_FEATURES))
    return X, np.asarray(ys, dtype=np.int64), ids
