"""End-to-end analysis stages and the artifact manifest.

Each stage writes its exports under the output directory and records them in
an :class:`Artifacts` list. ``run_report`` chains the stages
(botscan -> sessions -> distfit -> cohort -> learn) and writes
``manifest.json``.
"""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import cohort, distfit
from .botscan import filter_dataset
from .config import RunConfig
from .ingest import GamePopularityRecord, SnapshotStore, load_game_popularity, replay_load, write_log
from .learn import (build_dataset, depth_sweep, smote, split_train_test, train_forest, write_sweep_csv)
from .sessions import (ChannelRecord, analyze_store, popular_by_day, write_sessions_csv,
                       write_week_stats_csv)
from .tables import write_csv, write_json

log = logging.getLogger(__name__)

MANIFEST_VERSION = 1


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class Artifacts:
    out: Path
    entries: list[dict] = field(default_factory=list)

    def add(self, name: str, rows: int, kind: str, schema: str) -> Path:
        self.entries.append({"path": name, "rows": rows, "kind": kind, "schema": schema})
        return self.out / name

    def csv(self, name: str, writer, *args) -> None:
        path = self.out / name
        rows = writer(*args, path)
        self.entries.append({"path": name, "rows": rows, "kind": "csv",
                             "schema": path.open(encoding="utf-8").readline().strip()})

    def json(self, name: str, obj, rows: int, schema: str) -> None:
        write_json(self.out / name, obj)
        self.add(name, rows, "json", schema)


@dataclass
class Inputs:
    store: SnapshotStore
    games: list[GamePopularityRecord]
    source: str


def load_inputs(cfg: RunConfig) -> Inputs:
    """Snapshot log and game table from the config, or the bundled synthetic fixture."""
    if cfg.input is None:
        from .synth import FIXTURE_CONFIG, generate
        synth_log, injected = generate(FIXTURE_CONFIG)
        games = load_game_popularity(cfg.games) if cfg.games else synth_log.games
        return Inputs(injected.store, games, "bundled-fixture")
    store = replay_load(cfg.input)
    games = load_game_popularity(cfg.games) if cfg.games else []
    return Inputs(store, games, str(cfg.input))


def analyze(store: SnapshotStore, games, cfg: RunConfig) -> list[ChannelRecord]:
    return analyze_store(store, popular_by_day(games, cfg.popular_top_k), cfg.non_gaming_tags)


# -- stages -------------------------------------------------------------------

def stage_botscan(inputs: Inputs, cfg: RunConfig, arts: Artifacts) -> SnapshotStore:
    clean, report = filter_dataset(inputs.store, cfg.botscan)
    arts.json("botscan_report.json", report.to_dict(), len(report.removed), "removed[user_id,flags];tiers{gt10k,gt100k}")
    return clean


def stage_sessions(records: list[ChannelRecord], arts: Artifacts) -> None:
    arts.csv("sessions.csv", write_sessions_csv, [s for r in records for s in r.sessions])
    arts.csv("week_stats.csv", write_week_stats_csv, [r.stats for r in records])


def _fit_or_none(values, xmin):
    values = np.asarray(values, dtype=np.float64)
    try:
        if xmin == "scan":
            return distfit.scan_xmin(values)
        return distfit.fit_power_law(values, xmin)
    except distfit.FitError as exc:
        log.warning("power-law fit skipped: %s", exc)
        return None


def _positive(values):
    return [v for v in values if v > 0]


def stage_distfit(records: list[ChannelRecord], cfg: RunConfig, arts: Artifacts,
                  raw_records: list[ChannelRecord] | None = None) -> dict[str, distfit.PowerLawFit]:
    sessions = [s for r in records for s in r.sessions]
    quantities = {
        "avg_viewers": [s.avg_viewers for s in sessions],
        "start_viewers": [s.start_viewers for s in sessions],
        "followers": [r.stats.initial_followers for r in records],
    }
    fits = {q: f for q, v in quantities.items() if (f := _fit_or_none(v, cfg.xmin)) is not None}
    arts.csv("powerlaw_fits.csv", distfit.write_fits_csv, fits)
    for i, (q, v) in enumerate(quantities.items(), 1):
        arts.csv(f"fig{i:02d}_{q}_hist.csv", distfit.write_histogram_csv,
                 distfit.histogram(_positive(v), "log", 30))

    def gains(recs, active):
        return [r.stats.followers_gained_active if active else r.stats.followers_gained_inactive for r in recs]

    before = raw_records if raw_records is not None else records
    for n, (recs, active, tag) in enumerate([(before, True, "active_raw"), (before, False, "inactive_raw"),
                                             (records, True, "active_clean"), (records, False, "inactive_clean")], 4):
        arts.csv(f"fig{n:02d}_gained_{tag}_hist.csv", distfit.write_histogram_csv,
                 distfit.histogram(gains(recs, active), "linear", 40))
    return fits


def _count_table(counter: Counter, header, path) -> int:
    rows = sorted(counter.items(), key=lambda kv: (-kv[1], kv[0]))
    return write_csv(path, header, rows)


def stage_cohort(records: list[ChannelRecord], cfg: RunConfig, arts: Artifacts):
    arts.csv("table1_categories.csv", cohort.write_category_table, records)
    ranged = cohort.in_bucket_range(records)
    outliers = cohort.isolate_outliers(ranged, cfg.top_fraction)
    out_recs = [r for r in ranged if r.user_id in outliers]
    arts.csv("outliers.csv", lambda ids, p: write_csv(p, ("user_id",), [(u,) for u in ids]), sorted(outliers))

    all_sessions = [s for r in records for s in r.sessions]
    out_sessions = [s for r in out_recs for s in r.sessions]
    arts.csv("table2_content.csv",
             lambda a, b, path: cohort.write_content_table(a, b, path, cfg.non_gaming_tags),
             all_sessions, out_sessions)
    cmp = cohort.compare_strategy(records, cfg.strategy)
    arts.csv("table3_strategy.csv", cohort.write_strategy_table, cmp)
    averages = cohort.bucket_averages(ranged)
    arts.csv("table4_bucket_averages.csv", cohort.write_bucket_table, averages)
    labels = cohort.label_growth(ranged, averages)
    arts.csv("table5_classes.csv", cohort.write_class_table, labels)

    def per_hour(pred):
        return [s.followers_gained / s.duration_hours for s in all_sessions if pred(s.duration_hours)]

    arts.csv("fig08_gain_per_hour_lt6h_hist.csv", distfit.write_histogram_csv,
             distfit.histogram(per_hour(lambda h: h < 6), "linear", 40))
    arts.csv("fig09_gain_per_hour_gt24h_hist.csv", distfit.write_histogram_csv,
             distfit.histogram(per_hour(lambda h: h > 24), "linear", 40))

    languages = sorted({s.language for s in all_sessions if s.language})
    named = {"en": "fig10_peak_hours_en.csv", "es": "fig11_peak_hours_es.csv"}
    for lang in sorted(set(languages) | set(named)):
        profile = cohort.peak_hours(records, lang)
        arts.csv(named.get(lang, f"peak_hours_{lang}.csv"), cohort.write_peak_profile, profile)

    arts.csv("fig12_outlier_languages.csv", _count_table,
             Counter(r.stats.language or "none" for r in out_recs), ("language", "channels"))
    arts.csv("fig13_outlier_tags.csv", _count_table,
             Counter(s.primary_tag or "none" for s in out_sessions), ("tag", "streams"))
    for n, (sess, tag) in enumerate([(all_sessions, "all"), (out_sessions, "outliers")], 14):
        arts.csv(f"fig{n}_stream_length_{tag}_hist.csv", distfit.write_histogram_csv,
                 distfit.histogram([s.duration_hours for s in sess], "linear", 24))
    for n, (recs, tag) in enumerate([(records, "all"), (out_recs, "outliers")], 16):
        arts.csv(f"fig{n}_streams_per_week_{tag}.csv", _count_table,
                 Counter(r.stats.streams_per_week for r in recs), ("streams_per_week", "channels"))
    return ranged, labels


def stage_learn(ranged: list[ChannelRecord], labels, cfg: RunConfig, arts: Artifacts):
    X, y, _ = build_dataset(ranged, labels)
    X_tr, y_tr, X_te, y_te = split_train_test(X, y, cfg.train_fraction, cfg.seed)
    X_bal, y_bal = smote(X_tr, y_tr, cfg.smote_k, cfg.seed)
    rows = depth_sweep(X_bal, y_bal, X_te, y_te, cfg.depths, cfg.trees, cfg.seed, cfg.jobs)
    arts.csv("table6_depth_sweep.csv", write_sweep_csv, rows)
    best_depth = max(rows, key=lambda r: (r[1].accuracy, -r[0]))[0]
    model = train_forest(X_bal, y_bal, best_depth, cfg.trees, cfg.seed, n_jobs=cfg.jobs)
    model.save(arts.out / "model.json")
    arts.add("model.json", model.n_trees, "json", "format,version,classes,trees[feature,threshold,left,right,value]")

    def counts(v):
        return {str(k): int(c) for k, c in zip(*np.unique(v, return_counts=True))}

    split = {"train": counts(y_tr), "test": counts(y_te), "train_balanced": counts(y_bal),
             "best_depth": int(best_depth)}
    arts.json("learn_split.json", split, 3, "train,test,train_balanced,best_depth")
    return rows, model


# -- orchestration ------------------------------------------------------------

def _manifest(arts: Artifacts, cfg: RunConfig, inputs_source: str, completed: list[str],
              failed: StageError | None) -> dict:
    return {
        "version": MANIFEST_VERSION,
        "generated_at": datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ"),
        "input": inputs_source,
        "seed": cfg.seed,
        "stages_completed": completed,
        "failed_stage": failed.stage if failed else None,
        "error": str(failed.cause) if failed else None,
        "artifacts": arts.entries,
    }


def run_report(cfg: RunConfig, inputs: Inputs | None = None) -> dict:
    """Run every stage; on failure the manifest still lists completed stages."""
    cfg.out.mkdir(parents=True, exist_ok=True)
    arts = Artifacts(cfg.out)
    inputs = inputs or load_inputs(cfg)
    completed: list[str] = []
    failed = None
    try:
        stage = "botscan"
        clean = stage_botscan(inputs, cfg, arts)
        completed.append(stage)
        stage = "sessions"
        raw = analyze(inputs.store, inputs.games, cfg)
        clean_ids = set(clean.users)
        records = [r for r in raw if r.user_id in clean_ids]
        write_log(clean, cfg.out / "clean_snapshots.jsonl")
        arts.add("clean_snapshots.jsonl", clean.n_snapshots, "jsonl", "snapshot-log")
        stage_sessions(records, arts)
        completed.append(stage)
        stage = "distfit"
        stage_distfit(records, cfg, arts, raw)
        completed.append(stage)
        stage = "cohort"
        ranged, labels = stage_cohort(records, cfg, arts)
        completed.append(stage)
        stage = "learn"
        stage_learn(ranged, labels, cfg, arts)
        completed.append(stage)
    except Exception as exc:  # noqa: BLE001 - recorded in the manifest, re-raised below
        failed = StageError(stage, exc)
        log.exception("report stage %s failed", stage)
    manifest = _manifest(arts, cfg, inputs.source, completed, failed)
    write_json(cfg.out / "manifest.json", manifest)
    if failed:
        raise failed
    return manifest
