"""Command-line entry point.

Exit codes: 0 success, 2 missing input file, 3 validation failure,
4 partial pipeline failure (the manifest records the completed stages).
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import __version__
from .config import ConfigError, RunConfig, build_config, parse_depths, read_config_file
from .ingest import (CollectorConfig, EmptyStoreError, FixtureSource, HttpSource, SimulatedClock,
                     SnapshotLogWriter, replay_load, write_game_popularity, write_log)
from .tables import write_json

log = logging.getLogger("channelscope")

EXIT_OK, EXIT_MISSING, EXIT_INVALID, EXIT_PARTIAL = 0, 2, 3, 4


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="INI config file; flags override it")
    p.add_argument("--input", type=Path, help="snapshot log (JSONL, optionally .gz); default: bundled synthetic fixture")
    p.add_argument("--games", type=Path, help="game popularity CSV (date,game_id,rank,viewers)")
    p.add_argument("--out", type=Path, help="output directory (default: out)")
    p.add_argument("--seed", type=int)
    p.add_argument("--ratio", type=float, help="step ratio for bot detection (default 100)")
    p.add_argument("--min-jump", dest="min_jump", type=int)
    p.add_argument("--top-fraction", dest="top_fraction", type=float)
    p.add_argument("--depths", help="comma-separated max depths")
    p.add_argument("--trees", type=int)
    p.add_argument("--train-fraction", dest="train_fraction", type=float)
    p.add_argument("--tags-file", dest="tags_file", type=Path, help="non-gaming tags, one per line")
    p.add_argument("--jobs", type=int, help="threads for forest training")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="channelscope", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("collect", help="poll channels on the rotating weekly schedule")
    _common(p)
    p.add_argument("--api-url", help="live channel-status endpoint; without it --input is replayed")
    p.add_argument("--population", type=Path, help="user ids, one per line (default: every user in --input)")
    p.add_argument("--cohort-size", type=int)
    p.add_argument("--weeks", type=int, default=1)
    p.add_argument("--rate-limit", type=int, default=800, help="requests per minute")
    p.add_argument("--max-in-flight", type=int, default=4)

    p = sub.add_parser("synth", help="generate a synthetic snapshot log with ground truth")
    _common(p)
    p.add_argument("--n-channels", type=int, default=400)
    p.add_argument("--bot-rate", type=float, default=0.0)
    p.add_argument("--weeks", type=int, default=1)
    p.add_argument("--strategy-fraction", type=float, default=0.0)
    p.add_argument("--strategy-boost", type=float, default=1.0)

    for name, text in [("botscan", "remove channels with isolated follower steps"),
                       ("sessions", "reconstruct sessions and weekly stats"),
                       ("distfit", "power-law fits and popularity histograms"),
                       ("cohort", "categories, outliers, labels, peak hours, strategy table"),
                       ("train", "train the growth classifier over a depth sweep"),
                       ("report", "full pipeline with manifest")]:
        _common(sub.add_parser(name, help=text))
    return parser


OVERRIDE_KEYS = ("input", "games", "out", "seed", "ratio", "min_jump", "top_fraction", "depths",
                 "trees", "train_fraction", "tags_file", "jobs")


def make_config(args) -> RunConfig:
    for attr in ("config", "input", "games", "tags_file"):
        path = getattr(args, attr, None)
        if path is not None and not path.exists():
            raise CliError(EXIT_MISSING, f"{attr.replace('_', '-')}: no such file: {path}")
    try:
        file_values = read_config_file(args.config) if args.config else {}
        for attr in ("input", "games", "tags_file"):
            path = file_values.get(attr)
            if path is not None and getattr(args, attr, None) is None and not path.exists():
                raise CliError(EXIT_MISSING, f"{attr}: no such file: {path}")
        overrides = {k: getattr(args, k, None) for k in OVERRIDE_KEYS}
        if overrides["depths"] is not None:
            overrides["depths"] = parse_depths(overrides["depths"])
        return build_config(file_values, overrides)
    except (ConfigError, ValueError) as exc:
        raise CliError(EXIT_INVALID, str(exc)) from None


def _inputs(cfg):
    from .pipeline import load_inputs
    try:
        return load_inputs(cfg)
    except EmptyStoreError as exc:
        raise CliError(EXIT_INVALID, str(exc)) from None
    except ValueError as exc:
        raise CliError(EXIT_INVALID, f"invalid input: {exc}") from None


def cmd_collect(args, cfg: RunConfig) -> int:
    if args.api_url is None and cfg.input is None:
        raise CliError(EXIT_INVALID, "collect needs --api-url or an --input log to replay")
    population = None
    if args.population:
        if not args.population.exists():
            raise CliError(EXIT_MISSING, f"population: no such file: {args.population}")
        population = [l.strip() for l in args.population.read_text(encoding="utf-8").splitlines() if l.strip()]
    start = None
    if args.api_url:
        source = HttpSource(args.api_url)
    else:
        store = replay_load(cfg.input)
        first = min(s.ts for s in store)
        source = FixtureSource.from_store(store, clock=SimulatedClock(first))
        start = first
        population = population or store.users
    if not population:
        raise CliError(EXIT_INVALID, "empty population")
    try:
        ccfg = CollectorConfig(cohort_size=args.cohort_size or len(population) // args.weeks,
                               weeks=args.weeks, rate_limit=args.rate_limit, max_in_flight=args.max_in_flight)
        ccfg.cohorts(population)
    except ValueError as exc:
        raise CliError(EXIT_INVALID, str(exc)) from None
    from .ingest import run_collection
    with SnapshotLogWriter(cfg.out / "snapshots.jsonl") as sink:
        summary = run_collection(ccfg, source, sink, population, start=start)
    write_json(cfg.out / "collection_summary.json", summary.to_dict())
    print(f"wrote {summary.snapshots_written} snapshots, {len(summary.gaps)} gaps")
    return EXIT_PARTIAL if summary.aborted else EXIT_OK


def cmd_synth(args, cfg: RunConfig) -> int:
    from .sessions import write_week_stats_csv
    from .synth import SynthConfig, generate
    try:
        scfg = SynthConfig(n_channels=args.n_channels, bot_rate=args.bot_rate, weeks=args.weeks,
                           seed=cfg.seed, strategy_fraction=args.strategy_fraction,
                           strategy_boost=args.strategy_boost)
    except ValueError as exc:
        raise CliError(EXIT_INVALID, str(exc)) from None
    synth_log, injected = generate(scfg)
    n = write_log(injected.store, cfg.out / "snapshots.jsonl")
    write_game_popularity(synth_log.games, cfg.out / "games.csv")
    write_week_stats_csv([synth_log.truth[u] for u in injected.store.users], cfg.out / "truth_week_stats.csv")
    write_json(cfg.out / "tainted.json", {"tainted": sorted(injected.tainted),
                                          "steps": dict(sorted(injected.steps.items()))})
    print(f"wrote {n} snapshots for {len(injected.store)} channels ({len(injected.tainted)} tainted)")
    return EXIT_OK


def _records(cfg, inputs, store=None):
    from .pipeline import analyze
    return analyze(store or inputs.store, inputs.games, cfg)


def run_stage(command: str, cfg: RunConfig) -> int:
    from . import pipeline
    if command == "report":
        inputs = _inputs(cfg)
        try:
            manifest = pipeline.run_report(cfg, inputs)
        except pipeline.StageError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_PARTIAL
        print(f"report: {len(manifest['artifacts'])} artifacts in {cfg.out}")
        return EXIT_OK

    inputs = _inputs(cfg)
    arts = pipeline.Artifacts(cfg.out)
    try:
        if command == "botscan":
            clean = pipeline.stage_botscan(inputs, cfg, arts)
            write_log(clean, cfg.out / "clean_snapshots.jsonl")
            print(f"botscan: removed {len(inputs.store) - len(clean)} of {len(inputs.store)} channels")
        elif command == "sessions":
            pipeline.stage_sessions(_records(cfg, inputs), arts)
        elif command == "distfit":
            fits = pipeline.stage_distfit(_records(cfg, inputs), cfg, arts)
            for q, f in fits.items():
                print(f"{q}: alpha={f.alpha:.3f} +/- {f.stderr:.3f} (xmin={f.xmin:g}, n={f.n_tail})")
        elif command == "cohort":
            pipeline.stage_cohort(_records(cfg, inputs), cfg, arts)
        elif command == "train":
            from .cohort import in_bucket_range, label_growth
            ranged = in_bucket_range(_records(cfg, inputs))
            rows, _ = pipeline.stage_learn(ranged, label_growth(ranged), cfg, arts)
            for d, r in rows:
                print(f"depth {d:>2}: accuracy {100 * r.accuracy:.2f}%  macro-F1 {r.macro_f1:.3f}")
    except ValueError as exc:
        print(f"error: {command}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    for e in arts.entries:
        log.info("wrote %s (%d rows)", e["path"], e["rows"])
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = make_config(args)
        cfg.out.mkdir(parents=True, exist_ok=True)
        if args.command == "collect":
            return cmd_collect(args, cfg)
        if args.command == "synth":
            return cmd_synth(args, cfg)
        return run_stage(args.command, cfg)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
