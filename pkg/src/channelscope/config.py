"""Run configuration: an INI file with one section per stage, overridden by flags.

Example::

    [paths]
    input = data/snapshots.jsonl
    games = data/games.csv
    out = out/

    [botscan]
    ratio = 100
    min_jump = 0

    [cohort]
    top_fraction = 0.05
    min_streams_per_week = 5
    max_stream_hours = 5
    require_mixed_content = true

    [learn]
    depths = 2,4,6,8,10,12,14,16
    trees = 100
    train_fraction = 0.8

    [run]
    seed = 0
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .botscan import BotScanConfig
from .cohort import TOP_FRACTION, StrategyCriteria
from .learn.metrics import DEFAULT_DEPTHS
from .sessions import DEFAULT_NON_GAMING_TAGS, POPULAR_TOP_K


class ConfigError(ValueError):
    pass


# key -> (section, parser)
def _bool(v: str) -> bool:
    s = v.strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {v!r}")


def parse_depths(v: str) -> tuple[int, ...]:
    try:
        depths = tuple(int(x) for x in v.split(",") if x.strip())
    except ValueError:
        raise ConfigError(f"depths must be comma-separated integers, got {v!r}") from None
    if not depths or any(d < 1 for d in depths):
        raise ConfigError("depths must be positive integers")
    return depths


def _optional_float(v: str) -> float | None:
    return None if v.strip().lower() in ("", "none", "off") else float(v)


def _xmin(v: str) -> float | str:
    return "scan" if v.strip().lower() == "scan" else float(v)


KEYS = {
    "input": ("paths", Path),
    "games": ("paths", Path),
    "out": ("paths", Path),
    "tags_file": ("paths", Path),
    "ratio": ("botscan", float),
    "min_jump": ("botscan", int),
    "top_fraction": ("cohort", float),
    "popular_top_k": ("cohort", int),
    "min_streams_per_week": ("cohort", int),
    "max_stream_hours": ("cohort", float),
    "require_mixed_content": ("cohort", _bool),
    "min_hours_per_week": ("cohort", _optional_float),
    "xmin": ("distfit", _xmin),
    "depths": ("learn", parse_depths),
    "trees": ("learn", int),
    "train_fraction": ("learn", float),
    "smote_k": ("learn", int),
    "jobs": ("learn", int),
    "seed": ("run", int),
}


@dataclass(frozen=True)
class RunConfig:
    input: Path | None = None
    games: Path | None = None
    out: Path = Path("out")
    tags_file: Path | None = None
    ratio: float = 100.0
    min_jump: int = 0
    top_fraction: float = TOP_FRACTION
    popular_top_k: int = POPULAR_TOP_K
    min_streams_per_week: int = 5
    max_stream_hours: float = 5.0
    require_mixed_content: bool = True
    min_hours_per_week: float | None = None
    xmin: float | str = 1.0
    depths: tuple[int, ...] = DEFAULT_DEPTHS
    trees: int = 100
    train_fraction: float = 0.8
    smote_k: int = 5
    jobs: int = 1
    seed: int = 0
    non_gaming_tags: frozenset[str] = field(default=DEFAULT_NON_GAMING_TAGS, repr=False)

    def validate(self) -> RunConfig:
        try:
            self.botscan
            self.strategy
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if not 0 <= self.top_fraction <= 1:
            raise ConfigError("top_fraction must be in [0, 1]")
        if not 0 < self.train_fraction < 1:
            raise ConfigError("train_fraction must be in (0, 1)")
        if self.trees < 1 or self.smote_k < 1 or self.jobs < 1 or self.popular_top_k < 1:
            raise ConfigError("trees, smote_k, jobs and popular_top_k must be positive")
        if not self.depths or any(d < 1 for d in self.depths):
            raise ConfigError("depths must be positive integers")
        if self.xmin != "scan" and not (isinstance(self.xmin, float) and self.xmin > 0):
            raise ConfigError("xmin must be positive or 'scan'")
        if not self.non_gaming_tags:
            raise ConfigError("non-gaming tag set is empty")
        return self

    @property
    def botscan(self) -> BotScanConfig:
        return BotScanConfig(self.ratio, self.min_jump)

    @property
    def strategy(self) -> StrategyCriteria:
        return StrategyCriteria(self.min_streams_per_week, self.max_stream_hours,
                                self.require_mixed_content, self.min_hours_per_week)


def load_tags(path: Path) -> frozenset[str]:
    """One tag per line; blank lines and ``#`` comments ignored."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return frozenset(l.strip() for l in lines if l.strip() and not l.lstrip().startswith("#"))


def read_config_file(path: Path) -> dict:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    if not parser.read(path, encoding="utf-8"):
        raise FileNotFoundError(path)
    values = {}
    for key, (section, conv) in KEYS.items():
        if parser.has_option(section, key):
            try:
                values[key] = conv(parser.get(section, key))
            except (ValueError, ConfigError) as exc:
                raise ConfigError(f"{path}: [{section}] {key}: {exc}") from None
    known = {(s, k) for k, (s, _) in KEYS.items()}
    for section in parser.sections():
        for key in parser.options(section):
            if (section, key) not in known:
                raise ConfigError(f"{path}: unknown key [{section}] {key}")
    return values


def build_config(file_values: dict, overrides: dict) -> RunConfig:
    """File values first, then every non-None override on top."""
    names = {f.name for f in fields(RunConfig)}
    merged = {k: v for k, v in file_values.items() if k in names}
    merged.update({k: v for k, v in overrides.items() if v is not None and k in names})
    cfg = RunConfig(**merged)
    if isinstance(cfg.xmin, (int, float)) and not isinstance(cfg.xmin, bool):
        cfg = replace(cfg, xmin=float(cfg.xmin))
    if cfg.tags_file is not None:
        cfg = replace(cfg, non_gaming_tags=load_tags(cfg.tags_file))
    return cfg.validate()
