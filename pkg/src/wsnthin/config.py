"""Pipeline configuration loaded from YAML."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import yaml

from . import gbt
from .qc import QcConfig
from .synth import ScenarioConfig
from .thinning import RETRAINING_POINTS
from .tuning import DEFAULT_GRID

REPORT_SIZES = (42, 35, 28, 21, 14, 10, 7, 4, 3, 2)


class ConfigError(ValueError):
    pass


@dataclass
class Paths:
    observations: str | None = None   # long CSV: timestamp, station, variable, value
    metadata: str | None = None       # id, lat, lon, elevation, svf, class
    exclusions: str | None = None     # station, variable, start, end


@dataclass
class TuningConfig:
    enabled: bool = True
    sizes: list[int] | None = None    # defaults to the report sizes
    grid: dict = field(default_factory=lambda: {k: list(v) for k, v in DEFAULT_GRID.items()})
    test_folds: list[int] | None = None


@dataclass
class ThinningConfig:
    retraining_points: list[int] = field(default_factory=lambda: list(RETRAINING_POINTS))
    step_size: int = 1
    objective_scope: str = "all"
    weights: dict[str, float] | None = None
    folds: list[int] | None = None


@dataclass
class BaselineConfig:
    glm_references: list[str] | None = None
    random_repeats: int = 10
    random_variants: list[str] = field(default_factory=lambda: ["1->1", "1->2", "12->12"])


@dataclass
class PipelineConfig:
    seed: int = 0
    workers: int = 1
    output_dir: str = "out"
    paths: Paths = field(default_factory=Paths)
    scenario: dict | None = None
    year1: tuple[str, str] | None = None
    year2: tuple[str, str] | None = None
    qc: dict = field(default_factory=dict)
    n_folds: int = 10
    final_test_folds: list[int] | None = None
    gbt: dict = field(default_factory=dict)
    tuning: TuningConfig = field(default_factory=TuningConfig)
    thinning: ThinningConfig = field(default_factory=ThinningConfig)
    subset_sizes: list[int] = field(default_factory=lambda: list(REPORT_SIZES))
    variants: list[str] = field(default_factory=lambda: ["1->1", "1->2", "12->12"])
    baselines: BaselineConfig = field(default_factory=BaselineConfig)
    day_hours: tuple[int, int] = (6, 18)
    hot_threshold: float = 30.0

    # -- derived objects -----------------------------------------------------------
    def base_params(self) -> gbt.GbtParams:
        return gbt.GbtParams(**self.gbt)

    def qc_config(self) -> QcConfig:
        return QcConfig.from_dict(self.qc)

    def scenario_config(self) -> ScenarioConfig:
        if self.scenario is None:
            raise ConfigError("no scenario section; `simulate` needs one")
        return ScenarioConfig.from_dict(self.scenario)

    def validate(self) -> "PipelineConfig":
        try:
            self.base_params()
            self.qc_config()
            if self.scenario is not None:
                self.scenario_config()
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        if self.year1 is None or self.year2 is None:
            raise ConfigError("year1 and year2 periods are required")
        if self.n_folds < 3:
            raise ConfigError("n_folds must be at least 3")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.thinning.objective_scope not in ("all", "removed"):
            raise ConfigError(f"unknown objective scope {self.thinning.objective_scope!r}")
        if self.thinning.step_size < 1:
            raise ConfigError("thinning.step_size must be >= 1")
        unknown = (set(self.variants) | set(self.baselines.random_variants)) \
            - {"1->1", "1->2", "12->12"}
        if unknown:
            raise ConfigError(f"unknown variants {sorted(unknown)}")
        if self.baselines.random_repeats < 1:
            raise ConfigError("baselines.random_repeats must be >= 1")
        for name in ("observations", "metadata", "exclusions"):
            p = getattr(self.paths, name)
            if p is not None and not Path(p).exists():
                raise ConfigError(f"paths.{name} does not exist: {p}")
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        """Stable hash of the settings that affect results (not output dir or workers)."""
        d = self.to_dict()
        d.pop("output_dir")
        d.pop("workers")
        blob = json.dumps(d, sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    @classmethod
    def from_dict(cls, d: dict, base_dir: Path | None = None) -> "PipelineConfig":
        d = dict(d or {})
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        sections = {"paths": Paths, "tuning": TuningConfig, "thinning": ThinningConfig,
                    "baselines": BaselineConfig}
        try:
            for key, typ in sections.items():
                if key in d:
                    d[key] = typ(**(d[key] or {}))
            for key in ("year1", "year2", "day_hours"):
                if d.get(key) is not None:
                    d[key] = tuple(str(v) if key != "day_hours" else int(v) for v in d[key])
            cfg = cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc
        if base_dir is not None:
            for name in ("observations", "metadata", "exclusions"):
                p = getattr(cfg.paths, name)
                if p is not None and not Path(p).is_absolute():
                    setattr(cfg.paths, name, str(Path(base_dir) / p))
        return cfg


def load_config(path) -> PipelineConfig:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML in {path}: {exc}") from exc
    if raw is not None and not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    return PipelineConfig.from_dict(raw or {}, base_dir=path.parent)


def bundled_config_path() -> Path:
    return Path(__file__).with_name("data") / "small_scenario.yaml"
