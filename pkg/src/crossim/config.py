"""Campaign configuration: schema, defaults, parsing, validation.

A campaign is described by one YAML (or JSON) file.  Unknown keys and
mode/backend mismatches are rejected with field-level messages before any
simulation starts.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import yaml

from . import simbench
from .errors import ConfigError
from .road import RoadConstraints
from .search import (MODE_DISAGREE, MODE_DSS, MODE_FILTERED, MODE_MULTISIM,
                     MODE_SSIM, SearchSettings)

CONFIG_SCHEMA = "campaign-config/v1"

MODES = (MODE_MULTISIM, MODE_SSIM, MODE_DSS, MODE_DISAGREE, MODE_FILTERED)

#: Backend count each mode expects.
MODE_BACKENDS = {
    MODE_MULTISIM: 2,
    MODE_SSIM: 1,
    MODE_DSS: 2,
    MODE_DISAGREE: 2,
    MODE_FILTERED: 2,
}


@dataclass
class ValidationConfig:
    per_cell: int = 3
    n_runs: int = 5
    threshold: float = 1.0


@dataclass
class SurrogateConfig:
    model_path: str | None = None
    tau: float = 0.7


@dataclass
class CampaignConfig:
    mode: str = MODE_MULTISIM
    backends: tuple[str, ...] = ("A", "C")
    budget: int = 400
    population: int = 20
    mutation_rate: float = 0.1
    crossover_rate: float = 0.6
    archive_delta: float = 4.5
    repopulation_ratio: float = 0.2
    oracle_threshold: float = 2.2
    xte_cutoff: float = 3.0
    seed: int = 0
    n_segments: int = 5
    max_turn_angle: float = 90.0
    samples_per_segment: int = 25
    validation: ValidationConfig = field(default_factory=ValidationConfig)
    surrogate: SurrogateConfig = field(default_factory=SurrogateConfig)

    def problems(self) -> list[str]:
        """All validation failures, one message per field."""
        out = []
        if self.mode not in MODES:
            out.append(f"mode: unknown mode {self.mode!r}, expected one of {MODES}")
        else:
            expected = MODE_BACKENDS[self.mode]
            if len(self.backends) != expected:
                out.append(f"backends: mode {self.mode!r} needs exactly "
                           f"{expected} backend(s), got {len(self.backends)}")
        known = {b.id for b in simbench.builtin_ensemble()}
        for b in self.backends:
            if b not in known:
                out.append(f"backends: unknown backend id {b!r}, "
                           f"built-ins are {sorted(known)}")
        if len(set(self.backends)) != len(self.backends):
            out.append("backends: duplicate backend ids")
        if self.budget < 1:
            out.append("budget: must be a positive evaluation count")
        if self.population < 2:
            out.append("population: must be >= 2")
        if not (0.0 <= self.mutation_rate <= 1.0):
            out.append("mutation_rate: must be within [0, 1]")
        if not (0.0 <= self.crossover_rate <= 1.0):
            out.append("crossover_rate: must be within [0, 1]")
        if self.archive_delta <= 0:
            out.append("archive_delta: must be positive")
        if not (0.0 <= self.repopulation_ratio <= 1.0):
            out.append("repopulation_ratio: must be within [0, 1]")
        if self.oracle_threshold <= 0:
            out.append("oracle_threshold: must be positive")
        if self.xte_cutoff < self.oracle_threshold:
            out.append("xte_cutoff: must be >= oracle_threshold")
        if self.n_segments < 1:
            out.append("n_segments: must be >= 1")
        if self.samples_per_segment < 2:
            out.append("samples_per_segment: must be >= 2")
        if self.validation.per_cell < 1:
            out.append("validation.per_cell: must be >= 1")
        if self.validation.n_runs < 1:
            out.append("validation.n_runs: must be >= 1")
        if not (0.0 < self.validation.threshold <= 1.0):
            out.append("validation.threshold: must be within (0, 1]")
        if not (0.0 <= self.surrogate.tau <= 1.0):
            out.append("surrogate.tau: must be within [0, 1]")
        if self.mode == MODE_FILTERED and not self.surrogate.model_path:
            out.append("surrogate.model_path: required for mode "
                       f"{MODE_FILTERED!r}")
        return out

    def validate(self) -> None:
        problems = self.problems()
        if problems:
            raise ConfigError(problems)

    def backend_specs(self) -> tuple[simbench.BackendSpec, ...]:
        return tuple(simbench.backend_by_id(b) for b in self.backends)

    def road_constraints(self) -> RoadConstraints:
        return RoadConstraints(n_segments=self.n_segments,
                               max_turn_angle=self.max_turn_angle,
                               samples_per_segment=self.samples_per_segment)

    def search_settings(self, surrogate_model=None) -> SearchSettings:
        return SearchSettings(
            mode=self.mode,
            backends=self.backend_specs(),
            budget=self.budget,
            population=self.population,
            mutation_rate=self.mutation_rate,
            crossover_rate=self.crossover_rate,
            archive_delta=self.archive_delta,
            repopulation_ratio=self.repopulation_ratio,
            oracle_threshold=self.oracle_threshold,
            xte_cutoff=self.xte_cutoff,
            seed=self.seed,
            constraints=self.road_constraints(),
            surrogate_model=surrogate_model,
            surrogate_tau=self.surrogate.tau,
        )

    def echo(self) -> dict:
        """Plain-data form embedded into result files."""
        return {
            "schema": CONFIG_SCHEMA,
            "mode": self.mode,
            "backends": list(self.backends),
            "budget": self.budget,
            "population": self.population,
            "mutation_rate": self.mutation_rate,
            "crossover_rate": self.crossover_rate,
            "archive_delta": self.archive_delta,
            "repopulation_ratio": self.repopulation_ratio,
            "oracle_threshold": self.oracle_threshold,
            "xte_cutoff": self.xte_cutoff,
            "seed": self.seed,
            "n_segments": self.n_segments,
            "max_turn_angle": self.max_turn_angle,
            "samples_per_segment": self.samples_per_segment,
            "validation": {
                "per_cell": self.validation.per_cell,
                "n_runs": self.validation.n_runs,
                "threshold": self.validation.threshold,
            },
            "surrogate": {
                "model_path": self.surrogate.model_path,
                "tau": self.surrogate.tau,
            },
        }


_TOP_KEYS = {
    "schema", "mode", "backends", "budget", "population", "mutation_rate",
    "crossover_rate", "archive_delta", "repopulation_ratio",
    "oracle_threshold", "xte_cutoff", "seed", "n_segments", "max_turn_angle",
    "samples_per_segment", "validation", "surrogate",
}


def config_from_dict(doc: dict) -> CampaignConfig:
    problems = []
    if not isinstance(doc, dict):
        raise ConfigError(["config root must be a mapping"])
    unknown = set(doc) - _TOP_KEYS
    if unknown:
        problems.append(f"unknown keys: {sorted(unknown)}")
    schema = doc.get("schema", CONFIG_SCHEMA)
    if schema != CONFIG_SCHEMA:
        problems.append(f"schema: expected {CONFIG_SCHEMA!r}, got {schema!r}")
    if problems:
        raise ConfigError(problems)

    cfg = CampaignConfig()
    validation = ValidationConfig()
    surrogate = SurrogateConfig()
    vdoc = doc.get("validation", {}) or {}
    sdoc = doc.get("surrogate", {}) or {}
    try:
        cfg = CampaignConfig(
            mode=str(doc.get("mode", cfg.mode)),
            backends=tuple(doc.get("backends", list(cfg.backends))),
            budget=int(doc.get("budget", cfg.budget)),
            population=int(doc.get("population", cfg.population)),
            mutation_rate=float(doc.get("mutation_rate", cfg.mutation_rate)),
            crossover_rate=float(doc.get("crossover_rate", cfg.crossover_rate)),
            archive_delta=float(doc.get("archive_delta", cfg.archive_delta)),
            repopulation_ratio=float(doc.get("repopulation_ratio",
                                             cfg.repopulation_ratio)),
            oracle_threshold=float(doc.get("oracle_threshold",
                                           cfg.oracle_threshold)),
            xte_cutoff=float(doc.get("xte_cutoff", cfg.xte_cutoff)),
            seed=int(doc.get("seed", cfg.seed)),
            n_segments=int(doc.get("n_segments", cfg.n_segments)),
            max_turn_angle=float(doc.get("max_turn_angle", cfg.max_turn_angle)),
            samples_per_segment=int(doc.get("samples_per_segment",
                                            cfg.samples_per_segment)),
            validation=ValidationConfig(
                per_cell=int(vdoc.get("per_cell", validation.per_cell)),
                n_runs=int(vdoc.get("n_runs", validation.n_runs)),
                threshold=float(vdoc.get("threshold", validation.threshold)),
            ),
            surrogate=SurrogateConfig(
                model_path=sdoc.get("model_path"),
                tau=float(sdoc.get("tau", surrogate.tau)),
            ),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError([f"malformed value: {exc}"]) from exc
    cfg.validate()
    return cfg


def load_config(path: str | Path) -> CampaignConfig:
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError([f"cannot parse config: {exc}"]) from exc
    return config_from_dict(doc)
