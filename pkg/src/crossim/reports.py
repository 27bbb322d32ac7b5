"""Stable on-disk formats for campaign results, validation, and comparison.

Every document carries a schema tag.  Primary outputs contain no timestamps
or absolute paths, so identical configs and seeds reproduce byte-identical
files; wall-clock data lives in the separate run manifest.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass

from .analysis import ValidationReport
from .baselines import DssResult
from .road import RoadGenotype
from .search import CampaignResult, FitnessVector, TestRecord

CAMPAIGN_SCHEMA = "campaign/v1"
DSS_SCHEMA = "dss/v1"
VALIDATION_SCHEMA = "validation/v1"
COMPARISON_SCHEMA = "comparison/v1"
MANIFEST_SCHEMA = "manifest/v1"


def _num(v: float) -> float | None:
    """Map non-finite floats to None for strict-JSON friendliness."""
    return v if math.isfinite(v) else None


def _denum(v) -> float:
    return math.inf if v is None else float(v)


def test_to_dict(t: TestRecord) -> dict:
    return {
        "index": t.index,
        "genotype": [float(x) for x in t.genotype.to_vector()],
        "fitness": {
            "per_backend": [float(v) for v in t.fitness.per_backend],
            "spread": float(t.fitness.spread),
            "novelty": _num(t.fitness.novelty),
        },
        "failed_per_backend": [bool(b) for b in t.failed_per_backend],
        "curvature": float(t.curvature),
        "turn_count": int(t.turn_count),
        "agreed_failure": t.agreed_failure,
    }


def test_from_dict(d: dict) -> TestRecord:
    fit = d["fitness"]
    return TestRecord(
        index=int(d["index"]),
        genotype=RoadGenotype.from_vector(d["genotype"]),
        fitness=FitnessVector(per_backend=tuple(fit["per_backend"]),
                              spread=float(fit["spread"]),
                              novelty=_denum(fit["novelty"])),
        failed_per_backend=tuple(bool(b) for b in d["failed_per_backend"]),
        curvature=float(d["curvature"]),
        turn_count=int(d["turn_count"]),
    )


def campaign_to_dict(result: CampaignResult, config_echo: dict | None = None) -> dict:
    return {
        "schema": CAMPAIGN_SCHEMA,
        "mode": result.mode,
        "backends": list(result.backend_ids),
        "seed": result.seed,
        "budget": result.budget,
        "evaluations": result.evaluations,
        "discards": result.discards,
        "config": config_echo or {},
        "tests": [test_to_dict(t) for t in result.all_tests],
        "agreed_failure_indices": [t.index for t in result.agreed_failures],
    }


def campaign_from_dict(doc: dict) -> CampaignResult:
    if doc.get("schema") != CAMPAIGN_SCHEMA:
        raise ValueError(f"unsupported campaign schema: {doc.get('schema')!r}")
    result = CampaignResult(
        mode=doc["mode"],
        backend_ids=tuple(doc["backends"]),
        seed=int(doc["seed"]),
        budget=int(doc["budget"]),
        discards=int(doc.get("discards", 0)),
    )
    result.all_tests = [test_from_dict(t) for t in doc["tests"]]
    return result


def campaign_json(result: CampaignResult, config_echo: dict | None = None) -> str:
    return json.dumps(campaign_to_dict(result, config_echo),
                      sort_keys=True, indent=1)


def load_campaign(text: str) -> CampaignResult:
    return campaign_from_dict(json.loads(text))


def campaign_csv(result: CampaignResult) -> str:
    """Flat per-test table; one fitness and verdict column per backend."""
    n = result.all_tests[0].genotype.n if result.all_tests else 0
    ids = result.backend_ids
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    header = (["index"]
              + [f"angle_{i + 1}" for i in range(n)]
              + [f"length_{i + 1}" for i in range(n)]
              + [f"fitness_{b}" for b in ids]
              + ["spread", "novelty"]
              + [f"failed_{b}" for b in ids]
              + ["curvature", "turn_count", "agreed_failure"])
    writer.writerow(header)
    for t in result.all_tests:
        writer.writerow(
            [t.index]
            + [repr(float(v)) for v in t.genotype.to_vector()]
            + [repr(float(v)) for v in t.fitness.per_backend]
            + [repr(float(t.fitness.spread)), repr(float(t.fitness.novelty))]
            + [int(b) for b in t.failed_per_backend]
            + [repr(float(t.curvature)), t.turn_count, int(t.agreed_failure)])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# Dual-search (dss) results
# ---------------------------------------------------------------------------

def dss_to_dict(result: DssResult, config_echo: dict | None = None) -> dict:
    run1_ids = {id(t) for t in result.run1.all_tests}
    return {
        "schema": DSS_SCHEMA,
        "seed": result.seed,
        "budget": result.budget,
        "evaluations": result.evaluations,
        "config": config_echo or {},
        "run1": campaign_to_dict(result.run1),
        "run2": campaign_to_dict(result.run2),
        "migrations": [
            {
                "origin_run": m.origin_run,
                "origin_index": m.origin_index,
                "migration_index": m.migration_index,
                "backend": m.backend_id,
                "fitness": float(m.fitness),
                "failed": m.failed,
            }
            for m in result.migrated
        ],
        "critical": [
            {"origin_run": 1 if id(t) in run1_ids else 2, "index": t.index}
            for t in result.critical
        ],
    }


def dss_json(result: DssResult, config_echo: dict | None = None) -> str:
    return json.dumps(dss_to_dict(result, config_echo), sort_keys=True, indent=1)


# ---------------------------------------------------------------------------
# Validation reports
# ---------------------------------------------------------------------------

def validation_to_dict(report: ValidationReport,
                       campaign_signature: dict | None = None,
                       first_valid: float | None = None,
                       hv_points: list[tuple[float, float]] | None = None) -> dict:
    return {
        "schema": VALIDATION_SCHEMA,
        "campaign": campaign_signature or {},
        "held_out": list(report.held_out_ids),
        "n_runs": report.n_runs,
        "threshold": report.threshold,
        "failures": [
            {
                "test_index": f.test_index,
                "cell": [f.cell[0], f.cell[1]],
                "verdicts": {k: [bool(b) for b in v]
                             for k, v in sorted(f.verdicts.items())},
                "failure_rates": {k: float(v)
                                  for k, v in sorted(f.failure_rates.items())},
                "valid": f.valid,
            }
            for f in report.failures
        ],
        "n_valid": report.n_valid,
        "selected": report.selected_count,
        "valid_rate": report.valid_rate,
        "first_valid_budget": first_valid,
        "hv_points": [[float(a), float(b)] for a, b in (hv_points or [])],
    }


def validation_json(report: ValidationReport, **kw) -> str:
    return json.dumps(validation_to_dict(report, **kw), sort_keys=True, indent=1)


def validation_summary(report: ValidationReport,
                       first_valid: float | None) -> str:
    lines = [
        f"held-out backends : {', '.join(report.held_out_ids)}",
        f"runs per backend  : {report.n_runs}",
        f"failure threshold : {report.threshold:.0%}",
        f"selected failures : {report.selected_count}",
        f"valid failures    : {report.n_valid}",
        "valid rate        : " + ("n/a" if report.valid_rate is None
                                  else f"{report.valid_rate:.3f}"),
        "first valid budget: " + ("n/a" if first_valid is None
                                  else f"{first_valid:.3f}"),
    ]
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Comparison reports
# ---------------------------------------------------------------------------

@dataclass
class MetricComparison:
    metric: str
    group_x: str
    group_y: str
    p_value: float
    a12: float
    magnitude: str
    direction: str


def comparison_to_dict(groups: dict[str, dict],
                       comparisons: list[MetricComparison],
                       hv: dict[str, list[float]] | None,
                       hv_reference: list[float] | None) -> dict:
    return {
        "schema": COMPARISON_SCHEMA,
        "groups": groups,
        "comparisons": [
            {
                "metric": c.metric,
                "x": c.group_x,
                "y": c.group_y,
                "p": c.p_value,
                "a12": c.a12,
                "magnitude": c.magnitude,
                "direction": c.direction,
            }
            for c in comparisons
        ],
        "hypervolume": hv or {},
        "hv_reference": hv_reference,
    }


def comparison_table(comparisons: list[MetricComparison]) -> str:
    header = f"{'metric':<20} {'pair':<34} {'p':>8} {'A12':>6}  magnitude"
    lines = [header, "-" * len(header)]
    for c in comparisons:
        pair = f"{c.group_x} vs {c.group_y}"
        star = "*" if c.direction == "y" else ""
        lines.append(f"{c.metric:<20} {pair:<34} {c.p_value:8.4f} "
                     f"{c.a12:6.3f}  {c.magnitude}{star}")
    return "\n".join(lines) + "\n"
