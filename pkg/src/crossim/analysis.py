"""Feature maps, failure selection, re-execution validation, and metrics.

Executed tests are bucketed into a sparse grid over (curvature, turn count).
Failing cells contribute a few representative failures, which are then
re-executed several times on backends that the search never used.  A failure
is valid (backend-agnostic) when its re-execution failure rate meets the
threshold on every held-out backend; flaky or backend-specific failures are
filtered out.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import road as road_mod
from . import simbench
from .errors import BackendOverlap
from .road import RoadConstraints, RoadGenotype
from .search import CampaignResult, TestRecord, normalize_genotype
from .simbench import BackendSpec

#: Cell half-width on the curvature axis; centers sit at multiples of twice
#: this value.
CURVATURE_GRANULARITY = 0.02

#: Normalized-genotype distance below which two tests count as duplicates.
DUPLICATE_DISTANCE = 1e-9


def curvature_center(curvature: float) -> float:
    """Center of the curvature bucket containing the value.

    Buckets are half-open intervals [c - 0.02, c + 0.02) around centers at
    multiples of 0.04.
    """
    step = 2 * CURVATURE_GRANULARITY
    k = math.floor(curvature / step + 0.5)
    return round(k * step, 10)


@dataclass
class MapCell:
    curvature: float
    turn_count: int
    tests: list[TestRecord] = field(default_factory=list)
    worst_fitness: float = 0.0
    failing: bool = False


@dataclass
class FeatureMap:
    """Sparse grid over (curvature center, turn count)."""

    cells: dict[tuple[float, int], MapCell] = field(default_factory=dict)

    def add(self, test: TestRecord, failed: bool) -> None:
        key = (curvature_center(test.curvature), test.turn_count)
        cell = self.cells.get(key)
        if cell is None:
            cell = MapCell(curvature=key[0], turn_count=key[1],
                           worst_fitness=test.worst_fitness)
            self.cells[key] = cell
            cell.tests.append(test)
        else:
            cell.tests.append(test)
            cell.worst_fitness = min(cell.worst_fitness, test.worst_fitness)
        cell.failing = cell.failing or failed

    @property
    def failing_cells(self) -> list[MapCell]:
        return [c for k, c in sorted(self.cells.items()) if c.failing]

    @property
    def n_tests(self) -> int:
        return sum(len(c.tests) for c in self.cells.values())


def build_map(tests: list[TestRecord],
              failed_flags: list[bool] | None = None) -> FeatureMap:
    """Bucket tests into the feature map.

    ``failed_flags`` marks which tests count as failures for the map's
    failing-cell rule; by default a test counts when every backend's oracle
    fired (the campaign's own failure notion).
    """
    if failed_flags is None:
        failed_flags = [t.agreed_failure for t in tests]
    fmap = FeatureMap()
    for test, failed in zip(tests, failed_flags):
        fmap.add(test, failed)
    return fmap


def campaign_feature_map(result: CampaignResult) -> FeatureMap:
    return build_map(result.all_tests)


@dataclass(frozen=True)
class SelectedFailure:
    test: TestRecord
    cell: tuple[float, int]


def select_for_validation(fmap: FeatureMap,
                          per_cell: int = 3,
                          rng: np.random.Generator | None = None,
                          failed_flags: dict[int, bool] | None = None
                          ) -> list[SelectedFailure]:
    """Draw up to ``per_cell`` failing, duplicate-free tests per failing cell.

    Duplicates are tests whose normalized genotype distance is below
    DUPLICATE_DISTANCE; the earliest-evaluated copy is kept.  Selection is
    uniform without replacement, driven by ``rng``.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    selected: list[SelectedFailure] = []
    for key, cell in sorted(fmap.cells.items()):
        if not cell.failing:
            continue
        if failed_flags is None:
            failing = [t for t in cell.tests if t.agreed_failure]
        else:
            failing = [t for t in cell.tests if failed_flags.get(t.index, False)]
        unique: list[TestRecord] = []
        vectors: list[np.ndarray] = []
        for t in sorted(failing, key=lambda t: t.index):
            v = normalize_genotype(t.genotype)
            if any(float(np.linalg.norm(v - u)) < DUPLICATE_DISTANCE
                   for u in vectors):
                continue
            unique.append(t)
            vectors.append(v)
        if len(unique) <= per_cell:
            chosen = unique
        else:
            idx = rng.choice(len(unique), size=per_cell, replace=False)
            chosen = [unique[i] for i in sorted(idx)]
        selected.extend(SelectedFailure(test=t, cell=key) for t in chosen)
    return selected


# ---------------------------------------------------------------------------
# Re-execution validation
# ---------------------------------------------------------------------------

#: Tag mixed into validation run seeds so they never collide with search
#: rollout seeds.
VALIDATION_SEED_TAG = 9001


@dataclass
class FailureValidation:
    test_index: int
    cell: tuple[float, int]
    verdicts: dict[str, list[bool]]          # backend id -> per-run verdicts
    failure_rates: dict[str, float]
    valid: bool


@dataclass
class ValidationReport:
    held_out_ids: tuple[str, ...]
    n_runs: int
    threshold: float
    failures: list[FailureValidation]
    n_valid: int
    selected_count: int
    valid_rate: float | None                 # None when nothing was selected

    @property
    def valid_rate_fraction(self) -> Fraction | None:
        if self.selected_count == 0:
            return None
        return Fraction(self.n_valid, self.selected_count)


def validate(failures: list[SelectedFailure],
             held_out_backends: list[BackendSpec],
             search_backend_ids: tuple[str, ...],
             n_runs: int = 5,
             threshold: float = 1.0,
             seed: int = 0,
             constraints: RoadConstraints = RoadConstraints(),
             oracle_threshold: float = simbench.DEFAULT_ORACLE_THRESHOLD,
             xte_cutoff: float = simbench.DEFAULT_XTE_CUTOFF) -> ValidationReport:
    """Re-execute selected failures on held-out backends.

    Each failure runs ``n_runs`` times per backend with distinct seeds; a
    failure is valid when its failure rate meets ``threshold`` on every
    held-out backend.  Raises BackendOverlap when a held-out backend took
    part in the search.
    """
    if n_runs < 1:
        raise ValueError("n_runs must be >= 1")
    overlap = [b.id for b in held_out_backends if b.id in search_backend_ids]
    if overlap:
        raise BackendOverlap(
            f"backends {overlap} were used during the search")

    results: list[FailureValidation] = []
    n_valid = 0
    for failure in failures:
        path = simbench.prepare(failure.test.genotype, constraints)
        verdicts: dict[str, list[bool]] = {}
        rates: dict[str, float] = {}
        valid = True
        for pos, backend in enumerate(held_out_backends):
            runs = []
            for r in range(n_runs):
                trace = simbench.simulate_path(
                    path, backend,
                    run_seed=[seed & 0x7FFFFFFF, VALIDATION_SEED_TAG,
                              failure.test.index, pos, r],
                    cutoff=xte_cutoff)
                runs.append(simbench.evaluate(trace, oracle_threshold,
                                              xte_cutoff).failed)
            verdicts[backend.id] = runs
            rate = sum(runs) / n_runs
            rates[backend.id] = rate
            if rate < threshold:
                valid = False
        results.append(FailureValidation(
            test_index=failure.test.index, cell=failure.cell,
            verdicts=verdicts, failure_rates=rates, valid=valid))
        n_valid += valid

    selected = len(failures)
    return ValidationReport(
        held_out_ids=tuple(b.id for b in held_out_backends),
        n_runs=n_runs,
        threshold=threshold,
        failures=results,
        n_valid=n_valid,
        selected_count=selected,
        valid_rate=(n_valid / selected) if selected else None,
    )


def held_out_for(search_backend_ids: tuple[str, ...]) -> list[BackendSpec]:
    """Built-in backends not used by the search (the validation set)."""
    return [b for b in simbench.builtin_ensemble()
            if b.id not in search_backend_ids]


def first_valid_budget(campaign: CampaignResult,
                       report: ValidationReport,
                       index_override: dict[int, int] | None = None
                       ) -> float | None:
    """Fraction of the budget spent when the first valid failure appeared.

    ``index_override`` remaps test indices to global evaluation counts (used
    for the two-run migration baseline); returns None without valid failures.
    """
    indices = []
    for f in report.failures:
        if f.valid:
            idx = f.test_index
            if index_override is not None:
                idx = index_override.get(idx, idx)
            indices.append(idx)
    if not indices:
        return None
    return min(indices) / campaign.budget


# ---------------------------------------------------------------------------
# Exports
# ---------------------------------------------------------------------------

def feature_map_csv(fmap: FeatureMap) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["cell_curvature", "turn_count", "n_tests",
                     "worst_fitness", "failing"])
    for (curv, turns), cell in sorted(fmap.cells.items()):
        writer.writerow([repr(curv), turns, len(cell.tests),
                         repr(cell.worst_fitness), int(cell.failing)])
    return buf.getvalue()


def _fitness_color(fitness: float, worst: float = -3.0) -> str:
    """Green at 0 to red at the worst fitness."""
    t = min(max(fitness / worst, 0.0), 1.0)
    r = int(round(220 * t + 34 * (1 - t)))
    g = int(round(34 * t + 170 * (1 - t)))
    return f"#{r:02x}{g:02x}22"


def feature_map_svg(fmap: FeatureMap, cell_px: int = 34,
                    worst: float = -3.0) -> str:
    """Standalone SVG heat map; white cells are uncovered."""
    if fmap.cells:
        curvs = sorted({k[0] for k in fmap.cells})
        turns = sorted({k[1] for k in fmap.cells})
    else:
        curvs, turns = [0.0], [0]
    step = 2 * CURVATURE_GRANULARITY
    cmin, cmax = curvs[0], curvs[-1]
    tmin, tmax = turns[0], turns[-1]
    ncols = int(round((cmax - cmin) / step)) + 1
    nrows = tmax - tmin + 1
    margin_left, margin_top, margin_bottom = 64, 18, 40
    bar_w, bar_gap = 18, 26
    width = margin_left + ncols * cell_px + bar_gap + bar_w + 54
    height = margin_top + nrows * cell_px + margin_bottom

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" font-family="sans-serif" font-size="10">',
        '<defs><linearGradient id="fit" x1="0" y1="1" x2="0" y2="0">'
        f'<stop offset="0" stop-color="{_fitness_color(0.0, worst)}"/>'
        f'<stop offset="1" stop-color="{_fitness_color(worst, worst)}"/>'
        "</linearGradient></defs>",
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    for col in range(ncols):
        curv = round(cmin + col * step, 10)
        for row in range(nrows):
            turn = tmax - row
            x = margin_left + col * cell_px
            y = margin_top + row * cell_px
            cell = fmap.cells.get((curv, turn))
            if cell is None:
                fill = "white"
            else:
                fill = _fitness_color(cell.worst_fitness, worst)
            parts.append(
                f'<rect x="{x}" y="{y}" width="{cell_px}" height="{cell_px}" '
                f'fill="{fill}" stroke="#999" stroke-width="0.5"/>')
            if cell is not None and cell.failing:
                parts.append(
                    f'<text x="{x + cell_px / 2:.1f}" y="{y + cell_px / 2 + 3:.1f}" '
                    'text-anchor="middle" font-size="9">x</text>')
    for col in range(ncols):
        curv = round(cmin + col * step, 10)
        x = margin_left + col * cell_px + cell_px / 2
        y = margin_top + nrows * cell_px + 14
        parts.append(f'<text x="{x:.1f}" y="{y}" text-anchor="middle">{curv:g}</text>')
    for row in range(nrows):
        turn = tmax - row
        x = margin_left - 8
        y = margin_top + row * cell_px + cell_px / 2 + 3
        parts.append(f'<text x="{x}" y="{y:.1f}" text-anchor="end">{turn}</text>')
    parts.append(f'<text x="{margin_left + ncols * cell_px / 2:.1f}" '
                 f'y="{height - 8}" text-anchor="middle">curvature</text>')
    parts.append(f'<text x="12" y="{margin_top + nrows * cell_px / 2:.1f}" '
                 f'transform="rotate(-90 12 {margin_top + nrows * cell_px / 2:.1f})" '
                 'text-anchor="middle">turns</text>')

    bx = margin_left + ncols * cell_px + bar_gap
    bh = nrows * cell_px
    parts.append(f'<rect x="{bx}" y="{margin_top}" width="{bar_w}" height="{bh}" '
                 'fill="url(#fit)" stroke="#999" stroke-width="0.5"/>')
    parts.append(f'<text x="{bx + bar_w + 4}" y="{margin_top + 8}">{worst:g}</text>')
    parts.append(f'<text x="{bx + bar_w + 4}" y="{margin_top + bh}">0</text>')
    parts.append("</svg>")
    return "\n".join(parts)
