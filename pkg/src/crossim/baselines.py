"""Baseline strategies: single-backend search and dual-search migration.

The single-backend baseline (ssim) is the ensemble search with one backend
and a two-objective fitness vector.  The dual-search baseline (dss) runs two
independent single-backend searches, re-executes each run's failing tests on
the opposite backend, and keeps only the tests that fail on both; its
efficiency accounting assumes the two searches and the two migration passes
execute sequentially.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import simbench
from .errors import UnknownOrigin
from .search import (MODE_SSIM, CampaignResult, SearchSettings, TestRecord,
                     run_search)

#: Tag mixed into migration rollout seeds.
MIGRATION_SEED_TAG = 4242


@dataclass
class MigrationOutcome:
    origin_run: int            # 1 or 2
    origin_index: int          # evaluation index within the origin run
    migration_index: int       # 1-based position in the origin's migration pass
    backend_id: str            # backend the test migrated to
    fitness: float
    failed: bool


@dataclass
class DssResult:
    run1: CampaignResult
    run2: CampaignResult
    migrated: list[MigrationOutcome]
    critical: list[TestRecord]
    budget: int
    seed: int

    @property
    def evaluations(self) -> int:
        return self.run1.evaluations + self.run2.evaluations + len(self.migrated)


def derive_seed(seed: int, tag: int) -> int:
    """Deterministic child seed for sub-runs."""
    return int(np.random.SeedSequence([seed & 0x7FFFFFFF, tag]).generate_state(1)[0])


def run_ssim(settings: SearchSettings) -> CampaignResult:
    """Single-backend search: fitness vector (backend fitness, novelty)."""
    if len(settings.backends) != 1:
        raise ValueError("ssim runs on exactly one backend")
    return run_search(replace(settings, mode=MODE_SSIM))


def run_dss(settings: SearchSettings) -> DssResult:
    """Two independent single-backend searches plus cross-migration.

    Each search receives a quarter of the total budget; the migration passes
    consume the remainder (one re-execution per failing test, run-1 failures
    first).  A test is critical when it fails both in its origin run and on
    the opposite backend.
    """
    if len(settings.backends) != 2:
        raise ValueError("dss runs on exactly two backends")
    if settings.budget < 4 * settings.population:
        raise ValueError("dss needs a budget of at least 4 population evaluations")

    quarter = settings.budget // 4
    b1, b2 = settings.backends
    run1 = run_search(replace(settings, mode=MODE_SSIM, backends=(b1,),
                              budget=quarter, seed=derive_seed(settings.seed, 1)))
    run2 = run_search(replace(settings, mode=MODE_SSIM, backends=(b2,),
                              budget=quarter, seed=derive_seed(settings.seed, 2)))

    remaining = settings.budget - run1.evaluations - run2.evaluations
    migrated: list[MigrationOutcome] = []
    critical: list[TestRecord] = []
    for origin, result, target in ((1, run1, b2), (2, run2, b1)):
        migration_index = 0
        for test in result.all_tests:
            if not test.failed_per_backend[0]:
                continue
            if len(migrated) >= remaining:
                break
            migration_index += 1
            trace = simbench.simulate_path(
                simbench.prepare(test.genotype, settings.constraints),
                target,
                run_seed=[settings.seed & 0x7FFFFFFF, MIGRATION_SEED_TAG,
                          origin, test.index],
                cutoff=settings.xte_cutoff)
            ev = simbench.evaluate(trace, settings.oracle_threshold,
                                   settings.xte_cutoff)
            migrated.append(MigrationOutcome(
                origin_run=origin, origin_index=test.index,
                migration_index=migration_index, backend_id=target.id,
                fitness=ev.fitness, failed=ev.failed))
            if ev.failed:
                critical.append(test)

    return DssResult(run1=run1, run2=run2, migrated=migrated,
                     critical=critical, budget=settings.budget,
                     seed=settings.seed)


def dss_evaluation_index(origin_run: int, run1_total: int, run2_total: int,
                         local_index: int) -> int:
    """Global evaluation count at which a migrated test finished.

    Sequential accounting: run 1 executes fully (A evaluations), then run 2
    (B), then run 1's migration pass, then run 2's.  A run-1 test whose
    migration is the a-th returns A + B + a; a run-2 test returns
    A + B + A + b.
    """
    if origin_run == 1:
        return run1_total + run2_total + local_index
    if origin_run == 2:
        return run1_total + run2_total + run1_total + local_index
    raise UnknownOrigin(f"origin run must be 1 or 2, got {origin_run}")


def dss_validation_view(dss: DssResult
                        ) -> tuple[list[TestRecord], dict[int, bool], dict[int, int]]:
    """Combined per-test view for feature-map validation of a dss result.

    Both runs number their tests from 1, so run-2 tests are re-indexed by
    +run1_total.  Returns (all tests, critical flag by combined index,
    global evaluation count by combined index for migrated tests).
    """
    a, b = dss.run1.evaluations, dss.run2.evaluations
    # identity-based membership; a record object belongs to exactly one run
    run1_ids = {id(t) for t in dss.run1.all_tests}
    critical_keys = set()
    for t in dss.critical:
        origin = 1 if id(t) in run1_ids else 2
        critical_keys.add((origin, t.index))

    tests: list[TestRecord] = []
    critical_flags: dict[int, bool] = {}
    for origin, run in ((1, dss.run1), (2, dss.run2)):
        offset = 0 if origin == 1 else a
        for t in run.all_tests:
            combined = replace(t, index=t.index + offset)
            tests.append(combined)
            critical_flags[combined.index] = (origin, t.index) in critical_keys

    index_map: dict[int, int] = {}
    for m in dss.migrated:
        offset = 0 if m.origin_run == 1 else a
        index_map[m.origin_index + offset] = dss_evaluation_index(
            m.origin_run, a, b, m.migration_index)
    return tests, critical_flags, index_map
