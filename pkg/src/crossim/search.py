"""Multi-objective road search across a simulator ensemble.

Each candidate road is rolled on every configured backend; the resulting
fitness vector holds the per-backend fitness values, the mean pairwise
spread between them (small spread = the backends agree), and the distance
to an archive of previously explored roads (large distance = novel).  A
dominance-based survival step evolves the population, a repopulation step
injects fresh random roads, and at the end of the budget the tests on which
every backend's oracle fired are reported as agreed failures.

Variants: single-backend search drops the spread objective; the
disagreement-seeking mode maximizes the spread instead of minimizing it;
the filtered mode consults a disagreement predictor before simulating.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from . import road as road_mod
from . import simbench
from .errors import BudgetTooSmall, ModelMissing
from .road import RoadConstraints, RoadGenotype
from .simbench import BackendSpec

MODE_MULTISIM = "multisim"
MODE_SSIM = "ssim"
MODE_DSS = "dss"
MODE_DISAGREE = "multisim-disagree"
MODE_FILTERED = "multisim-filtered"

CAMPAIGN_SCHEMA = "campaign/v1"


# ---------------------------------------------------------------------------
# Fitness vectors and the novelty archive
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FitnessVector:
    """Objectives of one evaluated test.

    ``per_backend`` holds one fitness value per simulator (negated worst
    deviation, minimized).  ``spread`` is the mean pairwise absolute
    difference of those values (minimized to favor backend agreement).
    ``novelty`` is the distance to the archive (maximized; +inf when the
    archive was empty).
    """

    per_backend: tuple[float, ...]
    spread: float
    novelty: float

    def objectives(self, mode: str = MODE_MULTISIM) -> tuple[float, ...]:
        """The minimized objective tuple for dominance comparisons."""
        if mode == MODE_SSIM:
            return (*self.per_backend, -self.novelty)
        if mode == MODE_DISAGREE:
            return (*self.per_backend, -self.spread, -self.novelty)
        return (*self.per_backend, self.spread, -self.novelty)


def mean_pairwise_spread(values: tuple[float, ...] | list[float]) -> float:
    """Mean |v_k - v_l| over all unordered pairs; 0.0 for a single value."""
    j = len(values)
    if j < 2:
        return 0.0
    total = 0.0
    for k in range(j - 1):
        for l in range(k + 1, j):
            total += abs(values[k] - values[l])
    return total / (j * (j - 1) / 2)


def normalize_genotype(genotype: RoadGenotype) -> np.ndarray:
    """Min-max normalize the flat genotype vector into [0, 1] coordinates."""
    angles = (np.asarray(genotype.angles) - road_mod.ANGLE_MIN) / (
        road_mod.ANGLE_MAX - road_mod.ANGLE_MIN)
    lengths = (np.asarray(genotype.lengths) - road_mod.LENGTH_MIN) / (
        road_mod.LENGTH_MAX - road_mod.LENGTH_MIN)
    return np.concatenate([angles, lengths])


class Archive:
    """Diversity store admitting only tests far from all previous entries."""

    def __init__(self, delta: float):
        self.delta = delta
        self._vectors: list[np.ndarray] = []
        self.entries: list[RoadGenotype] = []

    def __len__(self) -> int:
        return len(self.entries)

    def distance_to(self, genotype: RoadGenotype) -> float:
        """Min Euclidean distance between normalized inputs; +inf if empty."""
        if not self._vectors:
            return math.inf
        v = normalize_genotype(genotype)
        stack = np.stack(self._vectors)
        return float(np.sqrt(((stack - v) ** 2).sum(axis=1)).min())

    def admit(self, genotype: RoadGenotype) -> bool:
        """Add the test when its distance to the closest entry exceeds delta."""
        if self.distance_to(genotype) > self.delta:
            self._vectors.append(normalize_genotype(genotype))
            self.entries.append(genotype)
            return True
        return False


def distance_to_archive(genotype: RoadGenotype, archive: Archive) -> float:
    return archive.distance_to(genotype)


# ---------------------------------------------------------------------------
# Dominance machinery (minimization throughout)
# ---------------------------------------------------------------------------

def dominates(u: tuple[float, ...], v: tuple[float, ...]) -> bool:
    """u dominates v: no objective worse, at least one strictly better."""
    better = False
    for a, b in zip(u, v):
        if a > b:
            return False
        if a < b:
            better = True
    return better


def non_dominated_sort(objectives: list[tuple[float, ...]]) -> list[int]:
    """Front index (0 = non-dominated) per individual, NSGA-II style."""
    n = len(objectives)
    dominated_by: list[list[int]] = [[] for _ in range(n)]
    counts = [0] * n
    for i in range(n):
        for j in range(i + 1, n):
            if dominates(objectives[i], objectives[j]):
                dominated_by[i].append(j)
                counts[j] += 1
            elif dominates(objectives[j], objectives[i]):
                dominated_by[j].append(i)
                counts[i] += 1
    ranks = [0] * n
    current = [i for i in range(n) if counts[i] == 0]
    front = 0
    while current:
        nxt = []
        for i in current:
            ranks[i] = front
            for j in dominated_by[i]:
                counts[j] -= 1
                if counts[j] == 0:
                    nxt.append(j)
        current = nxt
        front += 1
    return ranks


def crowding_distances(objectives: list[tuple[float, ...]]) -> list[float]:
    """Crowding distance within one front; boundary points get +inf."""
    n = len(objectives)
    if n <= 2:
        return [math.inf] * n
    m = len(objectives[0])
    dist = [0.0] * n
    for k in range(m):
        order = sorted(range(n), key=lambda i: objectives[i][k])
        lo = objectives[order[0]][k]
        hi = objectives[order[-1]][k]
        dist[order[0]] = math.inf
        dist[order[-1]] = math.inf
        span = hi - lo
        if span == 0 or not math.isfinite(span):
            continue
        for pos in range(1, n - 1):
            i = order[pos]
            if dist[i] != math.inf:
                dist[i] += (objectives[order[pos + 1]][k]
                            - objectives[order[pos - 1]][k]) / span
    return dist


@dataclass
class Individual:
    genotype: RoadGenotype
    fitness: FitnessVector | None = None
    rank: int = -1
    crowding: float = 0.0
    eval_index: int = -1        # 1-based order of evaluation, -1 = unevaluated

    @property
    def evaluated(self) -> bool:
        return self.fitness is not None


def rank_population(pop: list[Individual], mode: str) -> None:
    """Assign fronts and crowding distances in place."""
    objs = [ind.fitness.objectives(mode) for ind in pop]
    ranks = non_dominated_sort(objs)
    for ind, r in zip(pop, ranks):
        ind.rank = r
    for front in range(max(ranks) + 1):
        idx = [i for i, r in enumerate(ranks) if r == front]
        dists = crowding_distances([objs[i] for i in idx])
        for i, dv in zip(idx, dists):
            pop[i].crowding = dv


def survive(pop: list[Individual], target_size: int, mode: str) -> list[Individual]:
    """Dominance-based survival: whole fronts first, the splitting front
    truncated by descending crowding distance."""
    if any(not ind.evaluated for ind in pop):
        raise ValueError("survival requires a fully evaluated population")
    rank_population(pop, mode)
    by_front: dict[int, list[Individual]] = {}
    for ind in pop:
        by_front.setdefault(ind.rank, []).append(ind)
    out: list[Individual] = []
    for front in sorted(by_front):
        members = by_front[front]
        if len(out) + len(members) <= target_size:
            out.extend(members)
        else:
            members = sorted(members, key=lambda ind: -ind.crowding)
            out.extend(members[:target_size - len(out)])
            break
    return out


def repopulate(pop: list[Individual], rng: np.random.Generator, ratio: float,
               constraints: RoadConstraints,
               sampler: Callable[[np.random.Generator], RoadGenotype] | None = None
               ) -> list[Individual]:
    """Replace the worst-ranked dominated individuals with random roads.

    Replaces ceil(ratio * number of dominated individuals), drawn unevaluated
    from ``sampler``; non-dominated individuals are never touched.
    """
    if ratio <= 0.0:
        return pop
    dominated = [ind for ind in pop if ind.rank > 0]
    if not dominated:
        return pop
    if sampler is None:
        sampler = lambda r: road_mod.sample_random(r, constraints)
    n_replace = math.ceil(ratio * len(dominated))
    worst = sorted(dominated, key=lambda ind: (-ind.rank, ind.crowding))[:n_replace]
    victims = set(id(ind) for ind in worst)
    out = []
    for ind in pop:
        if id(ind) in victims:
            out.append(Individual(sampler(rng)))
        else:
            out.append(ind)
    return out


def binary_tournament(pop: list[Individual], rng: np.random.Generator) -> Individual:
    """Pick the better of two random individuals by (rank, crowding)."""
    i, j = rng.integers(0, len(pop), 2)
    a, b = pop[int(i)], pop[int(j)]
    if a.rank != b.rank:
        return a if a.rank < b.rank else b
    if a.crowding != b.crowding:
        return a if a.crowding > b.crowding else b
    return a


# ---------------------------------------------------------------------------
# Campaign configuration and result records
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SearchSettings:
    """Knobs of one search run (a subset of the full campaign config)."""

    mode: str = MODE_MULTISIM
    backends: tuple[BackendSpec, ...] = ()
    budget: int = 400
    population: int = 20
    mutation_rate: float = 0.1
    crossover_rate: float = 0.6
    archive_delta: float = 4.5
    repopulation_ratio: float = 0.2
    oracle_threshold: float = simbench.DEFAULT_ORACLE_THRESHOLD
    xte_cutoff: float = simbench.DEFAULT_XTE_CUTOFF
    seed: int = 0
    constraints: RoadConstraints = RoadConstraints()
    mutation_extent: tuple[float, float] = road_mod.MUTATION_EXTENT
    surrogate_model: object | None = None     # predict(genotype) -> probability
    surrogate_tau: float = 0.7
    filter_attempts: int = 50


@dataclass
class TestRecord:
    """One evaluated test with everything later stages need."""

    index: int                      # 1-based evaluation index
    genotype: RoadGenotype
    fitness: FitnessVector
    failed_per_backend: tuple[bool, ...]
    curvature: float
    turn_count: int

    @property
    def agreed_failure(self) -> bool:
        return all(self.failed_per_backend)

    @property
    def worst_fitness(self) -> float:
        return min(self.fitness.per_backend)


@dataclass
class CampaignResult:
    mode: str
    backend_ids: tuple[str, ...]
    seed: int
    budget: int
    all_tests: list[TestRecord] = field(default_factory=list)
    discards: int = 0               # candidates dropped by the surrogate filter
    wall_time_s: float = 0.0

    @property
    def agreed_failures(self) -> list[TestRecord]:
        return [t for t in self.all_tests if t.agreed_failure]

    @property
    def evaluations(self) -> int:
        return len(self.all_tests)


def run_seed_for(seed: int, eval_index: int, backend_pos: int) -> list[int]:
    """Deterministic per-rollout seed material."""
    return [seed & 0x7FFFFFFF, eval_index, backend_pos]


# ---------------------------------------------------------------------------
# Evaluation per the joint-ensemble scheme
# ---------------------------------------------------------------------------

def evaluate_batch(batch: list[Individual],
                   settings: SearchSettings,
                   archive: Archive,
                   result: CampaignResult) -> None:
    """Evaluate a batch: simulate on every backend, compute the spread and
    novelty objectives, assign the vector, then try archive admission."""
    for ind in batch:
        index = result.evaluations + 1
        path = simbench.prepare(ind.genotype, settings.constraints)
        values = []
        failed = []
        for pos, backend in enumerate(settings.backends):
            trace = simbench.simulate_path(
                path, backend, run_seed_for(settings.seed, index, pos),
                cutoff=settings.xte_cutoff)
            ev = simbench.evaluate(trace, settings.oracle_threshold,
                                   settings.xte_cutoff)
            values.append(ev.fitness)
            failed.append(ev.failed)
        spread = mean_pairwise_spread(values)
        novelty = archive.distance_to(ind.genotype)
        ind.fitness = FitnessVector(tuple(values), spread, novelty)
        ind.eval_index = index
        archive.admit(ind.genotype)

        polyline = road_mod.build_road(ind.genotype, settings.constraints)
        feats = road_mod.features(polyline)
        result.all_tests.append(TestRecord(
            index=index,
            genotype=ind.genotype,
            fitness=ind.fitness,
            failed_per_backend=tuple(failed),
            curvature=feats.curvature,
            turn_count=feats.turn_count,
        ))


def evaluate_multisim(batch: list[RoadGenotype],
                      backends: list[BackendSpec],
                      archive: Archive,
                      settings: SearchSettings | None = None) -> list[FitnessVector]:
    """Joint evaluation of raw genotypes; convenience over evaluate_batch."""
    if settings is None:
        settings = SearchSettings(backends=tuple(backends))
    else:
        settings = replace(settings, backends=tuple(backends))
    result = CampaignResult(mode=settings.mode,
                            backend_ids=tuple(b.id for b in backends),
                            seed=settings.seed, budget=len(batch))
    individuals = [Individual(g) for g in batch]
    evaluate_batch(individuals, settings, archive, result)
    return [ind.fitness for ind in individuals]


# ---------------------------------------------------------------------------
# The genetic loop
# ---------------------------------------------------------------------------

def _filtered_random(rng: np.random.Generator, settings: SearchSettings,
                     result: CampaignResult) -> RoadGenotype:
    genotype = road_mod.sample_random(rng, settings.constraints)
    if settings.mode != MODE_FILTERED:
        return genotype
    for _ in range(settings.filter_attempts):
        if settings.surrogate_model.predict(genotype) > settings.surrogate_tau:
            result.discards += 1
            genotype = road_mod.sample_random(rng, settings.constraints)
        else:
            return genotype
    return genotype        # give up filtering; progress beats purity


def _apply_filter(genotype: RoadGenotype, rng: np.random.Generator,
                  settings: SearchSettings, result: CampaignResult) -> RoadGenotype:
    """Discard candidates predicted to cause backend disagreement."""
    if settings.mode != MODE_FILTERED:
        return genotype
    if settings.surrogate_model.predict(genotype) <= settings.surrogate_tau:
        return genotype
    result.discards += 1
    return _filtered_random(rng, settings, result)


def _make_offspring(pop: list[Individual], rng: np.random.Generator,
                    settings: SearchSettings,
                    result: CampaignResult) -> list[Individual]:
    offspring: list[Individual] = []
    while len(offspring) < settings.population:
        p1 = binary_tournament(pop, rng)
        p2 = binary_tournament(pop, rng)
        if rng.random() < settings.crossover_rate:
            c1, c2 = road_mod.crossover(p1.genotype, p2.genotype, rng,
                                        settings.constraints)
        else:
            c1, c2 = p1.genotype, p2.genotype
        for child in (c1, c2):
            mutant = road_mod.mutate(child, rng, settings.mutation_rate,
                                     settings.mutation_extent,
                                     settings.constraints)
            mutant = _apply_filter(mutant, rng, settings, result)
            offspring.append(Individual(mutant))
            if len(offspring) >= settings.population:
                break
    return offspring


def run_search(settings: SearchSettings) -> CampaignResult:
    """Run one genetic search to budget exhaustion.

    Raises BudgetTooSmall when the budget cannot cover the initial
    population, and ModelMissing when the filtered mode lacks a model.
    """
    if settings.budget < settings.population:
        raise BudgetTooSmall(
            f"budget {settings.budget} < population {settings.population}")
    if settings.mode == MODE_FILTERED and settings.surrogate_model is None:
        raise ModelMissing("filtered mode requires a trained surrogate model")
    if not settings.backends:
        raise ValueError("at least one backend is required")

    t0 = time.perf_counter()
    rng = np.random.default_rng(settings.seed)
    archive = Archive(settings.archive_delta)
    result = CampaignResult(mode=settings.mode,
                            backend_ids=tuple(b.id for b in settings.backends),
                            seed=settings.seed,
                            budget=settings.budget)

    pop = [Individual(_filtered_random(rng, settings, result))
           for _ in range(settings.population)]
    evaluate_batch(pop, settings, archive, result)

    while result.evaluations < settings.budget:
        fresh = [ind for ind in pop if not ind.evaluated]
        if fresh:
            room = settings.budget - result.evaluations
            evaluate_batch(fresh[:room], settings, archive, result)
            pop = [ind for ind in pop if ind.evaluated]
            if result.evaluations >= settings.budget:
                break

        rank_population(pop, settings.mode)
        offspring = _make_offspring(pop, rng, settings, result)
        room = settings.budget - result.evaluations
        offspring = offspring[:room]
        evaluate_batch(offspring, settings, archive, result)

        pop = survive(pop + offspring, settings.population, settings.mode)
        if result.evaluations >= settings.budget:
            break
        pop = repopulate(pop, rng, settings.repopulation_ratio,
                         settings.constraints,
                         sampler=lambda r: _filtered_random(r, settings, result))

    result.wall_time_s = time.perf_counter() - t0
    return result


def run_campaign(settings: SearchSettings) -> CampaignResult:
    """Ensemble campaign entry point (two or more backends)."""
    if settings.mode in (MODE_MULTISIM, MODE_DISAGREE, MODE_FILTERED) \
            and len(settings.backends) < 2:
        raise ValueError(f"mode {settings.mode} requires >= 2 backends")
    return run_search(settings)


# ---------------------------------------------------------------------------
# Pareto front helpers for reporting
# ---------------------------------------------------------------------------

def front_points(result: CampaignResult) -> list[tuple[float, float]]:
    """Non-dominated 2-D sub-front of all recorded tests.

    Ensemble campaigns use the first two per-backend values; single-backend
    campaigns use (fitness, -novelty).  Non-finite points are dropped.
    """
    pts = []
    for t in result.all_tests:
        if len(t.fitness.per_backend) >= 2:
            p = (t.fitness.per_backend[0], t.fitness.per_backend[1])
        else:
            p = (t.fitness.per_backend[0], -t.fitness.novelty)
        if all(math.isfinite(v) for v in p):
            pts.append(p)
    ranks = non_dominated_sort(pts)
    return sorted(p for p, r in zip(pts, ranks) if r == 0)
