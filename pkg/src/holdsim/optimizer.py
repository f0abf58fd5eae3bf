"""Multi-objective search over reserve fractions.

Step one traces the usage/experience Pareto frontier under near-optimal
fulfillment with a non-dominated-sorting evolutionary loop (the
proposer is pluggable; a model-based acquisition can replace
``EvolutionaryProposer`` without touching the evaluation loop). Step
two re-evaluates each frontier point under the static tiered policy it
would be deployed as.

Every candidate is evaluated with the same master seed as the frozen
baselines, so all policies in a study share arrival sample paths
(common random numbers).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fulfillment import derive_tiers, usage_rewards
from .model import Fulfillment, PolicySpec, Scenario
from .objectives import evaluate
from .simulator import Baselines, SimConfig, capture_window_tables, run


@dataclass(frozen=True)
class ArchiveEntry:
    beta: tuple[float, ...]
    f: float
    g: float
    master_seed: int
    replications: int
    hv_at_insertion: float = 0.0


@dataclass
class ParetoArchive:
    """Mutually non-dominated (f, g) points; reference point (0, 0)."""

    entries: list[ArchiveEntry] = field(default_factory=list)

    def dominates(self, a: ArchiveEntry, b: ArchiveEntry) -> bool:
        return a.f >= b.f and a.g >= b.g and (a.f > b.f or a.g > b.g)

    def insert(self, entry: ArchiveEntry) -> bool:
        for kept in self.entries:
            if self.dominates(kept, entry) or (kept.f == entry.f and kept.g == entry.g):
                return False
        self.entries = [k for k in self.entries if not self.dominates(entry, k)]
        self.entries.append(entry)
        return True

    def points(self) -> np.ndarray:
        return np.array([(e.f, e.g) for e in self.entries])


def hypervolume(archive: ParetoArchive) -> float:
    if not archive.entries:
        return 0.0
    return hypervolume_points(archive.points())


def hypervolume_points(points: np.ndarray) -> float:
    """2-D dominated area against the (0, 0) reference point."""
    pts = np.asarray(points, dtype=float)
    if pts.size == 0:
        return 0.0
    keep = []
    for k in range(len(pts)):
        f, g = pts[k]
        dominated = any(
            (pts[o, 0] >= f and pts[o, 1] >= g and (pts[o] != pts[k]).any())
            for o in range(len(pts))
        )
        if not dominated:
            keep.append((f, g))
    keep = sorted(set(keep), key=lambda t: (-t[0], t[1]))
    total = 0.0
    g_prev = 0.0
    for f, g in keep:
        if g > g_prev:
            total += f * (g - g_prev)
            g_prev = g
    return total


@dataclass(frozen=True)
class SearchConfig:
    batch_size: int = 16
    iterations: int = 100
    population_cap: int = 48
    crossover_rate: float = 0.9
    mutation_scale: float = 0.1
    seed: int = 0
    eval_replications: int = 10

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")


@dataclass
class OptimizeResult:
    archive: ParetoArchive
    evaluations: list[tuple[tuple[float, ...], float, float]]  # (beta, f, g)


def _non_dominated_rank(points: list[tuple[float, float]]) -> list[int]:
    n = len(points)
    rank = [0] * n
    remaining = list(range(n))
    level = 0
    while remaining:
        front = []
        for i in remaining:
            fi, gi = points[i]
            if not any(
                points[k][0] >= fi and points[k][1] >= gi
                and (points[k][0] > fi or points[k][1] > gi)
                for k in remaining if k != i
            ):
                front.append(i)
        if not front:  # all mutually identical: one front
            front = list(remaining)
        for i in front:
            rank[i] = level
        remaining = [i for i in remaining if i not in front]
        level += 1
    return rank


def _crowding(points: list[tuple[float, float]], members: list[int]) -> dict[int, float]:
    dist = {i: 0.0 for i in members}
    if len(members) <= 2:
        return {i: float("inf") for i in members}
    for dim in (0, 1):
        ordered = sorted(members, key=lambda i: (points[i][dim], i))
        span = points[ordered[-1]][dim] - points[ordered[0]][dim]
        dist[ordered[0]] = dist[ordered[-1]] = float("inf")
        if span <= 0:
            continue
        for k in range(1, len(ordered) - 1):
            gap = points[ordered[k + 1]][dim] - points[ordered[k - 1]][dim]
            dist[ordered[k]] += gap / span
    return dist


class EvolutionaryProposer:
    """Blend-crossover / bounded-mutation candidate proposer with
    tournament selection on (non-dominated rank, crowding)."""

    def __init__(self, search: SearchConfig, branch_count: int):
        self.search = search
        self.B = branch_count
        self.rng = np.random.default_rng(search.seed)

    def initial_batch(self) -> list[np.ndarray]:
        k = self.search.batch_size
        if k == 1:
            return [np.zeros(self.B)]
        return [np.full(self.B, i / (k - 1)) for i in range(k)]

    def propose(self, population: list[tuple[np.ndarray, float, float]]) -> list[np.ndarray]:
        points = [(f, g) for _, f, g in population]
        rank = _non_dominated_rank(points)
        crowd: dict[int, float] = {}
        for level in set(rank):
            members = [i for i, r in enumerate(rank) if r == level]
            crowd.update(_crowding(points, members))

        def better(i: int, k: int) -> int:
            if rank[i] != rank[k]:
                return i if rank[i] < rank[k] else k
            if crowd[i] != crowd[k]:
                return i if crowd[i] > crowd[k] else k
            return min(i, k)

        out = []
        n = len(population)
        for _ in range(self.search.batch_size):
            i = better(*self.rng.integers(n, size=2))
            k = better(*self.rng.integers(n, size=2))
            p1 = population[i][0]
            p2 = population[k][0]
            child = p1.copy()
            cross = self.rng.random(self.B) < self.search.crossover_rate
            blend = self.rng.random(self.B)
            child[cross] = (blend * p1 + (1.0 - blend) * p2)[cross]
            mutate = self.rng.random(self.B) < 0.25
            child[mutate] += self.rng.normal(0.0, self.search.mutation_scale,
                                             size=self.B)[mutate]
            out.append(np.clip(child, 0.0, 1.0))
        return out

    def truncate(self, population: list[tuple[np.ndarray, float, float]]):
        cap = self.search.population_cap
        if len(population) <= cap:
            return population
        points = [(f, g) for _, f, g in population]
        rank = _non_dominated_rank(points)
        crowd: dict[int, float] = {}
        for level in set(rank):
            members = [i for i, r in enumerate(rank) if r == level]
            crowd.update(_crowding(points, members))
        order = sorted(range(len(population)),
                       key=lambda i: (rank[i], -crowd[i], i))
        return [population[i] for i in order[:cap]]


def optimize(scenario: Scenario, baselines: Baselines, search: SearchConfig,
             workers: int | None = None) -> OptimizeResult:
    """Trace the Pareto frontier over reserve fractions under near-optimal
    fulfillment with usage-aligned rewards."""
    rewards = usage_rewards(scenario, baselines.baseline_CO)
    eval_cfg = SimConfig(
        replications=search.eval_replications,
        master_seed=baselines.master_seed,
        measure_days=baselines.measure_days,
    )
    archive = ParetoArchive()
    evaluations: list[tuple[tuple[float, ...], float, float]] = []
    proposer = EvolutionaryProposer(search, scenario.branch_count)
    population: list[tuple[np.ndarray, float, float]] = []

    def eval_beta(beta: np.ndarray) -> tuple[float, float]:
        policy = PolicySpec(beta=tuple(beta), fulfillment=Fulfillment.NEAR_OPTIMAL)
        metrics = run(scenario, policy, eval_cfg, rewards=rewards, workers=workers)
        point = evaluate(metrics, baselines, scenario)
        return point.f, point.g

    def absorb(batch: list[np.ndarray]) -> None:
        for beta in batch:
            f, g = eval_beta(beta)
            evaluations.append((tuple(beta), f, g))
            population.append((beta, f, g))
            entry = ArchiveEntry(
                beta=tuple(beta), f=f, g=g,
                master_seed=eval_cfg.master_seed,
                replications=eval_cfg.replications,
            )
            if archive.insert(entry):
                hv = hypervolume(archive)
                archive.entries[-1] = ArchiveEntry(
                    beta=entry.beta, f=entry.f, g=entry.g,
                    master_seed=entry.master_seed,
                    replications=entry.replications,
                    hv_at_insertion=hv,
                )

    absorb(proposer.initial_batch())
    for _ in range(search.iterations):
        absorb(proposer.propose(population))
        population = proposer.truncate(population)
    return OptimizeResult(archive=archive, evaluations=evaluations)


def tierify_policy(scenario: Scenario, beta, baselines: Baselines,
                   local_first: bool = False) -> PolicySpec:
    """Derive the static tier list a reserve-fraction vector deploys as:
    warm up under near-optimal fulfillment, average the post-warm-up
    coefficients, and segment branches into three tiers."""
    rewards = usage_rewards(scenario, baselines.baseline_CO)
    tables, open_stock = capture_window_tables(
        scenario, beta, rewards, master_seed=baselines.master_seed
    )
    tiers = derive_tiers(tables, open_stock)
    return PolicySpec(
        beta=tuple(beta), fulfillment=Fulfillment.TIERED,
        tier_assignment=tiers.tier, local_first=local_first,
    )


def reevaluate_tiered(archive: ParetoArchive, scenario: Scenario,
                      baselines: Baselines, eval_replications: int = 10,
                      workers: int | None = None) -> list[dict]:
    """Evaluate every frontier point under its implementable tiered twin."""
    eval_cfg = SimConfig(
        replications=eval_replications,
        master_seed=baselines.master_seed,
        measure_days=baselines.measure_days,
    )
    out = []
    for entry in archive.entries:
        policy = tierify_policy(scenario, entry.beta, baselines)
        metrics = run(scenario, policy, eval_cfg, workers=workers)
        point = evaluate(metrics, baselines, scenario)
        out.append({
            "beta": entry.beta,
            "f_tiered": point.f,
            "g_tiered": point.g,
            "f_nearopt": entry.f,
            "g_nearopt": entry.g,
            "tier_assignment": policy.tier_assignment,
        })
    return out
