"""Discrete-event engine: reserve initialization, daily arrivals, loans
and returns, per-window coefficient refresh, and metric collection.

Determinism contract: all randomness derives from
``SeedSequence([master_seed, replication, title, purpose])`` with one
stream per purpose (arrivals, reserve split, source randomization), so
arrival sample paths are identical across policies evaluated with the
same master seed (common random numbers), and reserve fractions never
perturb arrivals. Titles are simulated independently and reduced in a
fixed chunk order, so results are bit-identical for any worker count.
"""

from __future__ import annotations

import heapq
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ZeroBaseline
from .fulfillment import (
    GammaTable,
    TierAssignment,
    compute_gammas_library,
    pick_source_near_optimal,
    pick_source_tiered,
)
from .model import Fulfillment, PolicySpec, Scenario, arrival_rates

CHUNK_TITLES = 64

ARRIVAL_STREAM = 0
RESERVE_STREAM = 1
POLICY_STREAM = 2


@dataclass
class TitleState:
    """Live inventory of one title: shelf counts per copy class plus the
    outstanding loans as (return_day, home_class) pairs."""

    on_shelf: np.ndarray
    loans: list[tuple[int, int]] = field(default_factory=list)

    @property
    def total_copies(self) -> int:
        return int(self.on_shelf.sum()) + len(self.loans)


@dataclass(frozen=True)
class SimConfig:
    replications: int = 10
    master_seed: int = 0
    measure_days: int | None = None  # defaults to scenario.sim_days

    def __post_init__(self):
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if self.master_seed < 0:
            raise ValueError("master_seed must be non-negative")
        if self.measure_days is not None and self.measure_days < 1:
            raise ValueError("measure_days must be positive")


@dataclass
class RepMetrics:
    """Raw integer counts for one replication (measurement window only)."""

    co: np.ndarray          # (B, 2) checkouts by [browse, hold] pickup branch
    d_days: np.ndarray      # (B, L) availability-days
    flow: np.ndarray        # (B, B) desirability-weighted cross-branch holds
    flow_counts: np.ndarray  # (B, B) raw cross-branch hold counts
    rejected_holds: int


@dataclass
class SimMetrics:
    """Replication means plus the per-replication raw metrics."""

    co: np.ndarray
    d_days: np.ndarray
    flow: np.ndarray
    flow_counts: np.ndarray
    rejected_holds: float
    raw: list[RepMetrics]

    @property
    def co_total(self) -> np.ndarray:
        return self.co.sum(axis=1)


def _rng(master_seed: int, rep: int, title: int, purpose: int) -> np.random.Generator:
    return np.random.default_rng(
        np.random.SeedSequence([master_seed, rep, title, purpose])
    )


def _split_reserves(counts: np.ndarray, beta: np.ndarray,
                    rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    reserve = rng.binomial(counts, beta)
    return reserve, counts - reserve


def init_reserves(scenario: Scenario, beta, rng: np.random.Generator) -> list[TitleState]:
    """Binomial reserve split for every title, independent across titles."""
    beta = np.asarray(beta, dtype=float)
    states = []
    for l in range(scenario.title_count):
        reserve, open_ = _split_reserves(scenario.inventory[:, l], beta, rng)
        shelf = np.empty(2 * scenario.branch_count, dtype=np.int64)
        shelf[0::2] = reserve
        shelf[1::2] = open_
        states.append(TitleState(on_shelf=shelf))
    return states


_NEAR_OPTIMAL, _TIERED, _RANDOM = 0, 1, 2
_FULFILLMENT_CODE = {
    Fulfillment.NEAR_OPTIMAL: _NEAR_OPTIMAL,
    Fulfillment.TIERED: _TIERED,
    Fulfillment.RANDOM_AVAILABLE: _RANDOM,
}


@dataclass(frozen=True)
class _SimContext:
    """Everything a worker needs to simulate any (replication, title)."""

    branch_count: int
    title_count: int
    loan_days: int
    warmup: int
    total_days: int
    lam: np.ndarray          # (L, 2B)
    inventory: np.ndarray    # (B, L)
    desirability: np.ndarray  # (L,)
    beta: np.ndarray         # (B,)
    method: int
    rewards: np.ndarray | None
    tiers_by_level: tuple | None
    local_first: bool
    master_seed: int
    audit: bool = False
    capture_day: int | None = None


def _simulate_title(ctx: _SimContext, rep: int, l: int):
    """Simulate one (replication, title) pair.

    Returns (co, d_col, flow_items, rejected) where flow_items is a list
    of (source_branch, pickup_branch, count); or, in capture mode, the
    (GammaTable, open_stock_column) snapshot at the capture day.
    """
    B = ctx.branch_count
    loan = ctx.loan_days
    total = ctx.total_days if ctx.capture_day is None else ctx.capture_day + 1
    warmup = ctx.warmup
    lam_l = ctx.lam[l]
    nearopt = ctx.method == _NEAR_OPTIMAL

    rng_arr = _rng(ctx.master_seed, rep, l, ARRIVAL_STREAM)
    rng_res = _rng(ctx.master_seed, rep, l, RESERVE_STREAM)
    rng_pol = _rng(ctx.master_seed, rep, l, POLICY_STREAM)

    arrivals = rng_arr.random((total, 2 * B)) < lam_l
    arrival_days = np.nonzero(arrivals.any(axis=1))[0]
    arr_by_day = {int(d): np.nonzero(arrivals[d])[0] for d in arrival_days}

    reserve, open_ = _split_reserves(ctx.inventory[:, l], ctx.beta, rng_res)
    x = np.empty(2 * B, dtype=np.int64)
    x[0::2] = reserve
    x[1::2] = open_
    total_copies = int(x.sum())
    x_open = x[1::2]

    # windows that need a coefficient table: those containing arrivals,
    # plus the capture window when snapshotting for tier derivation
    gamma_days: set[int] = set()
    if nearopt:
        gamma_days = {int(d) - int(d) % loan for d in arrival_days}
        if ctx.capture_day is not None:
            gamma_days.add(ctx.capture_day)

    events = sorted(set(arr_by_day) | gamma_days)
    heapq.heapify(events)

    gamma: GammaTable | None = None
    returns: dict[int, list[int]] = {}
    loans_out = 0
    co = np.zeros((B, 2), dtype=np.int64)
    d_col = np.zeros(B, dtype=np.int64)
    flow: dict[tuple[int, int], int] = {}
    rejected = 0

    avail = ((x[0::2] + x[1::2]) > 0).astype(np.int64)
    span_start = 0
    last = -1

    def flush(upto: int) -> None:
        nonlocal span_start
        lo = max(span_start, warmup)
        hi = min(upto, ctx.total_days)
        if hi > lo:
            d_col[:] += avail * (hi - lo)
        span_start = upto

    while events:
        e = heapq.heappop(events)
        if e == last or e >= total:
            continue
        last = e
        flush(e)
        changed = False

        due = returns.pop(e, None)
        if due is not None:
            for a in due:
                x[a] += 1
            loans_out -= len(due)
            changed = True

        if nearopt and e % loan == 0 and e in gamma_days:
            gamma = compute_gammas_library(lam_l, x, ctx.rewards, loan, window_start=e)

        if ctx.capture_day is not None and e == ctx.capture_day:
            return gamma, x_open.copy()

        reqs = arr_by_day.get(e)
        if reqs is not None:
            if nearopt:
                gcol = gamma.gamma[:, (e % loan) + 1]  # coefficients at t+1
            if len(reqs) > 1:
                reqs = reqs[rng_arr.permutation(len(reqs))]
            for j in reqs:
                branch = int(j) >> 1
                is_hold = int(j) & 1
                if nearopt:
                    if is_hold:
                        cand = _OPEN_IDX[B]
                    else:
                        cand = _BROWSE_CAND[B][branch]
                    a = pick_source_near_optimal(gcol, x, cand, ctx.rewards[j])
                elif is_hold:
                    if ctx.method == _TIERED:
                        src = pick_source_tiered(
                            ctx.tiers_by_level, x_open, branch, ctx.local_first
                        )
                    else:
                        stocked = np.nonzero(x_open > 0)[0]
                        src = (
                            int(stocked[rng_pol.integers(stocked.size)])
                            if stocked.size else -1
                        )
                    a = 2 * src + 1 if src >= 0 else -1
                else:
                    # static policies: browsers drain the local reserve
                    # pool first, keeping open copies for holds
                    if x[2 * branch] > 0:
                        a = 2 * branch
                    elif x[2 * branch + 1] > 0:
                        a = 2 * branch + 1
                    else:
                        a = -1
                if a < 0:
                    if is_hold and e >= warmup:
                        rejected += 1
                    continue
                x[a] -= 1
                loans_out += 1
                # out for the service day plus loan_days full days; the
                # return lands at start of day and is servable that day
                rd = e + loan + 1
                returns.setdefault(rd, []).append(a)
                if rd < total:
                    heapq.heappush(events, rd)
                changed = True
                if e >= warmup:
                    co[branch, is_hold] += 1
                    src_branch = a >> 1
                    if is_hold and src_branch != branch:
                        key = (src_branch, branch)
                        flow[key] = flow.get(key, 0) + 1

        if changed:
            avail = ((x[0::2] + x[1::2]) > 0).astype(np.int64)
        if ctx.audit:
            if int(x.sum()) + loans_out != total_copies:
                raise AssertionError(f"copy conservation violated on day {e}, title {l}")
            if (x < 0).any():
                raise AssertionError(f"negative shelf count on day {e}, title {l}")

    if ctx.capture_day is not None:
        # no events on the capture day itself: build the table directly
        gamma = compute_gammas_library(
            lam_l, x, ctx.rewards, loan, window_start=ctx.capture_day
        )
        return gamma, x_open.copy()

    flush(ctx.total_days)
    flow_items = [(s, d, c) for (s, d), c in sorted(flow.items())]
    return co, d_col, flow_items, rejected


# per-process caches for the candidate index arrays
_OPEN_IDX: dict[int, np.ndarray] = {}
_BROWSE_CAND: dict[int, list[np.ndarray]] = {}


def _prime_caches(B: int) -> None:
    if B not in _OPEN_IDX:
        _OPEN_IDX[B] = np.arange(1, 2 * B, 2)
        _BROWSE_CAND[B] = [np.array([2 * b, 2 * b + 1]) for b in range(B)]


def _chunk_result(ctx: _SimContext, rep: int, lo: int, hi: int):
    """Partial metrics for titles [lo, hi) of one replication, reduced in
    title order so the overall reduction is order-fixed."""
    _prime_caches(ctx.branch_count)
    B = ctx.branch_count
    co = np.zeros((B, 2), dtype=np.int64)
    d_block = np.zeros((B, hi - lo), dtype=np.int64)
    flow_w = np.zeros((B, B))
    flow_c = np.zeros((B, B), dtype=np.int64)
    rejected = 0
    for l in range(lo, hi):
        co_l, d_col, flow_items, rej = _simulate_title(ctx, rep, l)
        co += co_l
        d_block[:, l - lo] = d_col
        d_l = ctx.desirability[l]
        for s, d, c in flow_items:
            flow_w[s, d] += d_l * c
            flow_c[s, d] += c
        rejected += rej
    return co, d_block, flow_w, flow_c, rejected


_WORKER_CTX: _SimContext | None = None


def _worker_init(ctx: _SimContext) -> None:
    global _WORKER_CTX
    _WORKER_CTX = ctx


def _worker_chunk(args):
    rep, lo, hi = args
    return _chunk_result(_WORKER_CTX, rep, lo, hi)


def resolve_workers(workers: int | None = None) -> int:
    if workers is not None:
        return max(1, int(workers))
    env = os.environ.get("HOLDSIM_WORKERS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _build_context(scenario: Scenario, policy: PolicySpec, config: SimConfig,
                   rewards, audit: bool = False,
                   capture_day: int | None = None) -> _SimContext:
    method = _FULFILLMENT_CODE[policy.fulfillment]
    if method == _NEAR_OPTIMAL or capture_day is not None:
        if rewards is None:
            raise ConfigError("NearOptimal fulfillment needs an attached reward vector")
        rewards = np.asarray(rewards, dtype=float)
        if rewards.shape != (2 * scenario.branch_count,):
            raise ConfigError("reward vector must have one entry per patron class")
    tiers = None
    if method == _TIERED:
        if policy.tier_assignment is None:
            raise ConfigError("Tiered fulfillment needs a tier_assignment")
        ta = TierAssignment(tier=policy.tier_assignment,
                            avg_unit_reward=(0.0,) * len(policy.tier_assignment))
        tiers = ta.members_by_level()
    measure = config.measure_days if config.measure_days is not None else scenario.sim_days
    return _SimContext(
        branch_count=scenario.branch_count,
        title_count=scenario.title_count,
        loan_days=scenario.loan_days,
        warmup=scenario.warmup_days,
        total_days=scenario.warmup_days + measure,
        lam=arrival_rates(scenario).lam,
        inventory=scenario.inventory,
        desirability=scenario.desirabilities(),
        beta=np.asarray(policy.beta, dtype=float),
        method=method,
        rewards=rewards if method == _NEAR_OPTIMAL or capture_day is not None else None,
        tiers_by_level=tiers,
        local_first=policy.local_first,
        master_seed=config.master_seed,
        audit=audit,
        capture_day=capture_day,
    )


def run(scenario: Scenario, policy: PolicySpec, config: SimConfig,
        rewards=None, workers: int | None = None, audit: bool = False) -> SimMetrics:
    """Simulate all replications and return replication-mean metrics.

    Output is bit-identical for any worker count: chunk boundaries and
    the reduction order are fixed regardless of parallelism.
    """
    ctx = _build_context(scenario, policy, config, rewards, audit=audit)
    nworkers = resolve_workers(workers)
    L = scenario.title_count
    chunks = [
        (rep, lo, min(lo + CHUNK_TITLES, L))
        for rep in range(config.replications)
        for lo in range(0, L, CHUNK_TITLES)
    ]
    if nworkers > 1 and len(chunks) >= 4:
        with ProcessPoolExecutor(
            max_workers=nworkers, initializer=_worker_init, initargs=(ctx,)
        ) as pool:
            partials = list(
                pool.map(_worker_chunk, chunks,
                         chunksize=max(1, len(chunks) // (nworkers * 4)))
            )
    else:
        partials = [_chunk_result(ctx, *c) for c in chunks]

    B = scenario.branch_count
    raw: list[RepMetrics] = []
    idx = 0
    for rep in range(config.replications):
        co = np.zeros((B, 2), dtype=np.int64)
        d_days = np.zeros((B, L), dtype=np.int64)
        flow_w = np.zeros((B, B))
        flow_c = np.zeros((B, B), dtype=np.int64)
        rejected = 0
        for lo in range(0, L, CHUNK_TITLES):
            pco, d_block, pfw, pfc, prej = partials[idx]
            idx += 1
            co += pco
            d_days[:, lo:lo + d_block.shape[1]] = d_block
            flow_w += pfw
            flow_c += pfc
            rejected += prej
        raw.append(RepMetrics(co=co, d_days=d_days, flow=flow_w,
                              flow_counts=flow_c, rejected_holds=rejected))

    R = config.replications
    return SimMetrics(
        co=np.mean([m.co for m in raw], axis=0),
        d_days=np.mean([m.d_days for m in raw], axis=0),
        flow=np.mean([m.flow for m in raw], axis=0),
        flow_counts=np.mean([m.flow_counts for m in raw], axis=0),
        rejected_holds=float(np.mean([m.rejected_holds for m in raw])),
        raw=raw,
    )


def capture_window_tables(scenario: Scenario, beta, rewards, master_seed: int,
                          rep: int = 0) -> tuple[list[GammaTable], np.ndarray]:
    """Warm up under the near-optimal policy and snapshot, per title, the
    coefficient table and open-stock counts at the first planning-window
    start on or after the warm-up boundary (tier derivation input)."""
    loan = scenario.loan_days
    capture = ((scenario.warmup_days + loan - 1) // loan) * loan
    policy = PolicySpec(beta=tuple(beta), fulfillment=Fulfillment.NEAR_OPTIMAL)
    config = SimConfig(replications=1, master_seed=master_seed, measure_days=1)
    ctx = _build_context(scenario, policy, config, rewards, capture_day=capture)
    _prime_caches(scenario.branch_count)
    tables: list[GammaTable] = []
    open_stock = np.zeros((scenario.branch_count, scenario.title_count), dtype=np.int64)
    for l in range(scenario.title_count):
        gamma, x_open = _simulate_title(ctx, rep, l)
        tables.append(gamma)
        open_stock[:, l] = x_open
    return tables, open_stock


@dataclass(frozen=True)
class Baselines:
    """Frozen per-branch denominators for the two objectives, plus the
    full metrics of the runs that produced them."""

    baseline_CO: np.ndarray
    baseline_CQ: np.ndarray
    master_seed: int
    replications: int
    measure_days: int
    metrics_beta0: SimMetrics | None = None
    metrics_beta1: SimMetrics | None = None


def freeze_baselines(scenario: Scenario, config: SimConfig,
                     workers: int | None = None) -> Baselines:
    """Run the two anchor policies with common random numbers.

    The usage denominator comes from (beta=0, near-optimal, uniform
    rewards); the quality denominator from (beta=1), where the
    fulfillment method is irrelevant because no hold can be served.
    """
    from .fulfillment import uniform_rewards

    B = scenario.branch_count
    rewards = uniform_rewards(B)
    measure = config.measure_days if config.measure_days is not None else scenario.sim_days

    beta0 = PolicySpec(beta=(0.0,) * B, fulfillment=Fulfillment.NEAR_OPTIMAL)
    m0 = run(scenario, beta0, config, rewards=rewards, workers=workers)
    baseline_co = m0.co_total
    if (baseline_co <= 0).any():
        dead = np.nonzero(baseline_co <= 0)[0].tolist()
        raise ZeroBaseline(f"branches {dead} recorded zero checkouts in the beta=0 run")

    beta1 = PolicySpec(beta=(1.0,) * B, fulfillment=Fulfillment.NEAR_OPTIMAL)
    m1 = run(scenario, beta1, config, rewards=rewards, workers=workers)
    baseline_cq = m1.d_days @ scenario.desirabilities()
    if (baseline_cq <= 0).any():
        dead = np.nonzero(baseline_cq <= 0)[0].tolist()
        raise ZeroBaseline(f"branches {dead} recorded zero collection quality at beta=1")

    return Baselines(
        baseline_CO=baseline_co,
        baseline_CQ=baseline_cq,
        master_seed=config.master_seed,
        replications=config.replications,
        measure_days=measure,
        metrics_beta0=m0,
        metrics_beta1=m1,
    )


# --- baseline files -----------------------------------------------------------

def baselines_to_dict(b: Baselines) -> dict:
    return {
        "baseline_CO": b.baseline_CO.tolist(),
        "baseline_CQ": b.baseline_CQ.tolist(),
        "master_seed": b.master_seed,
        "replications": b.replications,
        "measure_days": b.measure_days,
    }


def baselines_from_dict(obj: dict) -> Baselines:
    from .errors import SchemaError

    allowed = {"baseline_CO", "baseline_CQ", "master_seed", "replications", "measure_days"}
    unknown = set(obj) - allowed
    if unknown:
        raise SchemaError(f"Baselines: unknown fields {sorted(unknown)}")
    missing = allowed - set(obj)
    if missing:
        raise SchemaError(f"Baselines: missing fields {sorted(missing)}")
    return Baselines(
        baseline_CO=np.asarray(obj["baseline_CO"], dtype=float),
        baseline_CQ=np.asarray(obj["baseline_CQ"], dtype=float),
        master_seed=int(obj["master_seed"]),
        replications=int(obj["replications"]),
        measure_days=int(obj["measure_days"]),
    )


def save_baselines(b: Baselines, path) -> None:
    import json
    from pathlib import Path

    Path(path).write_text(json.dumps(baselines_to_dict(b), indent=1) + "\n")


def load_baselines(path) -> Baselines:
    import json
    from pathlib import Path

    return baselines_from_dict(json.loads(Path(path).read_text()))
