"""The policy engine: per-window value-approximation coefficients, the
near-optimal serve/reject rule, usage-aligned rewards, and the static
three-tier approximation.

The coefficient table assigns each copy class an "expected reward per
copy" for every period of a planning window; the near-optimal rule
serves an arriving patron from the compatible stocked class whose
coefficient is lowest, and only if the patron's reward clears that
coefficient. Coefficients are monotone non-increasing in time and, when
every reward is 1 and per-period arrival mass is at most 1, never
exceed 1 (so no request is ever refused while compatible stock exists).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ZeroBaseline
from .model import CopyClass, Mode, PatronClass, Pool, Scenario, compat_indices


@dataclass(frozen=True)
class GammaTable:
    """Per-copy-class coefficients for one planning window.

    ``gamma[a, t-1]`` holds the period-``t`` coefficient for class ``a``,
    for ``t`` in 1..T+1; the final column is identically zero.
    ``capacities`` are the on-shelf counts the table was built from.
    """

    gamma: np.ndarray
    capacities: np.ndarray
    window_start: int = 0

    def __post_init__(self):
        self.gamma.setflags(write=False)

    @property
    def horizon(self) -> int:
        return self.gamma.shape[1] - 1

    def col(self, t: int) -> np.ndarray:
        """Coefficient vector for period ``t`` (1-based, up to T+1)."""
        if not 1 <= t <= self.horizon + 1:
            raise IndexError(f"t={t} outside 1..{self.horizon + 1}")
        return self.gamma[:, t - 1]


def compute_gammas(
    lambdas: Sequence[float],
    compat: Sequence[Sequence[int]],
    capacities: Sequence[int],
    rewards: Sequence[float],
    T: int,
    window_start: int = 0,
) -> GammaTable:
    """Backward-build the coefficient table for arbitrary compatibility sets.

    For each period (latest first) every patron class points at its
    best compatible class: the one with the smallest next-period
    coefficient, provided its reward exceeds it. Each pointed-at class
    absorbs the pointing classes' rate-weighted reward surplus divided
    by its capacity. Classes with zero capacity are never pointed at and
    keep coefficient 0.
    """
    cap = np.asarray(capacities, dtype=float)
    n = cap.size
    lam = np.asarray(lambdas, dtype=float)
    r = np.asarray(rewards, dtype=float)
    eligible = [[a for a in A_j if cap[a] > 0] for A_j in compat]
    g = np.zeros((n, T + 1))
    safe_cap = np.where(cap > 0, cap, 1.0)
    for t in range(T, 0, -1):
        nxt = g[:, t]
        delta = np.zeros(n)
        for j, elig in enumerate(eligible):
            if not elig or lam[j] == 0.0:
                continue
            a_star = min(elig, key=lambda a: (nxt[a], a))
            gain = r[j] - nxt[a_star]
            if gain > 0.0:
                delta[a_star] += lam[j] * gain
        g[:, t - 1] = nxt + delta / safe_cap
    return GammaTable(gamma=g, capacities=np.asarray(capacities, dtype=np.int64),
                      window_start=window_start)


def compute_gammas_library(
    lam: np.ndarray,
    capacities: np.ndarray,
    rewards: np.ndarray,
    T: int,
    window_start: int = 0,
) -> GammaTable:
    """compute_gammas specialized to the branch/pool structure.

    ``lam``, ``capacities`` and ``rewards`` are flat per-class arrays of
    length 2*B (reserve/open and browse/hold interleaved). Exploits the
    fact that all hold classes share one compatibility set, so they all
    point at the single globally cheapest open class each period.
    """
    cap = np.asarray(capacities, dtype=float)
    n = cap.size
    lam_browse = np.asarray(lam, dtype=float)[0::2]
    lam_hold = np.asarray(lam, dtype=float)[1::2]
    r_browse = np.asarray(rewards, dtype=float)[0::2]
    r_hold = np.asarray(rewards, dtype=float)[1::2]
    res_elig = cap[0::2] > 0
    open_elig = cap[1::2] > 0
    any_open = bool(open_elig.any())
    safe_cap = np.where(cap > 0, cap, 1.0)
    g = np.zeros((n, T + 1))
    for t in range(T, 0, -1):
        nxt = g[:, t]
        nxt_res = nxt[0::2]
        nxt_open = nxt[1::2]
        delta = np.zeros(n)
        if any_open:
            masked = np.where(open_elig, nxt_open, np.inf)
            b_min = int(np.argmin(masked))
            g_min = masked[b_min]
            hold_mass = float(np.dot(lam_hold, np.maximum(r_hold - g_min, 0.0)))
            delta[2 * b_min + 1] += hold_mass
        g_r = np.where(res_elig, nxt_res, np.inf)
        g_o = np.where(open_elig, nxt_open, np.inf)
        pick_res = g_r <= g_o  # tie goes to the reserve class (lower index)
        g_pick = np.where(pick_res, g_r, g_o)
        browse_mass = np.where(
            np.isfinite(g_pick), lam_browse * np.maximum(r_browse - g_pick, 0.0), 0.0
        )
        delta[0::2] += np.where(pick_res, browse_mass, 0.0)
        delta[1::2] += np.where(pick_res, 0.0, browse_mass)
        g[:, t - 1] = nxt + delta / safe_cap
    return GammaTable(gamma=g, capacities=np.asarray(capacities, dtype=np.int64),
                      window_start=window_start)


def approx_value(gammas: GammaTable, x: Sequence[int], t: int) -> float:
    """Linear inventory value: the coefficient/stock dot product at period t."""
    xv = np.asarray(x, dtype=float)
    if (xv < 0).any():
        raise ValueError("inventory vector must be non-negative")
    return float(np.dot(gammas.col(t), xv))


def pick_source_near_optimal(
    gamma_next: np.ndarray, x: np.ndarray, candidates: np.ndarray, r_j: float
) -> int:
    """Flat-index core of the near-optimal rule.

    Returns the chosen class index, or -1 to reject (no stocked
    compatible class, or the cheapest one's coefficient exceeds r_j).
    """
    stocked = candidates[x[candidates] > 0]
    if stocked.size == 0:
        return -1
    a = int(stocked[np.argmin(gamma_next[stocked])])
    return a if r_j >= gamma_next[a] else -1


def decide_near_optimal(
    gammas: GammaTable,
    x: Sequence[int],
    t: int,
    j: PatronClass,
    rewards: Sequence[float],
) -> CopyClass | None:
    """Serve decision at period ``t``: the stocked compatible class with the
    smallest next-period coefficient, if the patron's reward covers it."""
    if not 1 <= t <= gammas.horizon:
        raise ValueError(f"t={t} outside 1..{gammas.horizon}")
    xv = np.asarray(x)
    branch_count = gammas.gamma.shape[0] // 2
    candidates = np.asarray(compat_indices(j.index, branch_count))
    a = pick_source_near_optimal(gammas.col(t + 1), xv, candidates, rewards[j.index])
    return CopyClass.from_index(a) if a >= 0 else None


def uniform_rewards(branch_count: int) -> np.ndarray:
    """Reward 1 for every patron class: plain checkout maximization."""
    return np.ones(2 * branch_count)


def usage_rewards(scenario: Scenario, baseline_CO: np.ndarray) -> np.ndarray:
    """Per-class rewards aligned with the usage objective.

    A checkout at branch i is worth its weight in the usage objective:
    demand share over the branch's baseline checkout count, the same for
    browse and hold checkouts at that branch, rescaled so max reward is 1
    (decisions are invariant to the scale).
    """
    co = np.asarray(baseline_CO, dtype=float)
    if (co <= 0).any():
        raise ZeroBaseline("every branch needs a positive baseline checkout count")
    p = scenario.demand_sizes()
    per_branch = (p / p.sum()) / co
    per_branch = per_branch / per_branch.max()
    r = np.empty(2 * scenario.branch_count)
    r[0::2] = per_branch
    r[1::2] = per_branch
    return r


@dataclass(frozen=True)
class TierAssignment:
    """Static 3-tier branch ordering plus the averages that produced it."""

    tier: tuple[int, ...]
    avg_unit_reward: tuple[float, ...]

    def members_by_level(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        t = np.asarray(self.tier)
        return tuple(np.where(t == level)[0] for level in (1, 2, 3))


def derive_tiers(
    gammas_per_title: Sequence[GammaTable], open_stock: np.ndarray
) -> TierAssignment:
    """Segment branches into three near-equal tiers by average unit reward.

    Per branch, average the period-1 open-class coefficient over titles
    the branch has open stock of (an unweighted indicator average).
    Branches with no stocked titles sort last. Ascending averages fill
    tier 1 first; group sizes differ by at most one, extras going to the
    lower-numbered tiers.
    """
    B, L = open_stock.shape
    if B < 3:
        raise ValueError("tier derivation needs at least 3 branches")
    if len(gammas_per_title) != L:
        raise ValueError("one GammaTable per title required")
    sums = np.zeros(B)
    counts = np.zeros(B)
    for l, gt in enumerate(gammas_per_title):
        open_cols = gt.col(1)[1::2]
        stocked = open_stock[:, l] > 0
        sums[stocked] += open_cols[stocked]
        counts[stocked] += 1
    avg = np.where(counts > 0, sums / np.maximum(counts, 1.0), np.inf)
    order = sorted(range(B), key=lambda i: (avg[i], i))
    base, rem = divmod(B, 3)
    sizes = [base + (1 if k < rem else 0) for k in range(3)]
    tier = [0] * B
    pos = 0
    for level, size in zip((1, 2, 3), sizes):
        for i in order[pos:pos + size]:
            tier[i] = level
        pos += size
    return TierAssignment(tier=tuple(tier), avg_unit_reward=tuple(float(v) for v in avg))


def pick_source_tiered(
    tiers_by_level: Sequence[np.ndarray],
    x_open: np.ndarray,
    own_branch: int,
    local_first: bool,
) -> int:
    """Source branch for a hold under the static tier scan, or -1.

    Scans tier 1 then 2 then 3, taking the branch with the most open
    stock within a tier (ties to the lowest branch index).
    """
    if local_first and x_open[own_branch] > 0:
        return own_branch
    for members in tiers_by_level:
        if members.size == 0:
            continue
        stock = x_open[members]
        k = int(np.argmax(stock))
        if stock[k] > 0:
            return int(members[k])
    return -1


def decide_tiered(
    tiers: TierAssignment, x: Sequence[int], j: PatronClass, local_first: bool = False
) -> CopyClass | None:
    """Tier-scan decision for a hold request; rejects only when no open
    copy exists anywhere."""
    if j.mode != Mode.HOLD:
        raise ValueError("the tier scan applies to hold requests only")
    xv = np.asarray(x)
    branch = pick_source_tiered(tiers.members_by_level(), xv[1::2], j.branch, local_first)
    return CopyClass(branch, Pool.OPEN) if branch >= 0 else None
