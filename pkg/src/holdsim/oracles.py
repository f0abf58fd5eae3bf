"""Exact ground-truth computations on small instances.

Everything here is deliberately brute-force: a full-grid backward
induction for the optimal value, an augmenting-path solver for the
fluid LP bound, a rational-arithmetic simplex to cross-check the LP,
and an exact evaluation of the coefficient-threshold policy. These are
the test bed for the approximation guarantees (LP >= V_1, 2*H_1 >= LP,
R_1 >= V_1/2).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from .errors import SchemaError, StateSpaceTooLarge
from .fulfillment import GammaTable, compute_gammas
from .model import compat_indices

STATE_SPACE_LIMIT = 10**7
_EPS = 1e-12


@dataclass(frozen=True)
class SmallInstance:
    """A finite-horizon allocation instance small enough to solve exactly.

    At most one patron arrives per period (sum of rates <= 1), matching
    the stylized arrival model the guarantees are proved under.
    """

    capacities: tuple[int, ...]
    lambdas: tuple[float, ...]
    rewards: tuple[float, ...]
    compat: tuple[tuple[int, ...], ...]
    horizon: int

    def __post_init__(self):
        n = len(self.capacities)
        if n == 0 or len(self.lambdas) == 0:
            raise ValueError("instance needs at least one copy class and patron class")
        if len(self.lambdas) != len(self.rewards) or len(self.lambdas) != len(self.compat):
            raise ValueError("lambdas, rewards and compat must have equal length")
        if any(c < 0 for c in self.capacities):
            raise ValueError("capacities must be non-negative")
        if any(not 0.0 <= l <= 1.0 for l in self.lambdas):
            raise ValueError("rates must be in [0,1]")
        if sum(self.lambdas) > 1.0 + 1e-12:
            raise ValueError("total arrival rate must not exceed 1")
        if any(r < 0 for r in self.rewards):
            raise ValueError("rewards must be non-negative")
        for j, A_j in enumerate(self.compat):
            if not A_j:
                raise ValueError(f"patron class {j} has an empty compatibility set")
            if any(not 0 <= a < n for a in A_j):
                raise ValueError(f"patron class {j} references an unknown copy class")
            if len(set(A_j)) != len(A_j):
                raise ValueError(f"patron class {j} repeats a copy class")
        if not 1 <= self.horizon <= 12:
            raise ValueError("horizon must be in 1..12")

    @property
    def grid_shape(self) -> tuple[int, ...]:
        return tuple(c + 1 for c in self.capacities)

    def guard(self) -> None:
        states = 1
        for s in self.grid_shape:
            states *= s
        if states * self.horizon > STATE_SPACE_LIMIT:
            raise StateSpaceTooLarge(
                f"{states} states x horizon {self.horizon} exceeds {STATE_SPACE_LIMIT}"
            )

    def gammas(self) -> GammaTable:
        return compute_gammas(self.lambdas, self.compat, self.capacities,
                              self.rewards, self.horizon)


def library_instance(branch_count: int, capacities, lambdas, rewards,
                     horizon: int) -> SmallInstance:
    """Instance with the branch/pool compatibility structure."""
    compat = tuple(compat_indices(j, branch_count) for j in range(2 * branch_count))
    return SmallInstance(
        capacities=tuple(int(c) for c in capacities),
        lambdas=tuple(float(l) for l in lambdas),
        rewards=tuple(float(r) for r in rewards),
        compat=compat,
        horizon=int(horizon),
    )


@dataclass(frozen=True)
class ValueTable:
    """Backward-induction values on the full inventory grid.

    ``tables[t-1][x]`` is the value at period t with inventory x, for t
    in 1..T+1; the final table is identically zero.
    """

    tables: tuple[np.ndarray, ...]

    @property
    def horizon(self) -> int:
        return len(self.tables) - 1

    def value(self, t: int, x) -> float:
        return float(self.tables[t - 1][tuple(int(v) for v in x)])


def _shift_down(grid: np.ndarray, a: int) -> np.ndarray:
    """grid evaluated at x - e_a where x_a >= 1, -inf elsewhere."""
    out = np.full(grid.shape, -np.inf)
    dst = [slice(None)] * grid.ndim
    src = [slice(None)] * grid.ndim
    dst[a] = slice(1, None)
    src[a] = slice(0, -1)
    out[tuple(dst)] = grid[tuple(src)]
    return out


def solve_dp(inst: SmallInstance) -> ValueTable:
    """Exact optimal value by backward induction.

    Uses the positive-part form: each patron class contributes its rate
    times the clipped gain of serving from the best compatible stocked
    class over carrying the inventory forward.
    """
    inst.guard()
    shape = inst.grid_shape
    tables: list[np.ndarray] = [np.zeros(shape)] * (inst.horizon + 1)
    v_next = np.zeros(shape)
    for t in range(inst.horizon, 0, -1):
        v = v_next.copy()
        for j, A_j in enumerate(inst.compat):
            if inst.lambdas[j] == 0.0:
                continue
            best = np.full(shape, -np.inf)
            for a in A_j:
                if inst.capacities[a] > 0:
                    best = np.maximum(best, _shift_down(v_next, a))
            has_stock = best > -np.inf
            gain = np.where(
                has_stock, np.maximum(inst.rewards[j] + best - v_next, 0.0), 0.0
            )
            v += inst.lambdas[j] * gain
        tables[t - 1] = v
        v_next = v
    return ValueTable(tables=tuple(tables))


def solve_dp_reference(inst: SmallInstance) -> ValueTable:
    """The same induction written with an explicit serve-or-reject max and
    a separate no-arrival carry term; equal to solve_dp up to rounding."""
    inst.guard()
    shape = inst.grid_shape
    tables: list[np.ndarray] = [np.zeros(shape)] * (inst.horizon + 1)
    v_next = np.zeros(shape)
    for t in range(inst.horizon, 0, -1):
        v = np.zeros(shape)
        carried = np.ones(shape)
        for j, A_j in enumerate(inst.compat):
            lam = inst.lambdas[j]
            if lam == 0.0:
                continue
            best = np.full(shape, -np.inf)
            for a in A_j:
                if inst.capacities[a] > 0:
                    best = np.maximum(best, _shift_down(v_next, a))
            has_stock = best > -np.inf
            served_value = np.where(
                has_stock,
                np.maximum(inst.rewards[j] + np.where(has_stock, best, 0.0), v_next),
                0.0,
            )
            v += lam * served_value
            carried -= lam * has_stock
        v += carried * v_next
        tables[t - 1] = v
        v_next = v
    return ValueTable(tables=tuple(tables))


def dp_value(inst: SmallInstance) -> float:
    """V_1 at the starting inventory."""
    return solve_dp(inst).value(1, inst.capacities)


def lp_bound(inst: SmallInstance) -> float:
    """Optimum of the fluid LP via priority-ordered augmenting paths.

    Because the objective weight depends only on the patron class, the
    feasible per-class totals form a polymatroid, so routing classes in
    descending reward order (stable by index) with rerouting through
    residual arcs is exact.
    """
    m = len(inst.lambdas)
    n = len(inst.capacities)
    flow = np.zeros((m, n))
    resid = np.array([float(c) for c in inst.capacities])
    compat_sets = [set(A_j) for A_j in inst.compat]
    total = 0.0
    for j0 in sorted(range(m), key=lambda j: (-inst.rewards[j], j)):
        budget = inst.horizon * inst.lambdas[j0]
        pushed = 0.0
        while budget - pushed > _EPS:
            # nodes alternate [j0, a1, j1, a2, ..., a_goal]
            nodes = _augmenting_path(j0, compat_sets, flow, resid)
            if nodes is None:
                break
            delta = min(budget - pushed, resid[nodes[-1]])
            for k in range(2, len(nodes), 2):
                delta = min(delta, flow[nodes[k], nodes[k - 1]])
            for k in range(0, len(nodes) - 1, 2):
                flow[nodes[k], nodes[k + 1]] += delta
                if k + 2 < len(nodes):
                    flow[nodes[k + 2], nodes[k + 1]] -= delta
            resid[nodes[-1]] -= delta
            pushed += delta
        total += inst.rewards[j0] * pushed
    return total


def _augmenting_path(j0, compat_sets, flow, resid):
    """BFS for a path j0 -> a1 [-> j1 -> a2 ...] ending at a class with
    residual capacity; backward steps reroute another class's flow."""
    m = flow.shape[0]
    n = flow.shape[1]
    seen_a = [False] * n
    seen_j = [False] * m
    seen_j[j0] = True
    parent_of_a = {}  # class -> patron reached from
    parent_of_j = {}  # patron -> class reached from
    queue = [("j", j0)]
    goal = -1
    while queue and goal < 0:
        kind, node = queue.pop(0)
        if kind == "j":
            for a in sorted(compat_sets[node]):
                if seen_a[a]:
                    continue
                seen_a[a] = True
                parent_of_a[a] = node
                if resid[a] > _EPS:
                    goal = a
                    break
                queue.append(("a", a))
        else:
            for j in range(m):
                if not seen_j[j] and node in compat_sets[j] and flow[j, node] > _EPS:
                    seen_j[j] = True
                    parent_of_j[j] = node
                    queue.append(("j", j))
    if goal < 0:
        return None
    nodes = [goal]
    a = goal
    while True:
        j = parent_of_a[a]
        nodes.append(j)
        if j == j0:
            break
        a = parent_of_j[j]
        nodes.append(a)
    nodes.reverse()
    return nodes


def lp_bound_exact(inst: SmallInstance) -> Fraction:
    """Exact rational LP optimum by simplex with Bland's rule.

    Independent of lp_bound: solves the raw LP over pair variables with
    Fraction arithmetic (floats convert exactly).
    """
    pairs = [(j, a) for j, A_j in enumerate(inst.compat) for a in A_j]
    nv = len(pairs)
    m = len(inst.lambdas)
    n = len(inst.capacities)
    rows: list[list[Fraction]] = []
    rhs: list[Fraction] = []
    for j in range(m):
        rows.append([Fraction(1 if pj == j else 0) for pj, _ in pairs])
        rhs.append(Fraction(inst.horizon) * Fraction(inst.lambdas[j]))
    for a in range(n):
        rows.append([Fraction(1 if pa == a else 0) for _, pa in pairs])
        rhs.append(Fraction(inst.capacities[a]))
    cost = [Fraction(inst.rewards[j]) for j, _ in pairs]
    return _simplex_max(rows, rhs, cost, nv)


def _simplex_max(A: list[list[Fraction]], b: list[Fraction],
                 c: list[Fraction], nv: int) -> Fraction:
    """max c'x s.t. Ax <= b, x >= 0 with b >= 0, exact arithmetic."""
    m = len(A)
    zero = Fraction(0)
    tab = [list(A[i]) + [Fraction(1 if k == i else 0) for k in range(m)] + [b[i]]
           for i in range(m)]
    obj = [-ci for ci in c] + [zero] * m + [zero]
    basis = list(range(nv, nv + m))
    width = nv + m
    while True:
        enter = next((k for k in range(width) if obj[k] < 0), None)
        if enter is None:
            return obj[-1]
        leave = None
        best_ratio = None
        for i in range(m):
            if tab[i][enter] > 0:
                ratio = tab[i][-1] / tab[i][enter]
                if (best_ratio is None or ratio < best_ratio
                        or (ratio == best_ratio and basis[i] < basis[leave])):
                    best_ratio = ratio
                    leave = i
        if leave is None:
            raise ArithmeticError("LP unbounded; capacities should prevent this")
        piv = tab[leave][enter]
        tab[leave] = [v / piv for v in tab[leave]]
        for i in range(m):
            if i != leave and tab[i][enter] != 0:
                f = tab[i][enter]
                tab[i] = [vi - f * vl for vi, vl in zip(tab[i], tab[leave])]
        if obj[enter] != 0:
            f = obj[enter]
            obj = [vo - f * vl for vo, vl in zip(obj, tab[leave])]
        basis[leave] = enter


def policy_value(inst: SmallInstance, gammas: GammaTable) -> float:
    """Exact expected reward R_1(c) of the coefficient-threshold policy.

    At every state the policy serves an arriving patron from the
    compatible stocked class with the smallest next-period coefficient,
    if and only if the patron's reward is at least that coefficient.
    """
    if gammas.horizon != inst.horizon:
        raise ValueError("gamma table horizon does not match the instance")
    inst.guard()
    shape = inst.grid_shape
    r_next = np.zeros(shape)
    for t in range(inst.horizon, 0, -1):
        gcol = gammas.col(t + 1)
        r = r_next.copy()
        for j, A_j in enumerate(inst.compat):
            lam = inst.lambdas[j]
            if lam == 0.0:
                continue
            elig = sorted(
                (a for a in A_j if inst.capacities[a] > 0),
                key=lambda a: (gcol[a], a),
            )
            if not elig:
                continue
            chosen = np.full(shape, -1, dtype=np.int64)
            for a in elig:
                dst = [slice(None)] * len(shape)
                dst[a] = slice(1, None)
                mask = np.zeros(shape, dtype=bool)
                mask[tuple(dst)] = True
                mask &= chosen < 0
                chosen[mask] = a
            for a in elig:
                if inst.rewards[j] < gcol[a]:
                    continue
                serve = chosen == a
                if serve.any():
                    shifted = _shift_down(r_next, a)
                    r[serve] += lam * (inst.rewards[j] + shifted[serve] - r_next[serve])
        r_next = r
    return float(r_next[tuple(inst.capacities)])


def approx_value_full(inst: SmallInstance) -> float:
    """H_1 at the starting inventory, for the bound chain tests."""
    g = inst.gammas()
    return float(np.dot(g.col(1), np.asarray(inst.capacities, dtype=float)))


# --- randomized instance generation (dyadic parameters) ---------------------

def random_library_instance(rng: np.random.Generator, max_branches: int = 3,
                            max_copies: int = 8, max_horizon: int = 10) -> SmallInstance:
    """Random branch/pool instance with exactly representable parameters."""
    B = int(rng.integers(1, max_branches + 1))
    n = 2 * B
    caps = rng.multinomial(int(rng.integers(1, max_copies + 1)), np.full(n, 1.0 / n))
    lam_units = rng.multinomial(int(rng.integers(1, 65)), np.full(n, 1.0 / n))
    lam = lam_units / 64.0
    if rng.random() < 0.5:
        rewards = np.ones(n)
    else:
        rewards = rng.integers(0, 33, size=n) / 32.0
    T = int(rng.integers(1, max_horizon + 1))
    return library_instance(B, caps, lam, rewards, T)


def random_compat_instance(rng: np.random.Generator, max_patrons: int = 3,
                           max_classes: int = 3, max_horizon: int = 10) -> SmallInstance:
    """Random instance with arbitrary non-empty compatibility sets."""
    m = int(rng.integers(1, max_patrons + 1))
    n = int(rng.integers(1, max_classes + 1))
    caps = tuple(int(c) for c in rng.integers(0, 5, size=n))
    lam_units = rng.multinomial(int(rng.integers(1, 65)), np.full(m, 1.0 / m))
    lam = tuple(float(u) / 64.0 for u in lam_units)
    rewards = tuple(float(k) / 32.0 for k in rng.integers(0, 33, size=m))
    compat = []
    for _ in range(m):
        size = int(rng.integers(1, n + 1))
        compat.append(tuple(sorted(rng.choice(n, size=size, replace=False).tolist())))
    T = int(rng.integers(1, max_horizon + 1))
    return SmallInstance(
        capacities=caps, lambdas=lam, rewards=rewards,
        compat=tuple(compat), horizon=T,
    )


# --- instance files ----------------------------------------------------------

def instance_to_dict(inst: SmallInstance) -> dict:
    return {
        "horizon": inst.horizon,
        "copy_classes": [{"capacity": c} for c in inst.capacities],
        "patron_classes": [
            {"rate": l, "reward": r, "compatible": list(A_j)}
            for l, r, A_j in zip(inst.lambdas, inst.rewards, inst.compat)
        ],
    }


def instance_from_dict(obj: dict) -> SmallInstance:
    unknown = set(obj) - {"horizon", "copy_classes", "patron_classes"}
    if unknown:
        raise SchemaError(f"SmallInstance: unknown fields {sorted(unknown)}")
    for need in ("horizon", "copy_classes", "patron_classes"):
        if need not in obj:
            raise SchemaError(f"SmallInstance: missing field {need}")
    caps = []
    for k, c in enumerate(obj["copy_classes"]):
        if set(c) != {"capacity"}:
            raise SchemaError(f"SmallInstance.copy_classes[{k}]: expected only 'capacity'")
        caps.append(int(c["capacity"]))
    lams, rewards, compat = [], [], []
    for k, p in enumerate(obj["patron_classes"]):
        if set(p) - {"rate", "reward", "compatible"}:
            raise SchemaError(f"SmallInstance.patron_classes[{k}]: unknown fields")
        lams.append(float(p["rate"]))
        rewards.append(float(p.get("reward", 1.0)))
        compat.append(tuple(int(a) for a in p["compatible"]))
    return SmallInstance(
        capacities=tuple(caps), lambdas=tuple(lams), rewards=tuple(rewards),
        compat=tuple(compat), horizon=int(obj["horizon"]),
    )


def load_instance(path: str | Path) -> SmallInstance:
    return instance_from_dict(json.loads(Path(path).read_text()))


def save_instance(inst: SmallInstance, path: str | Path) -> None:
    Path(path).write_text(json.dumps(instance_to_dict(inst), indent=1) + "\n")
