"""Domain types for the holds system: branches, titles, copy and patron
classes, scenarios, and policies.

Index conventions used everywhere downstream:

* branches and titles are dense 0-based integers;
* copy class ``a = 2 * branch + pool`` with pool RESERVE=0, OPEN=1;
* patron class ``j = 2 * branch + mode`` with mode BROWSE=0, HOLD=1.

All types are immutable after construction and safe to share across
parallel workers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path

import numpy as np

from .errors import CalibrationOverflow, SchemaError


class Pool(IntEnum):
    RESERVE = 0
    OPEN = 1


class Mode(IntEnum):
    BROWSE = 0
    HOLD = 1


@dataclass(frozen=True)
class CopyClass:
    """A (branch, pool) pair; the unit inventory is tracked per class."""

    branch: int
    pool: Pool

    @property
    def index(self) -> int:
        return 2 * self.branch + int(self.pool)

    @staticmethod
    def from_index(a: int) -> "CopyClass":
        return CopyClass(a // 2, Pool(a % 2))


@dataclass(frozen=True)
class PatronClass:
    """A (branch, mode) pair; requests arrive per class per day."""

    branch: int
    mode: Mode

    @property
    def index(self) -> int:
        return 2 * self.branch + int(self.mode)

    @staticmethod
    def from_index(j: int) -> "PatronClass":
        return PatronClass(j // 2, Mode(j % 2))


def compatibility(j: PatronClass, branch_count: int) -> tuple[CopyClass, ...]:
    """Copy classes that may serve patron class ``j``.

    Browsers at a branch may use both that branch's pools; hold patrons
    may use the open pool of any branch, never a reserve pool.
    """
    if not 0 <= j.branch < branch_count:
        raise ValueError(f"branch {j.branch} out of range for {branch_count} branches")
    if j.mode == Mode.BROWSE:
        return (CopyClass(j.branch, Pool.RESERVE), CopyClass(j.branch, Pool.OPEN))
    return tuple(CopyClass(i, Pool.OPEN) for i in range(branch_count))


def compat_indices(j: int, branch_count: int) -> tuple[int, ...]:
    """compatibility() in flat-index form, for array-based callers."""
    pc = PatronClass.from_index(j)
    return tuple(c.index for c in compatibility(pc, branch_count))


@dataclass(frozen=True)
class Branch:
    demand_size: float
    hold_fraction: float
    label: str = ""


@dataclass(frozen=True)
class Title:
    desirability: float


@dataclass(frozen=True, eq=False)
class Scenario:
    """The simulator's world: branch and title parameters, starting copy
    counts, and timing constants.

    ``inventory[branch][title]`` is the total copy count before any
    reserve split. ``calibration_scale`` multiplies every arrival
    probability (0 is allowed and turns demand off entirely).
    """

    branches: tuple[Branch, ...]
    titles: tuple[Title, ...]
    inventory: np.ndarray
    loan_days: int = 21
    warmup_days: int = 100
    sim_days: int = 365
    calibration_scale: float = 1.0

    def __post_init__(self):
        inv = np.asarray(self.inventory, dtype=np.int64)
        inv.setflags(write=False)
        object.__setattr__(self, "inventory", inv)
        self._validate()

    def _validate(self) -> None:
        if not self.branches:
            raise ValueError("scenario needs at least one branch")
        if not self.titles:
            raise ValueError("scenario needs at least one title")
        for k, b in enumerate(self.branches):
            if not 0.0 < b.demand_size <= 1.0:
                raise ValueError(f"branch {k}: demand_size must be in (0,1]")
            if not 0.0 <= b.hold_fraction <= 1.0:
                raise ValueError(f"branch {k}: hold_fraction must be in [0,1]")
        for k, t in enumerate(self.titles):
            if not 0.0 < t.desirability <= 1.0:
                raise ValueError(f"title {k}: desirability must be in (0,1]")
        if self.inventory.shape != (len(self.branches), len(self.titles)):
            raise ValueError(
                f"inventory shape {self.inventory.shape} does not match "
                f"({len(self.branches)}, {len(self.titles)})"
            )
        if (self.inventory < 0).any():
            raise ValueError("inventory counts must be non-negative")
        unstocked = np.where(self.inventory.sum(axis=0) == 0)[0]
        if unstocked.size:
            raise ValueError(f"titles with zero system-wide copies: {unstocked.tolist()}")
        if self.loan_days < 1:
            raise ValueError("loan_days must be positive")
        if self.warmup_days < 0:
            raise ValueError("warmup_days must be non-negative")
        if self.sim_days < 1:
            raise ValueError("sim_days must be positive")
        if self.calibration_scale < 0:
            raise ValueError("calibration_scale must be non-negative")
        arrival_rates(self)  # raises CalibrationOverflow on bad scale

    @property
    def branch_count(self) -> int:
        return len(self.branches)

    @property
    def title_count(self) -> int:
        return len(self.titles)

    def demand_sizes(self) -> np.ndarray:
        return np.array([b.demand_size for b in self.branches])

    def hold_fractions(self) -> np.ndarray:
        return np.array([b.hold_fraction for b in self.branches])

    def desirabilities(self) -> np.ndarray:
        return np.array([t.desirability for t in self.titles])


@dataclass(frozen=True)
class ArrivalRates:
    """Per (title, patron class) daily request probabilities.

    ``lam[l, 2i + HOLD] = scale * d_l * p_i * h_i`` and
    ``lam[l, 2i + BROWSE] = scale * d_l * p_i * (1 - h_i)``.
    """

    lam: np.ndarray  # shape (title_count, 2 * branch_count)

    def __post_init__(self):
        self.lam.setflags(write=False)

    def for_title(self, l: int) -> np.ndarray:
        return self.lam[l]


def arrival_rates(scenario: Scenario) -> ArrivalRates:
    """Build the arrival-probability table, rejecting any rate above 1."""
    p = scenario.demand_sizes()
    h = scenario.hold_fractions()
    d = scenario.desirabilities()
    scale = scenario.calibration_scale
    per_class = np.empty(2 * scenario.branch_count)
    per_class[0::2] = p * (1.0 - h)
    per_class[1::2] = p * h
    lam = scale * d[:, None] * per_class[None, :]
    if (lam > 1.0).any():
        worst = float(lam.max())
        raise CalibrationOverflow(
            f"calibration_scale {scale} yields arrival probability {worst} > 1"
        )
    return ArrivalRates(lam=lam)


class Fulfillment:
    """Enumerated fulfillment method names used by PolicySpec."""

    NEAR_OPTIMAL = "NearOptimal"
    TIERED = "Tiered"
    RANDOM_AVAILABLE = "RandomAvailable"

    ALL = (NEAR_OPTIMAL, TIERED, RANDOM_AVAILABLE)


@dataclass(frozen=True)
class PolicySpec:
    """A candidate policy: per-branch reserve fractions plus the hold
    fulfillment method. Beta values outside [0,1] are clamped on load.
    """

    beta: tuple[float, ...]
    fulfillment: str = Fulfillment.NEAR_OPTIMAL
    tier_assignment: tuple[int, ...] | None = None
    local_first: bool = False

    def __post_init__(self):
        object.__setattr__(
            self, "beta", tuple(min(1.0, max(0.0, float(b))) for b in self.beta)
        )
        if self.fulfillment not in Fulfillment.ALL:
            raise ValueError(f"unknown fulfillment method {self.fulfillment!r}")
        if self.fulfillment == Fulfillment.TIERED:
            if self.tier_assignment is None:
                raise ValueError("Tiered fulfillment requires a tier_assignment")
            if len(self.tier_assignment) != len(self.beta):
                raise ValueError("tier_assignment length must match beta length")
            if any(t not in (1, 2, 3) for t in self.tier_assignment):
                raise ValueError("tiers must be 1, 2 or 3")
        elif self.tier_assignment is not None:
            raise ValueError("tier_assignment is only valid with Tiered fulfillment")


def uniform_policy(branch_count: int, beta: float,
                   fulfillment: str = Fulfillment.NEAR_OPTIMAL) -> PolicySpec:
    return PolicySpec(beta=(beta,) * branch_count, fulfillment=fulfillment)


# --- serialization ----------------------------------------------------------
#
# Scenarios and policies travel as a single JSON object with field names
# exactly matching the dataclasses; arrays are in index order. Unknown
# fields are rejected so that typos fail loudly.

def _check_fields(obj: dict, allowed: set[str], required: set[str], what: str) -> None:
    unknown = set(obj) - allowed
    if unknown:
        raise SchemaError(f"{what}: unknown fields {sorted(unknown)}")
    missing = required - set(obj)
    if missing:
        raise SchemaError(f"{what}: missing fields {sorted(missing)}")


def scenario_to_dict(s: Scenario) -> dict:
    return {
        "branches": [
            {"demand_size": b.demand_size, "hold_fraction": b.hold_fraction, "label": b.label}
            for b in s.branches
        ],
        "titles": [{"desirability": t.desirability} for t in s.titles],
        "inventory": s.inventory.tolist(),
        "loan_days": s.loan_days,
        "warmup_days": s.warmup_days,
        "sim_days": s.sim_days,
        "calibration_scale": s.calibration_scale,
    }


def scenario_from_dict(obj: dict) -> Scenario:
    _check_fields(
        obj,
        {"branches", "titles", "inventory", "loan_days", "warmup_days",
         "sim_days", "calibration_scale"},
        {"branches", "titles", "inventory"},
        "Scenario",
    )
    branches = []
    for k, b in enumerate(obj["branches"]):
        _check_fields(b, {"demand_size", "hold_fraction", "label"},
                      {"demand_size", "hold_fraction"}, f"Scenario.branches[{k}]")
        branches.append(Branch(b["demand_size"], b["hold_fraction"], b.get("label", "")))
    titles = []
    for k, t in enumerate(obj["titles"]):
        _check_fields(t, {"desirability"}, {"desirability"}, f"Scenario.titles[{k}]")
        titles.append(Title(t["desirability"]))
    return Scenario(
        branches=tuple(branches),
        titles=tuple(titles),
        inventory=np.array(obj["inventory"], dtype=np.int64),
        loan_days=obj.get("loan_days", 21),
        warmup_days=obj.get("warmup_days", 100),
        sim_days=obj.get("sim_days", 365),
        calibration_scale=obj.get("calibration_scale", 1.0),
    )


def policy_to_dict(p: PolicySpec) -> dict:
    out: dict = {"beta": list(p.beta), "fulfillment": p.fulfillment}
    if p.tier_assignment is not None:
        out["tier_assignment"] = list(p.tier_assignment)
    out["local_first"] = p.local_first
    return out


def policy_from_dict(obj: dict) -> PolicySpec:
    _check_fields(obj, {"beta", "fulfillment", "tier_assignment", "local_first"},
                  {"beta"}, "PolicySpec")
    tiers = obj.get("tier_assignment")
    return PolicySpec(
        beta=tuple(obj["beta"]),
        fulfillment=obj.get("fulfillment", Fulfillment.NEAR_OPTIMAL),
        tier_assignment=tuple(tiers) if tiers is not None else None,
        local_first=obj.get("local_first", False),
    )


def save_scenario(s: Scenario, path: str | Path) -> None:
    Path(path).write_text(json.dumps(scenario_to_dict(s), indent=1) + "\n")


def load_scenario(path: str | Path) -> Scenario:
    return scenario_from_dict(json.loads(Path(path).read_text()))


def save_policy(p: PolicySpec, path: str | Path) -> None:
    Path(path).write_text(json.dumps(policy_to_dict(p), indent=1) + "\n")


def load_policy(path: str | Path) -> PolicySpec:
    return policy_from_dict(json.loads(Path(path).read_text()))
