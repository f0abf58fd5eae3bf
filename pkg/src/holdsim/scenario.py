"""Synthetic scenario generation.

Stands in for confidential circulation-log estimates: branch demand
sizes are uniform, hold fractions are rank-coupled to a synthetic
income score, title desirabilities follow a Beta distribution, and copy
counts are Poisson. Defaults keep per-title daily request mass well
under 1, the regime the fulfillment guarantees are stated for (and
where real systems sit: tens of daily checkouts spread over thousands
of titles).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import EmptyScenario, SchemaError
from .model import Branch, Scenario, Title

HOLD_FRACTION_LOW = 0.10
HOLD_FRACTION_HIGH = 0.60


@dataclass(frozen=True)
class GeneratorConfig:
    branch_count: int = 50
    title_count: int = 500
    seed: int = 2024
    demand_dist: tuple[float, float] = (0.04, 0.16)  # (low, high) for demand size
    hold_corr: float = 0.6
    desirability_shape: tuple[float, float] = (1.3, 11.0)
    copies_mean: float = 1.2
    availability_min_branches: int = 20

    def __post_init__(self):
        lo, hi = self.demand_dist
        if not 0 < lo <= hi <= 1:
            raise ValueError("demand_dist bounds must satisfy 0 < low <= high <= 1")
        if not -1.0 <= self.hold_corr <= 1.0:
            raise ValueError("hold_corr must be in [-1, 1]")
        a, b = self.desirability_shape
        if a <= 0 or b <= 0:
            raise ValueError("desirability_shape parameters must be positive")
        if self.copies_mean <= 0:
            raise ValueError("copies_mean must be positive")
        if self.branch_count < 1 or self.title_count < 1:
            raise ValueError("branch_count and title_count must be positive")
        if self.availability_min_branches < 1:
            raise ValueError("availability_min_branches must be at least 1")


def default_config() -> GeneratorConfig:
    """The shipped desk-scale scenario: 50 branches, 500 titles."""
    return GeneratorConfig()


def nypl_echo_config() -> GeneratorConfig:
    """A scenario echoing the production scale this system targets:
    84 branches, ~3.8k widely held titles, ~130k copies."""
    return GeneratorConfig(
        branch_count=84,
        title_count=3809,
        seed=1895,
        copies_mean=0.42,
    )


def _norm_cdf(z: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.vectorize(math.erf)(z / math.sqrt(2.0)))


def generate(config: GeneratorConfig) -> Scenario:
    """Deterministically generate a Scenario from the config and seed.

    Titles stocked at fewer than ``availability_min_branches`` branches
    are pruned; branch labels carry the synthetic income quartile.
    """
    rng = np.random.default_rng(config.seed)
    B = config.branch_count
    lo, hi = config.demand_dist
    p = rng.uniform(lo, hi, size=B)

    income = rng.normal(size=B)
    noise = rng.normal(size=B)
    rho = config.hold_corr
    z = rho * income + math.sqrt(max(0.0, 1.0 - rho * rho)) * noise
    h = HOLD_FRACTION_LOW + (HOLD_FRACTION_HIGH - HOLD_FRACTION_LOW) * _norm_cdf(z)

    quartile = np.searchsorted(
        np.quantile(income, [0.25, 0.5, 0.75]), income, side="left"
    )
    branches = tuple(
        Branch(float(p[i]), float(h[i]), f"income_q{int(quartile[i]) + 1}")
        for i in range(B)
    )

    a, b = config.desirability_shape
    d = rng.beta(a, b, size=config.title_count)
    d = np.clip(d, 1e-9, 1.0)

    copies = rng.poisson(config.copies_mean, size=(B, config.title_count))
    stocked_branches = (copies > 0).sum(axis=0)
    keep = np.nonzero(stocked_branches >= config.availability_min_branches)[0]
    if keep.size == 0:
        raise EmptyScenario(
            f"no title is stocked at {config.availability_min_branches}+ branches"
        )

    titles = tuple(Title(float(d[l])) for l in keep)
    return Scenario(
        branches=branches,
        titles=titles,
        inventory=copies[:, keep],
    )


# --- config files -------------------------------------------------------------

_FIELDS = {
    "branch_count", "title_count", "seed", "demand_dist", "hold_corr",
    "desirability_shape", "copies_mean", "availability_min_branches",
}


def config_to_dict(c: GeneratorConfig) -> dict:
    return {
        "branch_count": c.branch_count,
        "title_count": c.title_count,
        "seed": c.seed,
        "demand_dist": {"low": c.demand_dist[0], "high": c.demand_dist[1]},
        "hold_corr": c.hold_corr,
        "desirability_shape": list(c.desirability_shape),
        "copies_mean": c.copies_mean,
        "availability_min_branches": c.availability_min_branches,
    }


def config_from_dict(obj: dict) -> GeneratorConfig:
    unknown = set(obj) - _FIELDS
    if unknown:
        raise SchemaError(f"GeneratorConfig: unknown fields {sorted(unknown)}")
    kwargs: dict = {}
    if "demand_dist" in obj:
        dd = obj["demand_dist"]
        if set(dd) != {"low", "high"}:
            raise SchemaError("GeneratorConfig.demand_dist needs exactly low/high")
        kwargs["demand_dist"] = (dd["low"], dd["high"])
    if "desirability_shape" in obj:
        kwargs["desirability_shape"] = tuple(obj["desirability_shape"])
    for key in ("branch_count", "title_count", "seed", "hold_corr",
                "copies_mean", "availability_min_branches"):
        if key in obj:
            kwargs[key] = obj[key]
    return GeneratorConfig(**kwargs)


def load_config(path: str | Path) -> GeneratorConfig:
    return config_from_dict(json.loads(Path(path).read_text()))


def save_config(c: GeneratorConfig, path: str | Path) -> None:
    Path(path).write_text(json.dumps(config_to_dict(c), indent=1) + "\n")
