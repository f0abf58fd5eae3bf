"""Scalar objectives and per-branch diagnostics from simulation metrics.

Both objectives are ratios against frozen anchor runs: usage against the
no-reserve near-optimal run, collection quality against the all-reserve
run. With common random numbers the anchor policies evaluate to exactly
1 against their own baselines.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ZeroBaseline
from .model import Scenario
from .simulator import Baselines, RepMetrics, SimMetrics


@dataclass(frozen=True)
class ObjectivePoint:
    f: float
    g: float
    g_nash: float
    usage_ratio: np.ndarray
    quality_ratio: np.ndarray
    net_inflow: np.ndarray
    rejected_holds: float


def collection_quality(d_days: np.ndarray, desirability: np.ndarray) -> np.ndarray:
    """Per-branch desirability-weighted availability-days."""
    return d_days @ desirability


def usage_objective(metrics: SimMetrics, baseline_CO: np.ndarray,
                    p: np.ndarray) -> tuple[float, np.ndarray]:
    """Demand-weighted mean of per-branch checkout ratios."""
    co = np.asarray(baseline_CO, dtype=float)
    if (co <= 0).any():
        raise ZeroBaseline("usage baseline has a zero entry")
    ratio = metrics.co_total / co
    f = float(np.dot(p, ratio) / p.sum())
    return f, ratio


def browser_objective(metrics: SimMetrics, baseline_CQ: np.ndarray,
                      desirability: np.ndarray,
                      h: np.ndarray) -> tuple[float, float, np.ndarray]:
    """Browse-weighted mean and unweighted geometric mean of per-branch
    collection-quality ratios."""
    cq0 = np.asarray(baseline_CQ, dtype=float)
    if (cq0 <= 0).any():
        raise ZeroBaseline("quality baseline has a zero entry")
    cq = collection_quality(metrics.d_days, desirability)
    ratio = cq / cq0
    weights = 1.0 - np.asarray(h, dtype=float)
    if weights.sum() <= 0:
        raise ZeroBaseline("all branches have hold fraction 1; g is undefined")
    g = float(np.dot(weights, ratio) / weights.sum())
    if (ratio <= 0).any():
        g_nash = 0.0
    else:
        g_nash = float(math.exp(np.log(ratio).mean()))
    return g, g_nash, ratio


def net_inflow(flow: np.ndarray) -> np.ndarray:
    """Desirability-weighted inflow minus outflow per branch.

    The branch values sum to zero in exact arithmetic: every matrix
    entry enters once as inflow and once as outflow (see
    net_inflow_total for an exactly-cancelling evaluation).
    """
    f = np.asarray(flow, dtype=float)
    return f.sum(axis=0) - f.sum(axis=1)


def net_inflow_total(flow: np.ndarray) -> float:
    """The system-wide net inflow, summed exactly: identical terms with
    opposite signs cancel, so this is 0.0 whenever the flow matrix has a
    zero diagonal."""
    f = np.asarray(flow, dtype=float).ravel()
    return math.fsum(np.concatenate([f, -f]))


def evaluate(metrics: SimMetrics, baselines: Baselines,
             scenario: Scenario) -> ObjectivePoint:
    f, usage_ratio = usage_objective(metrics, baselines.baseline_CO,
                                     scenario.demand_sizes())
    g, g_nash, quality_ratio = browser_objective(
        metrics, baselines.baseline_CQ, scenario.desirabilities(),
        scenario.hold_fractions(),
    )
    return ObjectivePoint(
        f=f, g=g, g_nash=g_nash,
        usage_ratio=usage_ratio, quality_ratio=quality_ratio,
        net_inflow=net_inflow(metrics.flow),
        rejected_holds=metrics.rejected_holds,
    )


def _rep_view(rep: RepMetrics) -> SimMetrics:
    return SimMetrics(
        co=rep.co.astype(float), d_days=rep.d_days.astype(float),
        flow=rep.flow, flow_counts=rep.flow_counts.astype(float),
        rejected_holds=float(rep.rejected_holds), raw=[rep],
    )


def per_replication_objectives(metrics: SimMetrics, baselines: Baselines,
                               scenario: Scenario) -> list[tuple[float, float]]:
    """(f, g) per replication, against the frozen baselines; feeds
    standard-error estimates for policy comparisons."""
    out = []
    for rep in metrics.raw:
        view = _rep_view(rep)
        f, _ = usage_objective(view, baselines.baseline_CO, scenario.demand_sizes())
        g, _, _ = browser_objective(view, baselines.baseline_CQ,
                                    scenario.desirabilities(),
                                    scenario.hold_fractions())
        out.append((f, g))
    return out
