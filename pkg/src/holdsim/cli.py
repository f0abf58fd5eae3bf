"""Command-line entry point.

Subcommands cover the full pipeline: generate a synthetic scenario,
freeze baselines, simulate a policy, trace the Pareto frontier, derive
a deployable tier list, exercise the exact oracles, and run policy
comparisons. All randomness flows from --seed; worker count comes from
HOLDSIM_WORKERS (default: all cores) and never changes outputs.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .errors import HoldsimError, MissingBaseline
from .fulfillment import uniform_rewards, usage_rewards
from .model import (
    Fulfillment,
    PolicySpec,
    Scenario,
    load_policy,
    load_scenario,
    save_policy,
    save_scenario,
)
from .objectives import ObjectivePoint, collection_quality, evaluate
from .optimizer import SearchConfig, optimize, reevaluate_tiered, tierify_policy
from .oracles import approx_value_full, dp_value, load_instance, lp_bound, policy_value
from .scenario import default_config, generate, load_config, nypl_echo_config
from .simulator import (
    Baselines,
    SimConfig,
    SimMetrics,
    freeze_baselines,
    load_baselines,
    run,
    save_baselines,
)


def _write_metrics_csv(path: Path, scenario: Scenario, metrics: SimMetrics,
                       point: ObjectivePoint) -> None:
    cq = collection_quality(metrics.d_days, scenario.desirabilities())
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["branch", "label", "CO_browse", "CO_hold", "CQ",
                    "usage_ratio", "quality_ratio", "net_inflow"])
        for i, b in enumerate(scenario.branches):
            w.writerow([
                i, b.label,
                repr(float(metrics.co[i, 0])), repr(float(metrics.co[i, 1])),
                repr(float(cq[i])),
                repr(float(point.usage_ratio[i])),
                repr(float(point.quality_ratio[i])),
                repr(float(point.net_inflow[i])),
            ])


def _write_flows_csv(path: Path, metrics: SimMetrics) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["source", "destination", "weighted_count"])
        B = metrics.flow.shape[0]
        for s in range(B):
            for d in range(B):
                if metrics.flow[s, d] != 0.0:
                    w.writerow([s, d, repr(float(metrics.flow[s, d]))])


def _write_summary(path: Path, point: ObjectivePoint) -> None:
    path.write_text(json.dumps({
        "f": point.f,
        "g": point.g,
        "g_nash": point.g_nash,
        "rejected_holds": point.rejected_holds,
    }, indent=1) + "\n")


def _sim_config(args, baselines: Baselines | None) -> SimConfig:
    reps = args.reps
    seed = args.seed
    measure = getattr(args, "measure_days", None)
    if baselines is not None:
        if reps is None:
            reps = baselines.replications
        if seed is None:
            seed = baselines.master_seed
        if measure is None:
            measure = baselines.measure_days
    return SimConfig(
        replications=reps if reps is not None else 10,
        master_seed=seed if seed is not None else 0,
        measure_days=measure,
    )


def _policy_rewards(args, scenario: Scenario, policy: PolicySpec,
                    baselines: Baselines | None):
    if policy.fulfillment != Fulfillment.NEAR_OPTIMAL:
        return None
    if getattr(args, "uniform_rewards", False):
        return uniform_rewards(scenario.branch_count)
    if baselines is None:
        raise MissingBaseline(
            "NearOptimal simulation needs --baselines (or --uniform-rewards)"
        )
    return usage_rewards(scenario, baselines.baseline_CO)


def _load_baselines_arg(args) -> Baselines | None:
    path = getattr(args, "baselines", None)
    return load_baselines(path) if path else None


def cmd_gen_scenario(args) -> int:
    if args.config:
        config = load_config(args.config)
    elif args.preset == "nypl-echo":
        config = nypl_echo_config()
    else:
        config = default_config()
    s = generate(config)
    save_scenario(s, args.out)
    print(f"scenario: {s.branch_count} branches, {s.title_count} titles, "
          f"{int(s.inventory.sum())} copies -> {args.out}")
    return 0


def cmd_baseline(args) -> int:
    scenario = load_scenario(args.scenario)
    config = SimConfig(
        replications=args.reps if args.reps is not None else 10,
        master_seed=args.seed if args.seed is not None else 0,
        measure_days=args.measure_days,
    )
    base = freeze_baselines(scenario, config, workers=args.workers)
    save_baselines(base, args.out)
    print(f"baselines frozen over {base.measure_days} days x "
          f"{base.replications} reps (seed {base.master_seed}) -> {args.out}")
    return 0


def cmd_simulate(args) -> int:
    scenario = load_scenario(args.scenario)
    policy = load_policy(args.policy)
    if not args.baselines:
        raise MissingBaseline("simulate needs frozen baselines (--baselines)")
    baselines = load_baselines(args.baselines)
    config = _sim_config(args, baselines)
    rewards = _policy_rewards(args, scenario, policy, baselines)
    metrics = run(scenario, policy, config, rewards=rewards, workers=args.workers)
    point = evaluate(metrics, baselines, scenario)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_metrics_csv(out / "metrics.csv", scenario, metrics, point)
    _write_flows_csv(out / "flows.csv", metrics)
    _write_summary(out / "summary.json", point)
    print(f"f={point.f:.6f} g={point.g:.6f} g_nash={point.g_nash:.6f} "
          f"rejected_holds={point.rejected_holds:.1f}")
    return 0


def cmd_optimize(args) -> int:
    scenario = load_scenario(args.scenario)
    if not args.baselines:
        raise MissingBaseline("optimize needs frozen baselines (--baselines)")
    baselines = load_baselines(args.baselines)
    search = SearchConfig(
        batch_size=args.batch_size,
        iterations=args.iterations,
        seed=args.seed if args.seed is not None else 0,
        eval_replications=args.reps if args.reps is not None else 10,
    )
    result = optimize(scenario, baselines, search, workers=args.workers)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    entries = sorted(result.archive.entries, key=lambda e: (-e.f, e.g))
    with (out / "pareto.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        B = scenario.branch_count
        w.writerow([f"beta_{i}" for i in range(B)] + ["f", "g", "hypervolume_at_insertion"])
        for e in entries:
            w.writerow([repr(float(b)) for b in e.beta]
                       + [repr(e.f), repr(e.g), repr(e.hv_at_insertion)])
    for k, e in enumerate(entries):
        save_policy(PolicySpec(beta=e.beta, fulfillment=Fulfillment.NEAR_OPTIMAL),
                    out / f"policy_{k:03d}.json")
    print(f"archive: {len(entries)} frontier points from "
          f"{len(result.evaluations)} evaluations -> {out}")
    return 0


def cmd_tierify(args) -> int:
    scenario = load_scenario(args.scenario)
    policy = load_policy(args.policy)
    if policy.fulfillment != Fulfillment.NEAR_OPTIMAL:
        raise HoldsimError("tierify expects a NearOptimal policy as input")
    if not args.baselines:
        raise MissingBaseline("tierify needs frozen baselines (--baselines)")
    baselines = load_baselines(args.baselines)
    tiered = tierify_policy(scenario, policy.beta, baselines,
                            local_first=policy.local_first)
    save_policy(tiered, args.out)
    counts = [tiered.tier_assignment.count(level) for level in (1, 2, 3)]
    print(f"tiers derived (sizes {counts[0]}/{counts[1]}/{counts[2]}) -> {args.out}")
    return 0


def cmd_oracle(args) -> int:
    inst = load_instance(args.instance)
    v1 = dp_value(inst)
    lp = lp_bound(inst)
    h1 = approx_value_full(inst)
    r1 = policy_value(inst, inst.gammas())
    print(f"V_1={v1!r}")
    print(f"LP={lp!r}")
    print(f"H_1={h1!r}")
    print(f"R_1={r1!r}")
    print(f"R_1/V_1={r1 / v1 if v1 else float('nan')!r}")
    print(f"H_1/LP={h1 / lp if lp else float('nan')!r}")
    return 0


def cmd_compare(args) -> int:
    scenario = load_scenario(args.scenario)
    if not args.baselines:
        raise MissingBaseline("compare needs frozen baselines (--baselines)")
    baselines = load_baselines(args.baselines)
    config = _sim_config(args, baselines)
    B = scenario.branch_count

    policies: list[tuple[str, PolicySpec]] = []
    if args.canonical:
        balanced = tierify_policy(scenario, (0.5,) * B, baselines)
        policies += [
            ("historical_proxy",
             PolicySpec(beta=(0.0,) * B, fulfillment=Fulfillment.RANDOM_AVAILABLE)),
            ("nearopt_no_reserve",
             PolicySpec(beta=(0.0,) * B, fulfillment=Fulfillment.NEAR_OPTIMAL)),
            ("balanced_tiered", balanced),
            ("balanced_tiered_no_reserve",
             PolicySpec(beta=(0.0,) * B, fulfillment=Fulfillment.TIERED,
                        tier_assignment=balanced.tier_assignment)),
        ]
    for path in args.policy or []:
        policies.append((Path(path).stem, load_policy(path)))
    if len(policies) < 2:
        raise HoldsimError("compare needs at least two policies")

    rows = []
    for name, policy in policies:
        rewards = _policy_rewards(args, scenario, policy, baselines)
        metrics = run(scenario, policy, config, rewards=rewards, workers=args.workers)
        point = evaluate(metrics, baselines, scenario)
        rows.append((name, point.f, point.g, point.g_nash, point.rejected_holds))

    header = ("policy", "f", "g", "g_nash", "rejected_holds")
    print(f"{header[0]:<28} {header[1]:>9} {header[2]:>9} {header[3]:>9} {header[4]:>15}")
    for name, f, g, gn, rej in rows:
        print(f"{name:<28} {f:>9.4f} {g:>9.4f} {gn:>9.4f} {rej:>15.1f}")
    if args.out:
        with Path(args.out).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for name, f, g, gn, rej in rows:
                w.writerow([name, repr(f), repr(g), repr(gn), repr(rej)])
    return 0


def build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(
        prog="holdsim",
        description="Simulate and optimize multi-branch library holds policies.",
        epilog="Worker count: HOLDSIM_WORKERS or --workers (never affects outputs).",
    )
    sub = top.add_subparsers(dest="command", required=True)

    def common(p, scenario=True, baselines=True, simargs=True):
        if scenario:
            p.add_argument("--scenario", required=True, help="scenario JSON file")
        if baselines:
            p.add_argument("--baselines", help="frozen baselines JSON file")
        if simargs:
            p.add_argument("--reps", type=int, default=None,
                           help="replications (default: from baselines, else 10)")
            p.add_argument("--seed", type=int, default=None,
                           help="master seed (default: from baselines, else 0)")
            p.add_argument("--measure-days", type=int, default=None,
                           help="measured days after warm-up (default: from "
                                "baselines, else scenario sim_days)")
        p.add_argument("--workers", type=int, default=None,
                       help="worker processes (default: HOLDSIM_WORKERS or all cores)")

    p = sub.add_parser("gen-scenario", help="generate a synthetic scenario")
    p.add_argument("--config", help="GeneratorConfig JSON file")
    p.add_argument("--preset", choices=("desk", "nypl-echo"), default="desk")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_scenario)

    p = sub.add_parser("baseline", help="freeze the objective baselines")
    common(p, baselines=False)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("simulate", help="evaluate one policy")
    common(p)
    p.add_argument("--policy", required=True, help="PolicySpec JSON file")
    p.add_argument("--uniform-rewards", action="store_true",
                   help="use reward 1 for every patron class")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("optimize", help="trace the usage/experience Pareto frontier")
    common(p)
    p.add_argument("--iterations", type=int, default=100)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("tierify", help="derive the static tiered version of a policy")
    common(p, simargs=False)
    p.add_argument("--policy", required=True, help="NearOptimal PolicySpec JSON")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_tierify)

    p = sub.add_parser("oracle", help="exact values for a small instance")
    p.add_argument("--instance", required=True, help="SmallInstance JSON file")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("compare", help="evaluate several policies with shared seeds")
    common(p)
    p.add_argument("--policy", action="append", help="PolicySpec JSON (repeatable)")
    p.add_argument("--canonical", action="store_true",
                   help="run the four-way lever comparison")
    p.add_argument("--uniform-rewards", action="store_true",
                   help="use reward 1 for NearOptimal policies")
    p.add_argument("--out", help="CSV output path")
    p.set_defaults(func=cmd_compare)

    return top


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except HoldsimError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
