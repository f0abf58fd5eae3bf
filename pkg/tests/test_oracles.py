"""Exact-solver tests: DP, LP bound, policy value, and the bound chain."""

import numpy as np
import pytest

from holdsim.errors import StateSpaceTooLarge
from holdsim.oracles import (
    SmallInstance,
    approx_value_full,
    dp_value,
    instance_from_dict,
    instance_to_dict,
    library_instance,
    lp_bound,
    lp_bound_exact,
    policy_value,
    random_compat_instance,
    random_library_instance,
    solve_dp,
    solve_dp_reference,
)

TOL = 1e-9


def single_class(capacity, lambdas, rewards, T):
    m = len(lambdas)
    return SmallInstance(
        capacities=(capacity,),
        lambdas=tuple(lambdas),
        rewards=tuple(rewards),
        compat=((0,),) * m,
        horizon=T,
    )


def test_dp_one_period_two_patrons():
    # One copy, one period: V_1 = P(any arrival) * 1 = 0.5 + 0.4.
    inst = single_class(1, (0.5, 0.4), (1.0, 1.0), 1)
    assert dp_value(inst) == pytest.approx(0.9, abs=TOL)


def test_dp_two_periods_geometric():
    # V_1 = P(at least one arrival in 2 periods) = 1 - 0.5^2.
    inst = single_class(1, (0.5,), (1.0,), 2)
    assert dp_value(inst) == pytest.approx(0.75, abs=TOL)


def test_dp_zero_inventory_boundary():
    inst = single_class(0, (0.5,), (1.0,), 3)
    assert dp_value(inst) == 0.0


def test_dp_forms_agree():
    rng = np.random.default_rng(7)
    for _ in range(60):
        inst = random_library_instance(rng)
        a = solve_dp(inst)
        b = solve_dp_reference(inst)
        for t in range(1, inst.horizon + 2):
            assert np.allclose(a.tables[t - 1], b.tables[t - 1], atol=TOL)


def test_dp_monotone_in_inventory_and_time():
    rng = np.random.default_rng(11)
    for _ in range(25):
        inst = random_library_instance(rng)
        vt = solve_dp(inst)
        for t in range(1, inst.horizon + 1):
            grid = vt.tables[t - 1]
            nxt = vt.tables[t]
            assert (grid >= nxt - TOL).all()  # non-increasing in t
            for a in range(len(inst.capacities)):
                if inst.capacities[a] == 0:
                    continue
                hi = [slice(None)] * grid.ndim
                lo = [slice(None)] * grid.ndim
                hi[a] = slice(1, None)
                lo[a] = slice(0, -1)
                assert (grid[tuple(hi)] >= grid[tuple(lo)] - TOL).all()


def test_state_space_guard():
    inst = SmallInstance(
        capacities=(8, 8, 8, 8, 8, 8, 8, 8),
        lambdas=(0.1,), rewards=(1.0,), compat=((0,),), horizon=12,
    )
    with pytest.raises(StateSpaceTooLarge):
        solve_dp(inst)


def test_lp_single_patron_min_of_budget_and_capacity():
    # T*lambda = 3 against capacity 2: optimum min(3, 2) = 2.
    inst = single_class(2, (0.5,), (1.0,), 6)
    assert lp_bound(inst) == pytest.approx(2.0, abs=TOL)


def test_lp_equals_total_demand_when_uncapped():
    inst = single_class(1, (0.5, 0.4), (1.0, 1.0), 1)
    assert lp_bound(inst) == pytest.approx(0.9, abs=TOL)


def test_lp_zero_demand():
    inst = single_class(2, (0.0,), (1.0,), 4)
    assert lp_bound(inst) == 0.0


def test_lp_priority_matters_under_scarcity():
    # Two patrons share one copy; the LP routes it to the higher reward.
    inst = SmallInstance(
        capacities=(1,), lambdas=(0.5, 0.5), rewards=(0.25, 1.0),
        compat=((0,), (0,)), horizon=4,
    )
    # budget each = 2; capacity 1 goes to reward 1, remainder none.
    assert lp_bound(inst) == pytest.approx(1.0, abs=TOL)


def test_lp_rerouting_needed():
    # The high-reward patron is routed to class 0 first; the low-reward
    # patron only fits if that unit is rerouted to class 1.
    inst = SmallInstance(
        capacities=(1, 1),
        lambdas=(0.125, 0.125),
        rewards=(0.5, 1.0),
        compat=((0,), (0, 1)),
        horizon=8,
    )
    # budgets 1 each: reward-1 patron serves 1 unit, reroutable to class
    # 1, freeing class 0 for the reward-0.5 patron -> 1*1 + 0.5*1.
    assert lp_bound(inst) == pytest.approx(1.5, abs=TOL)


def test_lp_matches_exact_simplex():
    rng = np.random.default_rng(3)
    for _ in range(150):
        inst = random_compat_instance(rng)
        assert lp_bound(inst) == pytest.approx(float(lp_bound_exact(inst)), abs=1e-12)


def test_lp_upper_bounds_dp():
    rng = np.random.default_rng(5)
    for _ in range(120):
        inst = random_library_instance(rng)
        assert lp_bound(inst) >= dp_value(inst) - TOL


def test_policy_value_accept_always_when_uniform():
    inst = single_class(1, (0.5,), (1.0,), 2)
    r1 = policy_value(inst, inst.gammas())
    assert r1 == pytest.approx(0.75, abs=TOL)  # matches the DP here


def test_policy_value_zero_inventory():
    inst = single_class(0, (0.5,), (1.0,), 2)
    assert policy_value(inst, inst.gammas()) == 0.0


def test_bound_chain_on_random_batch():
    rng = np.random.default_rng(13)
    for _ in range(120):
        inst = random_library_instance(rng)
        v1 = dp_value(inst)
        lp = lp_bound(inst)
        h1 = approx_value_full(inst)
        r1 = policy_value(inst, inst.gammas())
        assert lp >= v1 - TOL
        assert 2.0 * h1 >= lp - TOL
        assert r1 >= 0.5 * v1 - TOL


def test_instance_roundtrip_and_schema():
    rng = np.random.default_rng(17)
    inst = random_compat_instance(rng)
    again = instance_from_dict(instance_to_dict(inst))
    assert again == inst
    bad = instance_to_dict(inst)
    bad["extra"] = 1
    with pytest.raises(Exception):
        instance_from_dict(bad)


def test_library_instance_structure():
    inst = library_instance(2, (1, 1, 1, 1), (0.1, 0.1, 0.1, 0.1), (1, 1, 1, 1), 3)
    # browse at branch 0 -> its two pools; hold -> all open pools
    assert inst.compat[0] == (0, 1)
    assert inst.compat[1] == (1, 3)
    assert inst.compat[3] == (1, 3)
