"""Policy-engine tests: coefficients, decisions, rewards, tiers."""

import numpy as np
import pytest

from holdsim.errors import ZeroBaseline
from holdsim.fulfillment import (
    GammaTable,
    approx_value,
    compute_gammas,
    compute_gammas_library,
    decide_near_optimal,
    decide_tiered,
    derive_tiers,
    usage_rewards,
)
from holdsim.model import (
    Branch,
    CopyClass,
    Mode,
    PatronClass,
    Pool,
    Scenario,
    Title,
    compat_indices,
)
from holdsim.oracles import random_library_instance


def test_gamma_hand_recurrence():
    # One class, capacity 1, one patron lambda=0.5, r=1, T=2:
    # gamma(3)=0; gamma(2)=0.5; gamma(1)=0.5+0.5*(1-0.5)=0.75.
    gt = compute_gammas([0.5], [(0,)], [1], [1.0], 2)
    assert gt.col(3)[0] == 0.0
    assert gt.col(2)[0] == pytest.approx(0.5)
    assert gt.col(1)[0] == pytest.approx(0.75)


def test_gamma_zero_rates():
    gt = compute_gammas([0.0, 0.0], [(0,), (0, 1)], [2, 1], [1.0, 1.0], 5)
    assert (gt.gamma == 0).all()


def test_gamma_monotone_and_bounded():
    rng = np.random.default_rng(23)
    for _ in range(60):
        inst = random_library_instance(rng)
        gt = inst.gammas()
        for t in range(1, inst.horizon + 1):
            assert (gt.col(t) >= gt.col(t + 1) - 1e-12).all()
        # with rewards <= 1 and total rate <= 1, coefficients stay <= max reward
        assert (gt.gamma <= max(inst.rewards) + 1e-12).all()


def test_gamma_uniform_reward_cap():
    rng = np.random.default_rng(29)
    for _ in range(40):
        inst = random_library_instance(rng)
        if max(inst.rewards) != 1.0 or min(inst.rewards) != 1.0:
            continue
        assert (inst.gammas().gamma <= 1.0 + 1e-12).all()


def test_gamma_reward_scaling_doubles_table():
    rng = np.random.default_rng(31)
    for _ in range(30):
        inst = random_library_instance(rng)
        g1 = compute_gammas(inst.lambdas, inst.compat, inst.capacities,
                            inst.rewards, inst.horizon)
        g2 = compute_gammas(inst.lambdas, inst.compat, inst.capacities,
                            tuple(2 * r for r in inst.rewards), inst.horizon)
        assert (g2.gamma == 2.0 * g1.gamma).all()  # exact: scaling by 2 is lossless


def test_gamma_library_path_matches_general():
    rng = np.random.default_rng(37)
    for _ in range(60):
        inst = random_library_instance(rng)
        B = len(inst.capacities) // 2
        general = compute_gammas(inst.lambdas, inst.compat, inst.capacities,
                                 inst.rewards, inst.horizon)
        fast = compute_gammas_library(
            np.asarray(inst.lambdas), np.asarray(inst.capacities),
            np.asarray(inst.rewards), inst.horizon,
        )
        assert np.allclose(general.gamma, fast.gamma, atol=1e-12)


def test_approx_value():
    gt = compute_gammas([0.5], [(0,)], [1], [1.0], 2)
    assert approx_value(gt, [0], 1) == 0.0
    assert approx_value(gt, [1], 1) == pytest.approx(0.75)


def hand_table(cols_next, T=3):
    """GammaTable whose column at t=2 equals cols_next (for t=1 decisions)."""
    n = len(cols_next)
    gamma = np.zeros((n, T + 1))
    gamma[:, 1] = cols_next
    gamma[:, 0] = np.maximum(cols_next, gamma[:, 0])
    return GammaTable(gamma=gamma, capacities=np.ones(n, dtype=np.int64))


def test_decide_prefers_cheapest_class():
    # Two branches; hold patron sees open classes with gamma 0.3 and 0.6.
    gt = hand_table([0.9, 0.3, 0.9, 0.6])
    x = np.array([0, 1, 0, 1])
    got = decide_near_optimal(gt, x, 1, PatronClass(0, Mode.HOLD), [0.5] * 4)
    assert got == CopyClass(0, Pool.OPEN)


def test_decide_threshold_reject():
    gt = hand_table([0.9, 0.3, 0.9, 0.6])
    x = np.array([0, 1, 0, 1])
    got = decide_near_optimal(gt, x, 1, PatronClass(0, Mode.HOLD), [0.2] * 4)
    assert got is None


def test_decide_rejects_without_stock_and_respects_pools():
    gt = hand_table([0.0, 0.0, 0.0, 0.0])
    x = np.array([3, 0, 5, 0])  # only reserve stock anywhere
    assert decide_near_optimal(gt, x, 1, PatronClass(0, Mode.HOLD), [1.0] * 4) is None
    served = decide_near_optimal(gt, x, 1, PatronClass(1, Mode.BROWSE), [1.0] * 4)
    assert served == CopyClass(1, Pool.RESERVE)


def test_decide_uniform_rewards_never_rejects_with_stock():
    rng = np.random.default_rng(41)
    for _ in range(40):
        inst = random_library_instance(rng)
        if any(r != 1.0 for r in inst.rewards):
            continue
        B = len(inst.capacities) // 2
        gt = inst.gammas()
        x = np.array(inst.capacities)
        for j_idx in range(2 * B):
            if x[list(compat_indices(j_idx, B))].sum() == 0:
                continue
            j = PatronClass.from_index(j_idx)
            for t in range(1, inst.horizon + 1):
                got = decide_near_optimal(gt, x, t, j, inst.rewards)
                assert got is not None
                assert x[got.index] > 0


def test_usage_rewards_examples():
    s2 = Scenario(
        branches=(Branch(0.5, 0.3), Branch(0.5, 0.3)),
        titles=(Title(0.5),), inventory=np.array([[1], [1]]),
    )
    r = usage_rewards(s2, np.array([100.0, 100.0]))
    assert r.max() == 1.0
    assert np.allclose(r, 1.0)

    s3 = Scenario(
        branches=(Branch(0.8, 0.3), Branch(0.2, 0.3)),
        titles=(Title(0.5),), inventory=np.array([[1], [1]]),
    )
    r = usage_rewards(s3, np.array([100.0, 100.0]))
    assert r[0] / r[2] == pytest.approx(4.0)  # browse classes of the two branches

    s1 = Scenario(
        branches=(Branch(0.8, 0.3),), titles=(Title(0.5),),
        inventory=np.array([[2]]),
    )
    assert (usage_rewards(s1, np.array([55.0])) == 1.0).all()

    with pytest.raises(ZeroBaseline):
        usage_rewards(s2, np.array([100.0, 0.0]))


def title_table(B, open_gamma_t1):
    gamma = np.zeros((2 * B, 4))
    gamma[1::2, 0] = open_gamma_t1
    return GammaTable(gamma=gamma, capacities=np.ones(2 * B, dtype=np.int64))


def test_derive_tiers_indicator_average():
    # Branch 0 sees per-title (stock, gamma): (2, 0.4), (0, 0.9), (1, 0.2)
    # -> average (0.4 + 0.2) / 2 = 0.3, stockless title excluded.
    B = 3
    tables = [
        title_table(B, [0.4, 0.0, 0.0]),
        title_table(B, [0.9, 0.0, 0.0]),
        title_table(B, [0.2, 0.0, 0.0]),
    ]
    open_stock = np.array([[2, 0, 1], [1, 1, 1], [1, 1, 1]])
    ta = derive_tiers(tables, open_stock)
    assert ta.avg_unit_reward[0] == pytest.approx(0.3)


def test_derive_tiers_balanced_sizes():
    rng = np.random.default_rng(43)
    for B, want in ((84, (28, 28, 28)), (8, (3, 3, 2)), (7, (3, 2, 2))):
        vals = rng.uniform(0, 1, size=B)
        tables = [title_table(B, vals)]
        stock = np.ones((B, 1), dtype=int)
        ta = derive_tiers(tables, stock)
        sizes = tuple(int(np.sum(np.array(ta.tier) == lvl)) for lvl in (1, 2, 3))
        assert sizes == want
        # ascending averages fill tier 1 first
        order = np.argsort(vals)
        assert all(ta.tier[i] == 1 for i in order[: want[0]])


def test_derive_tiers_stockless_branch_sorts_last():
    B = 3
    tables = [title_table(B, [0.9, 0.1, 0.5])]
    stock = np.array([[1], [1], [0]])
    ta = derive_tiers(tables, stock)
    assert ta.tier[2] == 3
    assert ta.avg_unit_reward[2] == np.inf


def test_derive_tiers_permutation_equivariant():
    rng = np.random.default_rng(47)
    B = 9
    vals = rng.uniform(0, 1, size=B)  # generic: no exact ties
    stock = (rng.random((B, 5)) < 0.7).astype(int)
    stock[:, 0] = 1
    tables = [title_table(B, rng.uniform(0, 1, size=B)) for _ in range(5)]
    base = derive_tiers(tables, stock)
    perm = rng.permutation(B)
    tables_p = []
    for gt in tables:
        gamma = np.zeros_like(gt.gamma)
        gamma[1::2] = gt.gamma[1::2][perm]
        gamma[0::2] = gt.gamma[0::2][perm]
        tables_p.append(GammaTable(gamma=gamma, capacities=gt.capacities))
    got = derive_tiers(tables_p, stock[perm])
    assert tuple(np.array(base.tier)[perm]) == got.tier


def tiers_of(levels):
    from holdsim.fulfillment import TierAssignment

    return TierAssignment(tier=tuple(levels), avg_unit_reward=(0.0,) * len(levels))


def test_decide_tiered_falls_through_tiers():
    ta = tiers_of([1, 2, 3])
    x = np.array([0, 0, 0, 1, 0, 0])  # only branch 1 has an open copy
    got = decide_tiered(ta, x, PatronClass(0, Mode.HOLD))
    assert got == CopyClass(1, Pool.OPEN)


def test_decide_tiered_max_stock_within_tier():
    ta = tiers_of([1, 1, 2])
    x = np.array([0, 2, 0, 1, 0, 5])
    got = decide_tiered(ta, x, PatronClass(2, Mode.HOLD))
    assert got == CopyClass(0, Pool.OPEN)


def test_decide_tiered_reject_and_local_first():
    ta = tiers_of([1, 2, 3])
    empty = np.zeros(6, dtype=int)
    assert decide_tiered(ta, empty, PatronClass(0, Mode.HOLD)) is None
    x = np.array([0, 1, 0, 9, 0, 0])
    got = decide_tiered(ta, x, PatronClass(0, Mode.HOLD), local_first=False)
    assert got == CopyClass(0, Pool.OPEN)  # tier 1 branch also happens to be local
    got = decide_tiered(ta, x, PatronClass(1, Mode.HOLD), local_first=True)
    assert got == CopyClass(1, Pool.OPEN)
    got = decide_tiered(ta, x, PatronClass(1, Mode.HOLD), local_first=False)
    assert got == CopyClass(0, Pool.OPEN)
    with pytest.raises(ValueError):
        decide_tiered(ta, x, PatronClass(0, Mode.BROWSE))
