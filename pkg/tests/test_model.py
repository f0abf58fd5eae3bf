"""Domain-type tests: compatibility, arrival rates, serialization."""

import json

import numpy as np
import pytest

from holdsim.errors import CalibrationOverflow, SchemaError
from holdsim.model import (
    Branch,
    CopyClass,
    Fulfillment,
    Mode,
    PatronClass,
    PolicySpec,
    Pool,
    Scenario,
    Title,
    arrival_rates,
    compatibility,
    load_scenario,
    policy_from_dict,
    policy_to_dict,
    save_scenario,
    scenario_from_dict,
    scenario_to_dict,
)


def small_scenario(**kw):
    defaults = dict(
        branches=(Branch(0.4, 0.25, "a"), Branch(0.2, 0.5, "b")),
        titles=(Title(0.5), Title(0.9)),
        inventory=np.array([[1, 2], [3, 0]]),
        loan_days=21,
        warmup_days=10,
        sim_days=50,
    )
    defaults.update(kw)
    return Scenario(**defaults)


def test_compatibility_browse():
    got = compatibility(PatronClass(0, Mode.BROWSE), 3)
    assert got == (CopyClass(0, Pool.RESERVE), CopyClass(0, Pool.OPEN))


def test_compatibility_hold_spans_branches():
    got = compatibility(PatronClass(0, Mode.HOLD), 3)
    assert got == tuple(CopyClass(i, Pool.OPEN) for i in range(3))


def test_compatibility_single_branch_hold():
    assert compatibility(PatronClass(0, Mode.HOLD), 1) == (CopyClass(0, Pool.OPEN),)


def test_compatibility_separation_property():
    for B in (1, 2, 5):
        for j_idx in range(2 * B):
            j = PatronClass.from_index(j_idx)
            for c in compatibility(j, B):
                if j.mode == Mode.HOLD:
                    assert c.pool == Pool.OPEN
                else:
                    assert c.branch == j.branch


def test_arrival_rates_formula():
    s = small_scenario()
    lam = arrival_rates(s).lam
    # title 0 (d=0.5), branch 0 (p=0.4, h=0.25)
    assert lam[0, 1] == pytest.approx(0.05)  # hold
    assert lam[0, 0] == pytest.approx(0.15)  # browse
    # split sums to scale*d*p for every (branch, title)
    p = s.demand_sizes()
    d = s.desirabilities()
    totals = lam[:, 0::2] + lam[:, 1::2]
    assert np.allclose(totals, d[:, None] * p[None, :])


def test_arrival_rates_zero_hold_fraction():
    s = small_scenario(branches=(Branch(0.4, 0.0, "a"), Branch(0.2, 0.5, "b")))
    lam = arrival_rates(s).lam
    assert (lam[:, 1] == 0).all()


def test_calibration_overflow():
    with pytest.raises(CalibrationOverflow):
        small_scenario(
            branches=(Branch(1.0, 0.5, ""), Branch(1.0, 0.5, "")),
            titles=(Title(1.0), Title(0.5)),
            calibration_scale=3.0,
        )


def test_scenario_rejects_unstocked_title():
    with pytest.raises(ValueError, match="zero system-wide"):
        small_scenario(inventory=np.array([[1, 0], [3, 0]]))


def test_scenario_roundtrip_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    branches = tuple(
        Branch(float(rng.uniform(0.01, 0.6)), float(rng.uniform(0, 1)), f"b{i}")
        for i in range(4)
    )
    titles = tuple(Title(float(rng.uniform(0.01, 0.9))) for _ in range(6))
    s = Scenario(
        branches=branches, titles=titles,
        inventory=rng.integers(1, 4, size=(4, 6)),
        calibration_scale=float(rng.uniform(0.5, 1.0)),
    )
    path = tmp_path / "s.json"
    save_scenario(s, path)
    s2 = load_scenario(path)
    assert scenario_to_dict(s) == scenario_to_dict(s2)
    for b, b2 in zip(s.branches, s2.branches):
        assert b.demand_size == b2.demand_size  # bit-exact floats
        assert b.hold_fraction == b2.hold_fraction


def test_scenario_rejects_unknown_fields():
    obj = scenario_to_dict(small_scenario())
    obj["surprise"] = 1
    with pytest.raises(SchemaError, match="surprise"):
        scenario_from_dict(obj)
    obj2 = scenario_to_dict(small_scenario())
    obj2["branches"][0]["zip_code"] = "10027"
    with pytest.raises(SchemaError):
        scenario_from_dict(obj2)


def test_policy_clamps_beta():
    p = PolicySpec(beta=(-0.5, 1.5, 0.25))
    assert p.beta == (0.0, 1.0, 0.25)


def test_policy_tier_requirements():
    with pytest.raises(ValueError):
        PolicySpec(beta=(0.5,), fulfillment=Fulfillment.TIERED)
    with pytest.raises(ValueError):
        PolicySpec(beta=(0.5,), tier_assignment=(1,))
    p = PolicySpec(beta=(0.5, 0.5), fulfillment=Fulfillment.TIERED,
                   tier_assignment=(1, 3))
    assert policy_from_dict(policy_to_dict(p)) == p


def test_policy_rejects_unknown_fields():
    obj = policy_to_dict(PolicySpec(beta=(0.1,)))
    obj["rank"] = 2
    with pytest.raises(SchemaError):
        policy_from_dict(obj)


def test_scenario_json_is_single_object(tmp_path):
    path = tmp_path / "s.json"
    save_scenario(small_scenario(), path)
    obj = json.loads(path.read_text())
    assert isinstance(obj, dict)
    assert set(obj) == {"branches", "titles", "inventory", "loan_days",
                        "warmup_days", "sim_days", "calibration_scale"}
