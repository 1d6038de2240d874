import numpy as np
import pytest
from hypothesis import given, strategies as st

from osfrl.envs import (CostParams, DemandModel, EnvSpec, amortize_costs, auction_env,
                        build_action_grid, decreasing_offsets, feasible_actions, inventory_env,
                        make_lower_bound_env, observe_counterfactual, purchase_inclusive_cost,
                        sample_demand, step_auction, step_backlogged, step_lost_sales)

COSTS_B = CostParams(o=2, b=10)
COSTS_L = CostParams(o=2, p=10)


def test_grid_sizes():
    assert build_action_grid(10, 0.05).A == 201
    g0 = build_action_grid(0, 1)
    assert g0.A == 1 and g0.levels[0] == 0.0
    assert build_action_grid(2 * 3, 0.05).A == 121


def test_grid_rejects_non_integral_ratio():
    with pytest.raises(ValueError):
        build_action_grid(10, 0.3)


def test_grid_levels_read_only():
    g = build_action_grid(1, 0.5)
    with pytest.raises(ValueError):
        g.levels[0] = 3.0


def test_feasible_actions():
    g = build_action_grid(10, 0.05)
    f = feasible_actions(4.52, g)
    assert f[0] == pytest.approx(4.55) and f[-1] == 10.0
    assert len(feasible_actions(-3, g)) == 201
    np.testing.assert_allclose(feasible_actions(10, g), [10.0])


def test_feasible_on_grid_point_is_inclusive():
    g = build_action_grid(10, 0.05)
    # 0.1 + 0.2 is not exactly 0.3 in binary; still on the grid
    assert feasible_actions(0.1 + 0.2, g)[0] == pytest.approx(0.3)


def test_sample_demand():
    model = DemandModel.uniform(decreasing_offsets(5))
    rng = np.random.default_rng(0)
    for _ in range(100):
        assert 4.5 <= sample_demand(1, model, rng) < 5.5
        assert 2.5 <= sample_demand(5, model, rng) < 3.5
    assert model.value(1, 0.0) == 4.5


def test_step_backlogged():
    out = step_backlogged(0, 5, 3, COSTS_B)
    assert (out.next_state, out.reward) == (2.0, -4.0)
    out = step_backlogged(0, 4, 4, COSTS_B)
    assert (out.next_state, out.reward) == (0.0, 0.0)
    out = step_backlogged(0, 3, 5, COSTS_B)
    assert (out.next_state, out.reward) == (-2.0, -20.0)


def test_step_lost_sales():
    out = step_lost_sales(0, 5, 3, COSTS_L)
    assert (out.next_state, out.reward) == (2.0, 26.0)
    out = step_lost_sales(0, 0, 3, COSTS_L)
    assert (out.next_state, out.reward) == (0.0, 0.0)
    out = step_lost_sales(0, 3, 5, COSTS_L)
    assert (out.next_state, out.reward) == (0.0, 30.0)
    # the true cost still charges the 2 lost units
    assert out.cost == 20.0


def test_lost_sales_observation_is_censored():
    out = step_lost_sales(0, 3, 5, COSTS_L, grid=build_action_grid(6, 1))
    assert out.observed._info == 3.0
    assert out.observed[2.0] == (20.0, 0.0)
    with pytest.raises(KeyError):
        out.observed[4.0]


@given(st.floats(0, 10), st.floats(0, 10), st.floats(0, 10))
def test_pseudo_reward_differs_from_true_cost_by_action_free_term(y1, y2, D):
    # -(reward) - cost = -p * D for every action, so policies compare identically
    spec = inventory_env("lost-sales", 1, [0.0], 10.0)
    r, _, c = spec.outcome(1, np.array([y1, y2]), D)
    np.testing.assert_allclose(-r - c, [-10 * D, -10 * D], atol=1e-9)


def test_amortize_examples():
    assert amortize_costs(COSTS_L, 3).stage(2) == (2.0, 0.0, 10.0, 0.0)
    out = amortize_costs(CostParams(o=2, p=10, c=1, salvage=1), 3)
    for h in (1, 2, 3):
        o, _, p, c = out.stage(h)
        assert (o, p, c) == (2.0, 9.0, 0.0)
    with pytest.raises(ValueError):
        amortize_costs(CostParams(o=0, p=1, c=2), 2)


@given(st.lists(st.floats(0, 6), min_size=3, max_size=3), st.lists(st.floats(0, 6), min_size=3, max_size=3),
       st.lists(st.floats(0, 4), min_size=3, max_size=3), st.sampled_from(["backlogged", "lost-sales"]))
def test_amortization_preserves_policy_differences(path_a, path_b, demands, kind):
    raw = CostParams(o=2, b=10, p=10, c=(1.0, 2.0, 0.5), salvage=0.5)
    amort = amortize_costs(raw, 3, kind)
    diff_raw = purchase_inclusive_cost(kind, raw, 0, path_a, demands) - purchase_inclusive_cost(kind, raw, 0, path_b, demands)
    diff_am = purchase_inclusive_cost(kind, amort, 0, path_a, demands) - purchase_inclusive_cost(kind, amort, 0, path_b, demands)
    assert diff_raw == pytest.approx(diff_am, abs=1e-10)


def test_amortization_constant_is_purchase_of_demand():
    raw = CostParams(o=2, b=10, c=(1.0, 2.0), salvage=0.0)
    amort = amortize_costs(raw, 2, "backlogged")
    path, demands = [3.0, 1.0], [2.5, 1.5]
    shift = purchase_inclusive_cost("backlogged", raw, 0, path, demands) - purchase_inclusive_cost("backlogged", amort, 0, path, demands)
    # sum_h c_h D_h - c_1 x_1 with salvage 0 and x_1 = 0
    assert shift == pytest.approx(1.0 * 2.5 + 2.0 * 1.5)


def test_spec_requires_amortized_costs():
    with pytest.raises(ValueError):
        EnvSpec("backlogged", 1, build_action_grid(1, 0.5), DemandModel.uniform([0.0]), CostParams(c=1))


def test_observe_counterfactual():
    spec = inventory_env("lost-sales", 1, [2.0], 10.0, step=1.0)
    assert observe_counterfactual(5, 3, 4.2, spec) == pytest.approx((30.0, 0.0))
    assert observe_counterfactual(5, 6, 4.2, spec) is None
    full = inventory_env("backlogged", 1, [2.0], 10.0, step=1.0)
    assert observe_counterfactual(2, 9, 4.0, full) == pytest.approx((-10.0, 5.0))


def test_auction_revenue():
    assert step_auction(3, [5, 4, 1]).reward == 4.0
    assert step_auction(3, [1, 2]).reward == 0.0
    assert step_auction(3, [5]).reward == 3.0


def test_auction_higher_side_observation():
    spec = auction_env(1)
    out = spec.step(1, 0.0, 0.5, np.array([0.9, 0.7, 0.2]))
    assert out.reward == pytest.approx(0.7)
    assert out.observed[0.8] == pytest.approx((0.8, 0.0))
    with pytest.raises(KeyError):
        out.observed[0.1]


def test_lower_bound_env():
    assert make_lower_bound_env(2, 100).demand.p_low == pytest.approx(0.6)
    assert make_lower_bound_env(2, 10000).demand.p_low == pytest.approx(0.51)
    with pytest.raises(ValueError):
        make_lower_bound_env(2, 4)
    env = make_lower_bound_env(3, 100)
    assert env.demand.support(3) == pytest.approx((1.3, 2.3))
    assert env.grid.max_level >= 2.3


def test_supports():
    back = inventory_env("backlogged", 1, [1.0], 4.0)
    lost = inventory_env("lost-sales", 1, [1.0], 4.0)
    assert back.supports("full") and back.supports("lower-one-sided") and back.supports("bandit")
    assert not lost.supports("full") and lost.supports("lower-one-sided")
    with pytest.raises(ValueError):
        lost.step(1, 0.0, 1.0, 1.5, feedback="full")
    with pytest.raises(ValueError):
        inventory_env("lost-sales", 1, [1.0], 4.0, feedback="full")


def test_bandit_observation_only_reveals_chosen():
    spec = inventory_env("backlogged", 1, [1.0], 4.0)
    out = spec.step(1, 0.0, 2.0, 1.5, feedback="bandit")
    assert len(out.observed) == 1
    with pytest.raises(LookupError):
        out.observed.evaluate(np.array([1.0]))
