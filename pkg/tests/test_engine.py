import itertools
import math
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from famsynth import (
    ConcreteMC,
    NonConvergenceError,
    Realisation,
    Specification,
    Subfamily,
    UndefinedRewardError,
    all_realisations,
    build_quotient,
    exact_mc_probability,
    exact_mc_reward,
    induced_chain,
    instantiate,
    parse_spec,
    prob0_exists,
    prob1_forall,
    random_family,
    solve_mc,
    solve_mc_exact,
    solve_prob,
    solve_reward,
)
from famsynth.engine import SparseMDP, MdpAction, prob1_exists, prob0_forall
from conftest import R1, R2

ONE = frozenset({1})


def quotient_mdp(example1):
    model, _ = example1
    return build_quotient(model).restrict(Subfamily.full(model)).mdp


def brute_force_extremes(mdp, goal):
    """Independent oracle: enumerate every memoryless scheduler, evaluate its
    induced chain with exact rationals, return (min, max) at the initial."""
    best = None
    worst = None
    ranges = [range(len(acts)) for acts in mdp.actions]
    for combo in itertools.product(*ranges):
        rows = tuple(
            tuple((t, Fraction(p)) for t, p in mdp.actions[s][combo[s]].dist)
            for s in range(mdp.n_states))
        chain = ConcreteMC(mdp.n_states, mdp.initial, rows, None,
                           frozenset(range(mdp.n_states)), {})
        v = exact_mc_probability(chain, goal)[mdp.initial]
        best = v if best is None or v > best else best
        worst = v if worst is None or v < worst else worst
    return worst, best


def test_prob0_exists_on_worked_quotient(example1):
    mdp = quotient_mdp(example1)
    assert prob0_exists(mdp, ONE) == {0, 2, 3}


def test_prob0_exists_trivial_cases(example1):
    mdp = quotient_mdp(example1)
    assert prob0_exists(mdp, frozenset(range(4))) == frozenset()
    # an absorbing non-goal state avoids any goal set that excludes it
    loop = SparseMDP(2, 0, [[MdpAction(((1, 1.0),), None)],
                            [MdpAction(((1, 1.0),), None)]])
    assert 1 in prob0_exists(loop, frozenset({0}))


def test_prob1_forall_on_worked_quotient(example1):
    mdp = quotient_mdp(example1)
    assert prob1_forall(mdp, ONE) == {1}
    assert prob1_forall(mdp, frozenset(range(4))) == frozenset(range(4))


def test_prob1_forall_self_loop_goal():
    loop = SparseMDP(1, 0, [[MdpAction(((0, 1.0),), None)]])
    assert prob1_forall(loop, frozenset({0})) == {0}


def test_solve_prob_direct_step():
    mdp = SparseMDP(2, 0, [[MdpAction(((1, 1.0),), None)],
                           [MdpAction(((1, 1.0),), None)]])
    res = solve_prob(mdp, frozenset({1}), "max")
    assert res.at_initial == 1.0


def test_solve_prob_geometric_loop_sums_to_one():
    mdp = SparseMDP(2, 0, [[MdpAction(((0, 0.5), (1, 0.5)), None)],
                           [MdpAction(((1, 1.0),), None)]])
    for direction in ("max", "min"):
        res = solve_prob(mdp, frozenset({1}), direction)
        assert res.at_initial == 1.0  # pinned by qualitative analysis


def test_solve_prob_worked_quotient_matches_scheduler_enumeration(example1):
    mdp = quotient_mdp(example1)
    worst, best = brute_force_extremes(mdp, ONE)
    assert (worst, best) == (0, 1)
    assert solve_prob(mdp, ONE, "max").at_initial == pytest.approx(1.0, abs=1e-6)
    assert solve_prob(mdp, ONE, "min").at_initial == pytest.approx(0.0, abs=1e-6)


def test_solve_reward_one_step():
    mdp = SparseMDP(2, 0, [[MdpAction(((1, 1.0),), None)],
                           [MdpAction(((1, 1.0),), None)]],
                    rewards=[1.0, 0.0])
    res = solve_reward(mdp, frozenset({1}), "min")
    assert res.at_initial == pytest.approx(1.0, abs=1e-6)


def test_solve_reward_geometric():
    # x = 1 + x/2 solves to 2
    mdp = SparseMDP(2, 0, [[MdpAction(((0, 0.5), (1, 0.5)), None)],
                           [MdpAction(((1, 1.0),), None)]],
                    rewards=[1.0, 0.0])
    oracle = Fraction(1) / (1 - Fraction(1, 2))
    assert oracle == 2
    for direction in ("max", "min"):
        res = solve_reward(mdp, frozenset({1}), direction)
        assert res.at_initial == pytest.approx(2.0, abs=1e-6)


def test_solve_reward_all_zero_rewards():
    mdp = SparseMDP(2, 0, [[MdpAction(((1, 1.0),), None)],
                           [MdpAction(((1, 1.0),), None)]],
                    rewards=[0.0, 0.0])
    assert solve_reward(mdp, frozenset({1}), "min").at_initial == 0.0


def test_solve_reward_zero_reward_cycle_is_not_free():
    # state 0 (reward 0) may loop forever or step to 1 (reward 1) then goal;
    # an almost-sure policy must pass 1, so the minimum is 1, not 0.
    mdp = SparseMDP(3, 0,
                    [[MdpAction(((0, 1.0),), None),
                      MdpAction(((1, 1.0),), None)],
                     [MdpAction(((2, 1.0),), None)],
                     [MdpAction(((2, 1.0),), None)]],
                    rewards=[0.0, 1.0, 0.0])
    res = solve_reward(mdp, frozenset({2}), "min")
    assert res.at_initial == pytest.approx(1.0, abs=1e-6)
    chain = induced_chain(mdp, res.scheduler)
    assert exact_mc_reward(chain, frozenset({2}))[0] == 1


def test_solve_reward_min_undefined_at_initial():
    mdp = SparseMDP(2, 0, [[MdpAction(((0, 1.0),), None)],
                           [MdpAction(((1, 1.0),), None)]],
                    rewards=[1.0, 0.0])
    with pytest.raises(UndefinedRewardError):
        solve_reward(mdp, frozenset({1}), "min")
    assert math.isinf(solve_reward(mdp, frozenset({1}), "max").at_initial)


def test_solve_mc_worked_example(example1):
    model, specs = example1
    spec = specs["phi"]
    value, sat = solve_mc(instantiate(model, Realisation(R1)), spec)
    assert (value, sat) == (0.0, False)
    value, sat = solve_mc(instantiate(model, Realisation(R2)), spec)
    assert (value, sat) == (1.0, True)
    anyp = parse_spec('P>=0 F "one"')
    assert solve_mc(instantiate(model, Realisation(R1)), anyp)[1] is True


def test_sparse_mdp_validation():
    from famsynth import ModelError
    with pytest.raises(ModelError):
        SparseMDP(1, 0, [[MdpAction(((0, 0.9),), None)]]).validate()
    with pytest.raises(ModelError):
        SparseMDP(2, 0, [[MdpAction(((0, 1.0),), None)], []]).validate()
    ok = SparseMDP(1, 0, [[MdpAction(((0, 1.0),), None)]])
    assert ok.validate() is ok


def test_non_convergence_carries_residual():
    mdp = SparseMDP(2, 0, [[MdpAction(((0, 0.5), (1, 0.5)), None)],
                           [MdpAction(((1, 1.0),), None)]],
                    rewards=[1.0, 0.0])
    with pytest.raises(NonConvergenceError) as err:
        solve_reward(mdp, frozenset({1}), "min", max_iter=2)
    assert err.value.residual > 0


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 10 ** 6))
def test_float_engine_matches_exact_oracle_on_chains(seed):
    family = random_family(seed, max_states=8, rewards=seed % 2 == 0)
    goal = family.label_states("goal")
    spec_p = Specification(kind="probability", goal="goal", direction="max")
    for r in all_realisations(family):
        mc = instantiate(family, r)
        value, _ = solve_mc(mc, spec_p)
        assert value == pytest.approx(
            float(exact_mc_probability(mc, goal)[mc.initial]), abs=1e-6)
        if family.rewards is not None:
            exact = exact_mc_reward(mc, goal)[mc.initial]
            if exact is None:
                with pytest.raises(UndefinedRewardError):
                    solve_mc_exact(mc, Specification(
                        kind="expected-reward", goal="goal", direction="min"))
            else:
                value, _ = solve_mc(mc, Specification(
                    kind="expected-reward", goal="goal", direction="min"))
                assert value == pytest.approx(float(exact), abs=1e-6)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10 ** 6))
def test_max_dominates_min_per_state(seed):
    family = random_family(seed, max_states=7)
    goal = family.label_states("goal")
    mdp = build_quotient(family).restrict(Subfamily.full(family)).mdp
    hi = solve_prob(mdp, goal, "max").values
    lo = solve_prob(mdp, goal, "min").values
    assert all(h >= l - 1e-9 for h, l in zip(hi, lo))


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10 ** 6))
def test_qualitative_pinning_is_exact(seed):
    family = random_family(seed, max_states=7)
    goal = family.label_states("goal")
    mdp = build_quotient(family).restrict(Subfamily.full(family)).mdp
    res_min = solve_prob(mdp, goal, "min")
    for s in prob1_forall(mdp, goal):
        assert res_min.values[s] == 1.0
    for s in prob0_exists(mdp, goal):
        assert res_min.values[s] == 0.0
    res_max = solve_prob(mdp, goal, "max")
    p1e, _ = prob1_exists(mdp, goal)
    for s in p1e:
        assert res_max.values[s] == 1.0
    for s in prob0_forall(mdp, goal):
        assert res_max.values[s] == 0.0


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10 ** 6))
def test_extracted_scheduler_attains_reported_value(seed):
    family = random_family(seed, max_states=7, rewards=seed % 2 == 0)
    goal = family.label_states("goal")
    mdp = build_quotient(family).restrict(Subfamily.full(family)).mdp
    results = [solve_prob(mdp, goal, "max"), solve_prob(mdp, goal, "min")]
    if family.rewards is not None:
        results.append(solve_reward(mdp, goal, "max"))
        try:
            results.append(solve_reward(mdp, goal, "min"))
        except UndefinedRewardError:
            pass
    for res in results:
        chain = induced_chain(mdp, res.scheduler)
        if res.kind == "probability":
            got = float(exact_mc_probability(chain, goal)[chain.initial])
        else:
            exact = exact_mc_reward(chain, goal)[chain.initial]
            got = math.inf if exact is None else float(exact)
        if math.isinf(res.at_initial):
            assert math.isinf(got)
        else:
            assert got == pytest.approx(res.at_initial, abs=1e-7)
