import math

import numpy as np
import pytest

from adagibbs.kernels import (
    DistributionVector,
    exact_marginal_evolution,
    tv_distance,
)
from adagibbs.ladder import (
    FailureBudget,
    LadderState,
    LadderTarget,
    Schedule,
    dominance_holds,
    dominating_walk_law,
    failure_probability_budget,
    hoeffding_tail,
    ladder_conditionals,
    ladder_epsilon,
    ladder_increment_floor,
    ladder_step_law,
    ladder_update_rule,
    linear_schedule,
    schedule_a,
    stochastically_dominates,
    transience_experiment,
    truncated_ladder_evolution,
    truncated_ladder_kernel,
    truncated_ladder_target,
    truncated_ladder_target_vector,
)


def test_ladder_state_invariants():
    LadderState(3, 3)
    LadderState(4, 3)
    with pytest.raises(ValueError):
        LadderState(3, 4)
    with pytest.raises(ValueError):
        LadderState(5, 3)
    with pytest.raises(ValueError):
        LadderState(0, 0)


def test_schedule_first_blocks():
    assert schedule_a(1) == pytest.approx(10.0)
    assert schedule_a(1000) == pytest.approx(10.0)
    assert schedule_a(1001) == pytest.approx(10.0 + math.log(2))
    with pytest.raises(ValueError):
        schedule_a(0)


def test_schedule_block_structure():
    sched = Schedule()
    for k in range(1, 6):
        lo = int(sched.block_boundary(k - 1)) + 1
        hi = int(sched.block_boundary(k))
        assert sched.a(lo) == pytest.approx(10.0 + math.log(k))
        assert sched.a(hi) == pytest.approx(10.0 + math.log(k))
        jump = sched.a(hi + 1) - sched.a(hi)
        assert jump == pytest.approx(math.log((k + 1) / k), abs=1e-12)
    # block lengths and boundaries strictly increase
    lengths = [sched.block_length(k) for k in range(1, 30)]
    assert all(b > a for a, b in zip(lengths, lengths[1:]))
    bounds = [sched.block_boundary(k) for k in range(0, 30)]
    assert all(b > a for a, b in zip(bounds, bounds[1:]))
    assert sched.block_length(1) == 1000.0


def test_update_rule_values():
    assert ladder_update_rule((2, 2), 1).weights == pytest.approx((0.9, 0.1))
    assert ladder_update_rule((3, 2), 1).weights == pytest.approx((0.1, 0.9))


def test_update_rule_limit_and_floor():
    # tilt 4/a_n shrinks to zero and never grows
    last = math.inf
    for n in (1, 1000, 1001, 5000, 50_000, 500_000):
        w = ladder_update_rule((4, 4), n).weights
        tilt = max(abs(v - 0.5) for v in w)
        assert tilt == pytest.approx(4.0 / schedule_a(n), abs=1e-15)
        assert tilt <= last + 1e-15
        last = tilt
    assert ladder_epsilon() == pytest.approx(0.1)


def test_conditionals():
    (vals1, probs1), (vals2, probs2) = ladder_conditionals((2, 2))
    assert vals1 == (2, 3) and probs1 == (0.5, 0.5)
    assert vals2 == (1, 2)
    assert probs2 == pytest.approx((4.0 / 5.0, 1.0 / 5.0))
    _, (vals2, probs2) = ladder_conditionals((1, 1))
    assert vals2 == (1,) and probs2 == (1.0,)
    # first-coordinate conditional is always uniform: both rungs share j**-2
    for state in ((1, 1), (5, 4), (9, 9)):
        (_, probs1), _ = ladder_conditionals(state)
        assert probs1 == (0.5, 0.5)


def test_step_law_bottom_state():
    law = ladder_step_law((1, 1), 1)
    assert law[1] == pytest.approx(0.25 + 2.0 / 10.0)
    assert law[-1] == 0.0
    assert sum(law.values()) == pytest.approx(1.0)


def closed_form_step_law(i, j, a):
    """Direct transcription of the two three-point laws (valid for i >= 2)."""
    denom = i * i + (i - 1) * (i - 1)
    if i == j:
        down = (0.5 - 4.0 / a) * i * i / denom
        up = 0.25 + 2.0 / a
    else:
        down = 0.25 - 2.0 / a
        up = (0.5 + 4.0 / a) * (i - 1) * (i - 1) / denom
    return {-1: down, 0: 1.0 - down - up, 1: up}


def test_step_law_matches_closed_forms():
    for n in (1, 1001, 40_000):
        a = schedule_a(n)
        for i in (2, 3, 7, 20):
            for state in ((i, i), (i, i - 1)):
                law = ladder_step_law(state, n)
                expected = closed_form_step_law(state[0], state[1], a)
                for k in (-1, 0, 1):
                    assert law[k] == pytest.approx(expected[k], abs=1e-14), (state, n)


def test_step_law_drift_sanity():
    # at height the mean increment approaches 4/a_n from below
    law = ladder_step_law((1000, 1000), 1)
    mean = sum(k * v for k, v in law.items())
    assert mean == pytest.approx(4.0 / 10.0, abs=1e-3)


def test_dominating_walk_values():
    law = dominating_walk_law(1)
    assert law == pytest.approx({-1: 0.15, 0: 0.5, 1: 0.35})
    assert sum(law.values()) == pytest.approx(1.0)
    mean = sum(k * v for k, v in law.items())
    assert mean == pytest.approx(2.0 / 10.0)


def test_dominance_examples():
    assert dominance_holds(10, 1000)
    assert not dominance_holds(8, 1000)
    assert dominance_holds(9, 1000)  # boundary: 2*9 - 8 == a_n == 10


def test_dominance_matches_analytic_criterion():
    for n in (1, 999, 1001, 2500, 90_000):
        a = schedule_a(n)
        for i in range(1, 60):
            assert dominance_holds(i, n) == (2 * i - 8 >= a), (i, n)


def test_step_law_dominates_floor_law():
    # The exact increment law at (i, i) sits stochastically above the floor
    # law for every height; at the off-diagonal states (i, i-1) this holds
    # from i = 3 on.  Heights below that never matter: the coupling is only
    # invoked where 2i - 8 >= a_n > 8, i.e. from the ninth rung up.
    for n in (1, 1001, 30_000):
        for i in range(1, 40):
            floor = ladder_increment_floor(i, n)
            assert sum(floor.values()) == pytest.approx(1.0)
            assert min(floor.values()) >= 0.0
            assert stochastically_dominates(ladder_step_law((i, i), n), floor), (i, n)
            if i >= 3:
                assert stochastically_dominates(
                    ladder_step_law((i, i - 1), n), floor
                ), (i, n)


def test_floor_law_edge_at_second_rung():
    # regression anchor: at (2, 1) the up-move mass (1/2 + 4/a) / 5 stays
    # below the floor's (1/4 + 2/a) / 2, so dominance genuinely fails there
    law = ladder_step_law((2, 1), 1)
    floor = ladder_increment_floor(2, 1)
    assert law[1] == pytest.approx(0.18)
    assert floor[1] == pytest.approx(0.225)
    assert not stochastically_dominates(law, floor)


def test_hoeffding_examples():
    assert hoeffding_tail(5, 0.0) == 1.0
    assert hoeffding_tail(2, 1.0) == pytest.approx(math.exp(-1.0))
    assert hoeffding_tail(4, 0.5) < hoeffding_tail(2, 0.5)
    assert hoeffding_tail(2, 0.8) < hoeffding_tail(2, 0.5)


def test_failure_budget():
    budget = failure_probability_budget(10_000)
    assert isinstance(budget, FailureBudget)
    assert budget.p[0] == pytest.approx(math.exp(-5.0))
    # decreasing from the second block on (the first-to-second step goes up)
    assert budget.log_p[1] > budget.log_p[0]
    assert np.all(np.diff(budget.log_p[1:]) < 0.0)
    assert budget.product > 0.9
    shorter = failure_probability_budget(100)
    assert shorter.product >= budget.product


def test_truncated_target_enumeration():
    target = truncated_ladder_target(5)
    assert len(target.states) == 9
    values, probs = target.conditional(0, (5, 5))
    assert values == (5,) and probs == (1.0,)
    values, probs = target.conditional(0, (4, 4))
    assert values == (4, 5) and probs == (0.5, 0.5)


def test_ladder_target_views_agree():
    unbounded = LadderTarget()
    capped = LadderTarget(truncation=4)
    finite = truncated_ladder_target(4)
    for x in finite.states:
        for coord in (0, 1):
            vals_a, probs_a = capped.conditional(coord, x)
            vals_b, probs_b = finite.conditional(coord, x)
            assert vals_a == vals_b
            assert probs_a == pytest.approx(probs_b, abs=1e-14)
        if x[0] < 4 and x[1] < 4:
            assert unbounded.conditional(0, x) == capped.conditional(0, x)
    assert unbounded.contains((10**9, 10**9))
    assert not capped.contains((5, 5))


def test_fast_evolution_matches_generic_evolution():
    truncation = 4
    a_of_n = linear_schedule(10.0, 3.0)
    fast = truncated_ladder_evolution(truncation, a_of_n, tv_target=0.0, max_steps=60)
    target = truncated_ladder_target(truncation)
    init = DistributionVector(
        target.states,
        [1.0 if x == (1, 1) else 0.0 for x in target.states],
    )
    laws = exact_marginal_evolution(
        init, lambda n: truncated_ladder_kernel(truncation, n, a_of_n), 60
    )
    pi = truncated_ladder_target_vector(truncation)
    for n, law in enumerate(laws):
        assert abs(tv_distance(law, pi) - fast.tv[n]) <= 1e-12


def test_block_schedule_keeps_truncated_chain_far_from_target():
    # with the transience schedule the weights stay tilted by ~0.3 for any
    # feasible horizon, so the truncated chain parks near the top rungs
    ev = truncated_ladder_evolution(20, Schedule().a, tv_target=1e-3, max_steps=2_000)
    assert not ev.reached
    assert ev.tv[-1] > 0.9


def test_linear_schedule_truncated_chain_converges_monotonically():
    ev = truncated_ladder_evolution(20, linear_schedule(10.0, 2.0), tv_target=1e-3)
    assert ev.reached
    assert 1_000 < ev.horizon < 100_000
    tail = ev.tv[int(len(ev.tv) * 0.9):]
    assert np.all(np.diff(tail) <= 1e-12)


def test_linear_schedule_validation():
    with pytest.raises(ValueError):
        linear_schedule(offset=8.0)
    with pytest.raises(ValueError):
        linear_schedule(slope=0.0)


def test_transience_experiment_deterministic_and_separated():
    summary_a = transience_experiment(4_000, 3, base_seed=555)
    summary_b = transience_experiment(4_000, 3, base_seed=555)
    assert summary_a == summary_b
    # even at this short horizon the arms separate cleanly
    assert all(r.final_height > 100 for r in summary_a.adaptive)
    assert all(r.slope > 0 for r in summary_a.adaptive)
    assert all(r.final_height <= 50 for r in summary_a.control)
    assert summary_a.adaptive_escapes(100) == 3
    assert summary_a.control_contained(50) == 3


def test_unbounded_law_is_exact_at_finite_horizons():
    from adagibbs.ladder import unbounded_ladder_law
    from adagibbs.samplers import adap_rsg_run, derive_seed
    from adagibbs.weights import SelectionWeights

    law = unbounded_ladder_law(25)
    assert law.probs.sum() == pytest.approx(1.0, abs=1e-12)
    assert law.probs.min() >= -1e-15

    # dual route: empirical frequencies of the sampled adaptive chain
    target = LadderTarget()
    alpha0 = SelectionWeights((0.5, 0.5), 0.1)

    def rule(n, alpha_prev, x_prev, scratch):
        return ladder_update_rule(x_prev, n)

    n_rep = 4000
    counts = {}
    for r in range(n_rep):
        traj = adap_rsg_run(target, rule, (1, 1), alpha0, 25, derive_seed(99, r))
        counts[traj.states[-1]] = counts.get(traj.states[-1], 0) + 1
    index = {x: k for k, x in enumerate(law.states)}
    for x, c in counts.items():
        p = law.probs[index[x]]
        se = math.sqrt(max(p * (1 - p), 1e-12) / n_rep)
        assert abs(c / n_rep - p) <= 4.5 * se + 1e-9, x


def test_unbounded_law_drifts_away_from_target():
    # characteristic non-ergodic shape: the law first spreads towards the
    # target (TV dips below its point-start value), then the upward drift
    # carries it away for good
    from adagibbs.ladder import unbounded_ladder_law

    tvs = {n: unbounded_ladder_law(n).tv_to_target for n in (0, 5, 10, 25, 50, 150)}
    assert tvs[0] == pytest.approx(1.0 - 1.0 / (math.pi**2 / 3.0), abs=1e-12)
    assert tvs[5] < tvs[0]
    assert tvs[10] < tvs[25] < tvs[50] < tvs[150]
    assert tvs[150] > 0.9
