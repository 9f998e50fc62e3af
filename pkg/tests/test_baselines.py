"""Baseline attacks: score analytics, substitution loops, timing attacker.

The counterexample checks matter most here: on the first constructed tree no
score threshold reaches the -100 leaf (the decoy branch always triggers
first), and on the fork tree the forced lowest-Q action can never enter the
branch holding -100.
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from attacklab.baselines import (
    DeltaRule,
    TimedArgminEnv,
    attack_dense,
    attack_random,
    attack_rule_based,
    collect_deltas,
    delta_score,
    rollout_rlf,
    softmax,
    threshold_grid,
    train_rlf,
)
from attacklab.envs.goalgather import GoalGather, GridTeamSpec
from attacklab.envs.trees import TreeGame, TreeGameSpec, build_example1, build_example2
from attacklab.learners import TrainConfig, evaluate_policy, train_base
from attacklab.oracles import oracle_forced_argmin_dp

MAXDIFF = DeltaRule("maxdiff")
ENTROPY = DeltaRule("entropy")


def tree_setup(builder=build_example1, args=(5, 3, 1, 0)):
    env = TreeGame(builder(*args))
    return env, train_base(env, "tabular-VI", TrainConfig())


def grid_setup():
    env = GoalGather(GridTeamSpec(width=3, height=3, horizon=10, obs_radius=0))
    cfg = TrainConfig(episodes=40, min_buffer=32, batch_size=16,
                      hidden=(8,), mixer_embed=4, mixer_hyper_hidden=8, seed=3)
    return env, train_base(env, "QMIX", cfg)


# ---------------------------------------------------------------------------
# confidence scores
# ---------------------------------------------------------------------------


def test_rule_validation_and_bounds():
    assert MAXDIFF.bounds() == (0.0, 1.0)
    assert ENTROPY.bounds() == (-1.0, 0.0)
    with pytest.raises(ValueError):
        DeltaRule("variance")


def test_maxdiff_of_a_two_point_gap_is_tanh_of_half_the_gap():
    # softmax spread over {x, x - g} is (e^g - 1)/(e^g + 1) = tanh(g / 2)
    assert np.isclose(delta_score(MAXDIFF, np.array([50.0, 48.0])), math.tanh(1.0))
    assert np.isclose(delta_score(MAXDIFF, np.array([7.0, 6.0])), math.tanh(0.5))


def test_uniform_rows_sit_at_the_uncertain_end():
    row = np.array([3.0, 3.0, 3.0])
    assert delta_score(MAXDIFF, row) == 0.0
    assert np.isclose(delta_score(ENTROPY, row), -1.0)


def test_peaked_rows_sit_at_the_confident_end():
    row = np.array([100.0, 0.0, 0.0])
    assert delta_score(MAXDIFF, row) == pytest.approx(1.0)
    assert delta_score(ENTROPY, row) == pytest.approx(0.0)


def test_score_input_validation():
    with pytest.raises(ValueError):
        delta_score(MAXDIFF, np.array([1.0]))
    with pytest.raises(ValueError):
        delta_score(MAXDIFF, np.array([[1.0, 2.0]]))
    with pytest.raises(ValueError):
        delta_score(ENTROPY, np.array([1.0, np.inf]))


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=2, max_size=6), st.floats(-20, 20))
def test_scores_are_bounded_and_shift_invariant(values, shift):
    row = np.array(values)
    for rule in (MAXDIFF, ENTROPY):
        lo, hi = rule.bounds()
        score = delta_score(rule, row)
        assert lo - 1e-12 <= score <= hi + 1e-12
        assert np.isclose(delta_score(rule, row + shift), score, atol=1e-9)


def test_softmax_is_a_distribution():
    p = softmax(np.array([1.0, 2.0, 3.0]))
    assert np.isclose(p.sum(), 1.0)
    assert np.all(p > 0)


def test_threshold_grid_contains_observed_scores():
    observed = (0.25, 0.333333, 0.75)
    grid = threshold_grid(MAXDIFF, observed, points=1000)
    assert grid[0] == 0.0 and grid[-1] == 1.0
    assert np.all(np.diff(grid) > 0)
    for v in observed:
        assert v in grid
    lo, hi = ENTROPY.bounds()
    egrid = threshold_grid(ENTROPY, (), points=100)
    assert egrid[0] == lo and egrid[-1] == hi and len(egrid) == 100


def test_collect_deltas_enumerates_every_tree_node():
    env, base = tree_setup()
    deltas = collect_deltas(env, base, (0,), MAXDIFF)
    assert len(deltas) == env.tree.n_internal
    assert np.isclose(deltas[0],
                      delta_score(MAXDIFF, base.q_values(0, np.array([0.0]))))


def test_collect_deltas_samples_grid_rollouts():
    env, base = grid_setup()
    deltas = collect_deltas(env, base, (0, 1), ENTROPY, n_episodes=4, seed=2)
    assert len(deltas) > 0
    assert all(-1.0 - 1e-12 <= d <= 1e-12 for d in deltas)


# ---------------------------------------------------------------------------
# random and dense substitution attacks
# ---------------------------------------------------------------------------


def test_attack_random_validation():
    env, base = tree_setup()
    with pytest.raises(ValueError):
        attack_random("argmax", 0.5, base, env, (0,), 1, 0)
    with pytest.raises(ValueError):
        attack_random("random", 1.5, base, env, (0,), 1, 0)


def test_probability_zero_is_the_clean_policy():
    env, base = grid_setup()
    clean = evaluate_policy(env, base, n_episodes=30, seed=6)
    stats = attack_random("lowestQ", 0.0, base, env, (0, 1), 30, seed=6)
    assert all(s.deviations == 0 for s in stats)
    assert np.isclose(np.mean([s.team_return for s in stats]), clean.mean_return)
    assert sum(s.won for s in stats) / len(stats) == clean.win_rate


def test_probability_one_lowestq_is_the_dense_attack():
    env, base = grid_setup()
    assert (attack_random("lowestQ", 1.0, base, env, (0,), 12, seed=9)
            == attack_dense(base, env, (0,), 12, seed=9))


def test_random_mode_always_leaves_the_greedy_action():
    env, base = tree_setup()
    stats = attack_random("random", 1.0, base, env, (0,), 50, seed=1)
    assert all(s.deviations == s.total_steps for s in stats)


def test_deviation_frequency_tracks_probability():
    env, base = tree_setup()
    stats = attack_random("lowestQ", 0.2, base, env, (0,), 1000, seed=12)
    frac = sum(s.deviations for s in stats) / sum(s.total_steps for s in stats)
    assert abs(frac - 0.2) < 0.02


def test_lambda_flows_through_to_adversary_return():
    env, base = tree_setup()
    lam = 2.0
    stats = attack_dense(base, env, (0,), 5, seed=3, lam=lam)
    for s in stats:
        assert np.isclose(s.adv_return, -s.team_return - lam * s.deviations)


# ---------------------------------------------------------------------------
# rule-based attacks and the decoy counterexample
# ---------------------------------------------------------------------------


def test_threshold_extremes():
    env, base = tree_setup()
    passive = attack_rule_based(MAXDIFF, np.inf, base, env, (0,), 5, seed=0)
    assert all(s.deviations == 0 for s in passive)
    assert all(s.team_return == 50.0 for s in passive)
    dense = attack_rule_based(MAXDIFF, -np.inf, base, env, (0,), 5, seed=0)
    assert dense == attack_dense(base, env, (0,), 5, seed=0)
    with pytest.raises(ValueError):
        attack_rule_based(MAXDIFF, float("nan"), base, env, (0,), 1, 0)


@pytest.mark.parametrize("rule", [MAXDIFF, ENTROPY])
def test_no_threshold_reaches_the_minus_hundred_leaf(rule):
    # the early decoy branch shows a strictly larger score gap than the
    # useful late deviation, so any trigger level that fires late also fires
    # early and diverts the walk into the 48-capped subtree
    env, base = tree_setup(build_example1, (5, 3, 1, 11))
    observed = collect_deltas(env, base, (0,), rule)
    worst = min(
        stats[0].team_return
        for thr in threshold_grid(rule, observed, points=201)
        for stats in [attack_rule_based(rule, thr, base, env, (0,), 1, seed=0)])
    assert worst >= 0.0


def test_forced_argmin_never_reaches_minus_hundred_on_fork_tree():
    env, _ = tree_setup(build_example2, (4, 1, 5))
    oracle = oracle_forced_argmin_dp(env.tree, cost=0.0)
    assert oracle.team_return > -100.0
    assert oracle.team_return >= -48.0  # the decoy subtree caps the damage


# ---------------------------------------------------------------------------
# learned timing attacker
# ---------------------------------------------------------------------------


class AlwaysStrike:
    def __init__(self, n):
        self.n = n

    def greedy_all(self, state, prev_actions):
        return [TimedArgminEnv.STRIKE] * self.n


def test_timing_wrapper_shapes():
    env, base = grid_setup()
    timed = TimedArgminEnv(env, base, (0, 1), cost=0.5)
    assert timed.spec.action_counts == (2, 2)
    assert timed.spec.obs_dims == env.spec.obs_dims
    state = timed.reset(seed=0)
    assert all(np.array_equal(m, np.ones(2, dtype=bool))
               for m in state.action_masks)
    with pytest.raises(ValueError):
        TimedArgminEnv(env, base, (0,), cost=-1.0)


def test_strikes_pay_even_without_deviation():
    # constant leaf rewards make lowest-Q coincide with greedy, so a strike
    # changes nothing yet still costs c_adv
    tree = TreeGameSpec(2, 3, np.full(8, 5.0))
    env = TreeGame(tree)
    base = train_base(env, "tabular-VI", TrainConfig())
    cost = 0.75
    stats = rollout_rlf(env, base, AlwaysStrike(1), (0,), cost, 3, seed=0)
    for s in stats:
        assert s.deviations == 0
        assert s.team_return == 5.0
        assert np.isclose(s.adv_return, -5.0 - cost * s.total_steps)


def test_timing_attacker_matches_forced_dp_when_free():
    env, base = tree_setup(build_example1, (5, 3, 1, 0))
    policy = train_rlf(env, base, (0,), c_adv=0.0,
                       train=TrainConfig(episodes=30_000, seed=4))
    stats = rollout_rlf(env, base, policy, (0,), 0.0, 1, seed=0)[0]
    oracle = oracle_forced_argmin_dp(env.tree, cost=0.0)
    assert stats.adv_return == oracle.value
    assert stats.team_return == oracle.team_return == -100.0


def test_timing_attacker_is_blocked_on_fork_tree():
    env, base = tree_setup(build_example2, (4, 1, 5))
    policy = train_rlf(env, base, (0,), c_adv=0.0,
                       train=TrainConfig(episodes=40_000, seed=5))
    stats = rollout_rlf(env, base, policy, (0,), 0.0, 1, seed=0)[0]
    oracle = oracle_forced_argmin_dp(env.tree, cost=0.0)
    assert stats.adv_return == oracle.value
    assert stats.team_return > -100.0


def test_expensive_strikes_shut_the_attacker_down():
    env, base = tree_setup(build_example1, (4, 2, 0, 7))
    policy = train_rlf(env, base, (0,), c_adv=1e6,
                       train=TrainConfig(episodes=20_000, seed=6))
    stats = rollout_rlf(env, base, policy, (0,), 1e6, 1, seed=0)[0]
    assert stats.deviations == 0
    assert stats.team_return == 50.0


def test_deep_timing_attacker_smoke():
    env, base = grid_setup()
    policy = train_rlf(env, base, (0,), c_adv=0.1,
                       train=TrainConfig(episodes=30, min_buffer=32,
                                         batch_size=16, hidden=(8,),
                                         mixer_embed=4, mixer_hyper_hidden=8,
                                         seed=7))
    assert policy.meta["kind"] == "timing-attacker"
    assert policy.meta["c_adv"] == repr(0.1)
    stats = rollout_rlf(env, base, policy, (0,), 0.1, 4, seed=1)
    assert len(stats) == 4
