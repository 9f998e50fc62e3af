"""Mechanics and statistical sanity checks for the GoalGather gridworld."""

import numpy as np
import pytest

from attacklab.core import IllegalAction, JointAction, SteppedTerminal
from attacklab.envs.goalgather import GoalGather, GridTeamSpec, MOVES, N_ACTIONS
from attacklab.seeding import derive_seed, generator


def make_env(**kwargs) -> GoalGather:
    return GoalGather(GridTeamSpec(**kwargs))


def scripted_state(env, agents, goals, maxcov=0, step=0):
    """Build a state with hand-placed positions (bypasses the random reset)."""
    return env._make_state(tuple(agents), tuple(goals), maxcov, step,
                           terminal=False, won=False)


# ---------------------------------------------------------------------------
# spec validation and dimensions
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("kwargs", [
    dict(width=1),
    dict(height=1),
    dict(n_agents=0, n_goals=0),
    dict(width=2, height=2, n_agents=3, n_goals=3),
    dict(n_agents=1),          # goal count must track agent count
    dict(n_goals=3),
    dict(horizon=0),
    dict(obs_radius=-1),
])
def test_spec_rejects_bad_parameters(kwargs):
    with pytest.raises(ValueError):
        GridTeamSpec(**kwargs)


def test_dimensions_match_layout():
    grid = GridTeamSpec(width=6, height=6, n_agents=3, n_goals=3)
    # own position + offsets to each goal and each other agent
    assert grid.obs_dim == 2 + 2 * 3 + 2 * 2
    # all positions + best-coverage and step counters
    assert grid.state_dim == 2 * 3 + 2 * 3 + 2

    env = GoalGather(grid)
    assert env.spec.n_agents == 3
    assert env.spec.action_counts == (N_ACTIONS,) * 3
    assert env.spec.obs_dims == (grid.obs_dim,) * 3
    assert env.spec.discount == 1.0


# ---------------------------------------------------------------------------
# reset
# ---------------------------------------------------------------------------


def test_reset_is_deterministic_and_distinct():
    env = make_env()
    a = env.reset(1234)
    b = env.reset(1234)
    assert np.array_equal(a.global_state, b.global_state)
    for oa, ob in zip(a.observations, b.observations):
        assert np.array_equal(oa, ob)
    assert a.carry == b.carry

    agents, goals, maxcov, won = a.carry
    cells = set(agents) | set(goals)
    assert len(cells) == len(agents) + len(goals)  # no overlaps at reset
    assert maxcov == 0 and not won
    assert a.step_index == 0 and not a.terminal


def test_reset_varies_with_seed():
    env = make_env()
    layouts = {env.reset(s).carry[:2] for s in range(20)}
    assert len(layouts) > 1


# ---------------------------------------------------------------------------
# movement
# ---------------------------------------------------------------------------


def test_moves_clamp_at_walls():
    env = make_env(n_agents=1, n_goals=1)
    state = scripted_state(env, [(0, 0)], [(4, 4)])
    for action, expected in [(0, (0, 0)),   # up from the top edge
                             (2, (0, 0)),   # left from the left edge
                             (1, (0, 1)),   # down is free
                             (3, (1, 0)),   # right is free
                             (4, (0, 0))]:  # stay
        _, nxt = env.step(state, JointAction((action,)))
        assert nxt.carry[0][0] == expected


def test_move_table_is_consistent():
    env = make_env(n_agents=1, n_goals=1)
    state = scripted_state(env, [(2, 2)], [(4, 4)])
    for action, (dx, dy) in enumerate(MOVES):
        _, nxt = env.step(state, JointAction((action,)))
        assert nxt.carry[0][0] == (2 + dx, 2 + dy)


# ---------------------------------------------------------------------------
# rewards, coverage and termination
# ---------------------------------------------------------------------------


def test_step_penalty_when_nothing_happens():
    env = make_env()
    state = scripted_state(env, [(0, 0), (4, 4)], [(2, 0), (2, 4)])
    reward, nxt = env.step(state, JointAction((4, 4)))
    assert reward == pytest.approx(-0.1)
    assert not nxt.terminal and not env.episode_won(nxt)


def test_progress_bonus_fires_once_per_new_best():
    env = make_env()
    # agent 0 steps onto its goal; agent 1 stays away
    state = scripted_state(env, [(2, 1), (0, 4)], [(2, 0), (4, 4)])
    reward, nxt = env.step(state, JointAction((0, 4)))
    assert reward == pytest.approx(-0.1 + 0.5)
    assert nxt.carry[2] == 1  # best coverage so far

    # stepping off and back on does not pay again
    reward, off = env.step(nxt, JointAction((1, 4)))
    assert reward == pytest.approx(-0.1)
    reward, back = env.step(off, JointAction((0, 4)))
    assert reward == pytest.approx(-0.1)
    assert back.carry[2] == 1


def test_win_pays_bonus_and_terminates():
    env = make_env()
    state = scripted_state(env, [(2, 1), (4, 3)], [(2, 0), (4, 4)])
    reward, nxt = env.step(state, JointAction((0, 1)))
    # both goals covered at once: step + two new coverage units + win bonus
    assert reward == pytest.approx(-0.1 + 0.5 * 2 + 10.0)
    assert nxt.terminal
    assert env.episode_won(nxt)


def test_two_agents_on_one_goal_do_not_cover_it():
    env = make_env()
    state = scripted_state(env, [(1, 0), (3, 0)], [(2, 0), (0, 4)])
    reward, nxt = env.step(state, JointAction((3, 2)))  # both walk onto one goal
    assert nxt.carry[0] == ((2, 0), (2, 0))
    assert reward == pytest.approx(-0.1)  # crowded goal earns no progress
    assert not env.episode_won(nxt)

    # one backs off: the goal is now covered by exactly one agent
    reward, after = env.step(nxt, JointAction((4, 3)))
    assert reward == pytest.approx(-0.1 + 0.5)
    assert not env.episode_won(after)


def test_horizon_truncates_without_win():
    env = make_env(horizon=5)
    state = scripted_state(env, [(0, 0), (4, 4)], [(2, 0), (2, 4)])
    for _ in range(5):
        assert not state.terminal
        _, state = env.step(state, JointAction((4, 4)))
    assert state.terminal and state.step_index == 5
    assert not env.episode_won(state)
    with pytest.raises(SteppedTerminal):
        env.step(state, JointAction((4, 4)))


def test_illegal_actions_rejected():
    env = make_env()
    state = env.reset(0)
    with pytest.raises(IllegalAction):
        env.step(state, JointAction((5, 0)))
    with pytest.raises(IllegalAction):
        env.step(state, JointAction((0,)))


# ---------------------------------------------------------------------------
# observations and global state
# ---------------------------------------------------------------------------


def test_full_view_observation_layout():
    env = make_env(obs_radius=0)
    state = scripted_state(env, [(1, 1), (3, 2)], [(3, 4), (0, 0)])
    obs0 = state.observations[0]
    sx = sy = 4.0
    expected = [1 / sx, 1 / sy,            # own position
                (3 - 1) / sx, (4 - 1) / sy,  # goal 0 offset
                (0 - 1) / sx, (0 - 1) / sy,  # goal 1 offset
                (3 - 1) / sx, (2 - 1) / sy]  # other agent offset
    assert obs0 == pytest.approx(expected)


def test_limited_radius_hides_far_entities():
    env = make_env(obs_radius=1)
    state = scripted_state(env, [(1, 1), (2, 2)], [(4, 4), (1, 2)])
    obs0 = state.observations[0]
    assert obs0[2:4] == pytest.approx([0.0, 0.0])          # goal 0 is 3 away
    assert obs0[4:6] == pytest.approx([0.0, 1 / 4])        # goal 1 is adjacent
    assert obs0[6:8] == pytest.approx([1 / 4, 1 / 4])      # other agent adjacent

    wide = make_env(obs_radius=0)  # 0 means unlimited view
    full = scripted_state(wide, [(1, 1), (2, 2)], [(4, 4), (1, 2)])
    assert full.observations[0][2:4] == pytest.approx([3 / 4, 3 / 4])


def test_global_state_layout():
    env = make_env()
    state = scripted_state(env, [(0, 0), (4, 4)], [(2, 0), (2, 4)],
                           maxcov=1, step=7)
    vec = state.global_state
    assert vec == pytest.approx(
        [0, 0, 1, 1, 0.5, 0, 0.5, 1, 1 / 2, 7 / 40])
    assert vec.shape == (env.grid.state_dim,)


def test_fingerprint_tracks_parameters():
    assert make_env().fingerprint() == make_env().fingerprint()
    assert (make_env(obs_radius=1).fingerprint()
            != make_env(obs_radius=2).fingerprint())


# ---------------------------------------------------------------------------
# statistical sanity
# ---------------------------------------------------------------------------


def test_random_policy_rarely_wins():
    """Uniform-random teams solve the default task well under 30% of the time,
    so a trained policy's win rate is a meaningful signal."""
    env = make_env()
    rng = generator(7)
    wins = 0
    n = 400
    for ep in range(n):
        state = env.reset(derive_seed(7, ep))
        while not state.terminal:
            acts = tuple(int(a) for a in rng.integers(0, N_ACTIONS, env.spec.n_agents))
            _, state = env.step(state, JointAction(acts))
        wins += int(env.episode_won(state))
    assert wins / n < 0.3
