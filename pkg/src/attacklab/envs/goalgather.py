"""GoalGather: a small cooperative grid task with a simultaneous win condition.

Agents move on a ``width x height`` grid (up/down/left/right/stay, moves off
the grid clamp in place).  The team wins, and the episode ends, the moment
every goal cell is occupied by exactly one agent at the same time; two agents
on the same goal do not cover it.  Rewards are shared: a small per-step
penalty, a one-time progress bonus whenever the best simultaneous coverage so
far improves, and a win bonus.

Observations are egocentric: own normalised position, then the relative
offsets of every goal and of every other agent.  With ``obs_radius`` > 0 an
entity farther than that Chebyshev distance is hidden (its offset reads as
zeros); ``obs_radius = 0`` means full observability.  The global state (for
mixers and oracles only, never fed to the per-agent policies) stacks all
positions plus the best-coverage and step counters.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import Environment, EnvState, JointAction, MmdpSpec, full_masks
from ..seeding import generator

# action index -> (dx, dy)
MOVES = ((0, -1), (0, 1), (-1, 0), (1, 0), (0, 0))
N_ACTIONS = len(MOVES)


@dataclass(frozen=True)
class GridTeamSpec:
    """Static parameters of a GoalGather instance (defaults are the benchmark
    configuration: 5x5, two agents, two goals, forty steps, view radius 1)."""

    width: int = 5
    height: int = 5
    n_agents: int = 2
    n_goals: int = 2
    horizon: int = 40
    obs_radius: int = 1
    reward_win: float = 10.0
    reward_step: float = -0.1
    reward_progress: float = 0.5

    def __post_init__(self) -> None:
        if self.width < 2 or self.height < 2:
            raise ValueError("grid must be at least 2x2")
        if self.n_agents < 1 or self.n_goals < 1:
            raise ValueError("need at least one agent and one goal")
        if self.n_agents + self.n_goals > self.width * self.height:
            raise ValueError("not enough cells for distinct starting positions")
        if self.n_goals != self.n_agents:
            raise ValueError("the task pairs agents with goals: n_goals must "
                             "equal n_agents")
        if self.horizon < 1:
            raise ValueError("horizon must be positive")
        if self.obs_radius < 0:
            raise ValueError("obs_radius must be non-negative (0 = full view)")

    @property
    def obs_dim(self) -> int:
        return 2 + 2 * self.n_goals + 2 * (self.n_agents - 1)

    @property
    def state_dim(self) -> int:
        return 2 * self.n_agents + 2 * self.n_goals + 2


class GoalGather(Environment):
    has_win_condition = True

    def __init__(self, grid: GridTeamSpec = GridTeamSpec()):
        self.grid = grid
        self.spec = MmdpSpec(
            n_agents=grid.n_agents,
            action_counts=(N_ACTIONS,) * grid.n_agents,
            obs_dims=(grid.obs_dim,) * grid.n_agents,
            state_dim=grid.state_dim,
            horizon=grid.horizon,
            discount=1.0,
            initial_dist="distinct-uniform",
        )

    def reset(self, seed: int) -> EnvState:
        g = self.grid
        cells = generator(seed).choice(g.width * g.height, g.n_agents + g.n_goals,
                                       replace=False)
        agents = tuple((int(c) % g.width, int(c) // g.width) for c in cells[:g.n_agents])
        goals = tuple((int(c) % g.width, int(c) // g.width) for c in cells[g.n_agents:])
        return self._make_state(agents, goals, maxcov=0, step=0, terminal=False, won=False)

    def step(self, state: EnvState, action: JointAction) -> tuple[float, EnvState]:
        self.check_action(state, action)
        g = self.grid
        agents, goals, maxcov, _won = state.carry

        moved = []
        for (x, y), a in zip(agents, action.actions):
            dx, dy = MOVES[a]
            moved.append((min(max(x + dx, 0), g.width - 1),
                          min(max(y + dy, 0), g.height - 1)))
        moved = tuple(moved)

        coverage = self._coverage(moved, goals)
        reward = g.reward_step
        if coverage > maxcov:
            reward += g.reward_progress * (coverage - maxcov)
            maxcov = coverage
        won = coverage == g.n_goals
        if won:
            reward += g.reward_win
        step = state.step_index + 1
        terminal = won or step >= g.horizon
        nxt = self._make_state(moved, goals, maxcov, step, terminal, won)
        return reward, nxt

    def episode_won(self, state: EnvState) -> bool:
        return bool(state.carry[3])

    @staticmethod
    def _coverage(agents, goals) -> int:
        return sum(1 for goal in goals
                   if sum(1 for pos in agents if pos == goal) == 1)

    def _make_state(self, agents, goals, maxcov, step, terminal, won) -> EnvState:
        g = self.grid
        sx, sy = g.width - 1, g.height - 1
        state_vec = np.empty(g.state_dim)
        i = 0
        for x, y in agents:
            state_vec[i:i + 2] = (x / sx, y / sy)
            i += 2
        for x, y in goals:
            state_vec[i:i + 2] = (x / sx, y / sy)
            i += 2
        state_vec[i] = maxcov / g.n_goals
        state_vec[i + 1] = step / g.horizon

        obs = [self._observe(a, agents, goals) for a in range(g.n_agents)]
        return EnvState(
            global_state=state_vec,
            observations=obs,
            step_index=step,
            terminal=terminal,
            action_masks=full_masks(self.spec.action_counts),
            carry=(agents, goals, maxcov, won),
        )

    def _observe(self, me: int, agents, goals) -> np.ndarray:
        g = self.grid
        sx, sy = g.width - 1, g.height - 1
        x, y = agents[me]
        out = np.empty(g.obs_dim)
        out[0], out[1] = x / sx, y / sy
        i = 2
        others = goals + tuple(p for j, p in enumerate(agents) if j != me)
        for ox, oy in others:
            dx, dy = ox - x, oy - y
            if g.obs_radius and max(abs(dx), abs(dy)) > g.obs_radius:
                dx, dy = 0, 0
            out[i:i + 2] = (dx / sx, dy / sy)
            i += 2
        return out

    def describe(self) -> str:
        return f"GoalGather {self.grid!r}"
