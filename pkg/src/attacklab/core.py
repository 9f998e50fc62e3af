"""Shared multi-agent MDP contract.

All environments in this package are cooperative MMDPs with a single team
reward: a set of agents, per-agent discrete action spaces, per-agent
observation vectors and a flat global state vector.  Environments are plain
state machines: ``reset`` produces an :class:`EnvState`, ``step`` maps
(state, joint action) to (team reward, next state) and never mutates its
input.  All randomness enters through explicit integer seeds, so trajectories
are bit-identical when replayed with the same seed and actions.
"""

from __future__ import annotations

import hashlib
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


class IllegalAction(Exception):
    """A joint action was out of range or hit a masked-out entry."""


class SteppedTerminal(Exception):
    """step() was called on a terminal state."""


@dataclass(frozen=True)
class MmdpSpec:
    """Static description of a cooperative multi-agent MDP.

    ``action_counts`` and ``obs_dims`` are per-agent; ``state_dim`` is the
    length of the flat global state vector.  ``horizon`` bounds episode length
    and ``discount`` is the evaluation discount (1.0 for the finite tree
    games).
    """

    n_agents: int
    action_counts: tuple[int, ...]
    obs_dims: tuple[int, ...]
    state_dim: int
    horizon: int
    discount: float
    initial_dist: str = "default"

    def __post_init__(self) -> None:
        if self.n_agents < 1:
            raise ValueError("need at least one agent")
        if len(self.action_counts) != self.n_agents or len(self.obs_dims) != self.n_agents:
            raise ValueError("per-agent field length must equal n_agents")
        if any(a < 1 for a in self.action_counts):
            raise ValueError("every agent needs at least one action")
        if self.horizon < 1:
            raise ValueError("horizon must be positive")
        if not (0.0 < self.discount <= 1.0):
            raise ValueError("discount must lie in (0, 1]")


@dataclass
class EnvState:
    """A snapshot of an episode.

    ``carry`` is environment-private functional state (for example grid
    positions, or the wrapped inner state of an adversarial wrapper); callers
    should treat it as opaque.
    """

    global_state: np.ndarray
    observations: list[np.ndarray]
    step_index: int
    terminal: bool
    action_masks: list[np.ndarray]
    carry: tuple = ()


@dataclass(frozen=True)
class JointAction:
    actions: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.actions)

    def __getitem__(self, i: int) -> int:
        return self.actions[i]


@dataclass
class Transition:
    """One learner-facing step record.

    ``obs``/``next_obs`` hold the observation vectors of the tracked agents
    (all agents for base training, the attacked subset for attack training).
    ``prev_actions`` are the tracked agents' previously executed own actions
    (-1 before the first step), which feed-forward policies consume as part of
    their input.
    """

    state: np.ndarray
    obs: list[np.ndarray]
    prev_actions: tuple[int, ...]
    actions: tuple[int, ...]
    reward: float
    next_state: np.ndarray
    next_obs: list[np.ndarray]
    next_masks: list[np.ndarray]
    terminal: bool


@dataclass
class Trajectory:
    """An ordered rollout: states, actions and rewards plus the final state."""

    states: list[EnvState] = field(default_factory=list)
    actions: list[JointAction] = field(default_factory=list)
    rewards: list[float] = field(default_factory=list)

    def total_return(self) -> float:
        return float(sum(self.rewards))

    def __len__(self) -> int:
        return len(self.actions)


class Environment(ABC):
    """Base class every environment (and wrapper) implements."""

    spec: MmdpSpec
    has_win_condition: bool = False

    @abstractmethod
    def reset(self, seed: int) -> EnvState:
        """Start a new episode; same seed gives a bit-identical initial state."""

    @abstractmethod
    def step(self, state: EnvState, action: JointAction) -> tuple[float, EnvState]:
        """Apply a joint action; returns (team reward, next state)."""

    def episode_won(self, state: EnvState) -> bool:
        """Whether ``state`` is a winning terminal state (False when the
        environment has no win condition)."""
        return False

    def fingerprint(self) -> str:
        """Stable content hash of the environment's spec, for policy headers."""
        return sha256_text(self.describe())

    def describe(self) -> str:
        """Canonical one-line description used for fingerprinting."""
        s = self.spec
        return (f"{type(self).__name__} n={s.n_agents} actions={s.action_counts} "
                f"obs={s.obs_dims} state={s.state_dim} horizon={s.horizon} "
                f"discount={s.discount!r}")

    def check_action(self, state: EnvState, action: JointAction) -> None:
        """Shared step-precondition validation."""
        if state.terminal:
            raise SteppedTerminal("episode already ended")
        if len(action) != self.spec.n_agents:
            raise IllegalAction(f"joint action has {len(action)} entries, "
                                f"expected {self.spec.n_agents}")
        for i, a in enumerate(action.actions):
            if not 0 <= a < self.spec.action_counts[i]:
                raise IllegalAction(f"agent {i}: action {a} out of range")
            if not state.action_masks[i][a]:
                raise IllegalAction(f"agent {i}: action {a} is masked out")


def env_reset(env: Environment, seed: int) -> EnvState:
    return env.reset(seed)


def env_step(env: Environment, state: EnvState, action: JointAction) -> tuple[float, EnvState]:
    return env.step(state, action)


def full_masks(action_counts: Sequence[int]) -> list[np.ndarray]:
    return [np.ones(a, dtype=bool) for a in action_counts]


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()
