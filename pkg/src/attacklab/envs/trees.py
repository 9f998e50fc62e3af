"""Finite-horizon tree games with rewards only at the leaves.

A tree game is a single-agent MMDP: at depth ``d`` the agent sits at one
node, every action descends one level, and the episode ends after ``depth``
steps with the reward of the reached leaf.  The discount is 1, so the optimal
Q values are plain backward-induction maxima and an attacker's effect can be
computed exactly.

Two seeded constructions are provided that make specific attack heuristics
provably sub-optimal while an exact attack still reaches the worst leaf:

``build_example1``
    Binary tree.  The optimal path pays 50.  Deviating once at ``late_step``
    leads into a subtree whose best leaf pays 49 but whose worst leaf pays
    -100, reachable by also forcing the final action to 0.  Deviating at
    ``early_step`` leads into a subtree capped at 48.  Softmax-gap style
    scores are therefore strictly larger at ``early_step`` than at
    ``late_step``, yet only the late deviation opens the -100 leaf.

``build_example2``
    Ternary tree.  At ``fork_step`` the branch one above the optimal action
    (mod 3) hides the 49/-100 pair while the branch two above hides a 48
    leaf.  The action with the lowest Q at the fork is the 48 branch, so any
    attacker hard-wired to force the argmin-Q action can never reach -100.

All remaining leaves ("fillers") take values in [0, 47] from a seeded hash,
so no filler ever beats the special leaves and every non -100 outcome is
non-negative.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import Environment, EnvState, JointAction, MmdpSpec, full_masks
from ..seeding import generator, splitmix64

MAX_LEAVES = 1 << 20

FILLER_LOW, FILLER_HIGH = 0, 47


class InvalidIndices(Exception):
    """Construction indices violate the required ordering constraints."""


class TooLarge(Exception):
    """The requested tree exceeds the exact-computation size bound."""


@dataclass(frozen=True)
class TreeConstruction:
    """Metadata about the seeded special leaves of a constructed tree.

    ``optimal_plan`` is the unique minimal forcing plan (step, action) that
    steers the greedy policy into the -100 leaf.  ``decoy_step`` and
    ``decoy_action`` name the deviation that misleads the targeted heuristic
    (the early high-gap branch in example 1, the argmin branch in example 2).
    """

    kind: str
    optimal_actions: tuple[int, ...]
    decoy_step: int
    decoy_action: int
    optimal_plan: tuple[tuple[int, int], ...]
    special_leaves: tuple[tuple[tuple[int, ...], int], ...]


@dataclass(frozen=True, eq=False)
class TreeGameSpec:
    """A complete tree game: branching factor, depth and all leaf rewards."""

    branching: int
    depth: int
    leaf_rewards: np.ndarray
    construction: TreeConstruction | None = None

    def __post_init__(self) -> None:
        if self.branching < 2:
            raise ValueError("branching must be at least 2")
        if self.depth < 1:
            raise ValueError("depth must be at least 1")
        if self.n_leaves > MAX_LEAVES:
            raise TooLarge(f"{self.branching}**{self.depth} leaves exceed {MAX_LEAVES}")
        if self.leaf_rewards.shape != (self.n_leaves,):
            raise ValueError("leaf_rewards must have one entry per leaf")

    # ---- node indexing -------------------------------------------------
    # Nodes are stored heap-style: level d starts at offset(d) and holds the
    # b**d prefixes of length d in lexicographic order.

    @property
    def n_leaves(self) -> int:
        return self.branching ** self.depth

    def level_offset(self, d: int) -> int:
        return (self.branching ** d - 1) // (self.branching - 1)

    @property
    def n_internal(self) -> int:
        return self.level_offset(self.depth)

    @property
    def n_nodes(self) -> int:
        return self.level_offset(self.depth + 1)

    def child_id(self, node: int, depth: int, action: int) -> int:
        rank = node - self.level_offset(depth)
        return self.level_offset(depth + 1) + rank * self.branching + action

    def node_of_prefix(self, prefix: tuple[int, ...]) -> int:
        node, depth = 0, 0
        for a in prefix:
            node = self.child_id(node, depth, a)
            depth += 1
        return node

    def leaf_index(self, actions: tuple[int, ...]) -> int:
        if len(actions) != self.depth:
            raise ValueError("need one action per level")
        idx = 0
        for a in actions:
            idx = idx * self.branching + a
        return idx

    def leaf_reward(self, leaf_node: int) -> float:
        return float(self.leaf_rewards[leaf_node - self.level_offset(self.depth)])


class TreeGame(Environment):
    """Environment view of a :class:`TreeGameSpec`.

    The observation and the global state are both the current node id as a
    length-1 vector, which tabular learners key on byte-exactly.
    """

    def __init__(self, tree: TreeGameSpec):
        self.tree = tree
        self.spec = MmdpSpec(
            n_agents=1,
            action_counts=(tree.branching,),
            obs_dims=(1,),
            state_dim=1,
            horizon=tree.depth,
            discount=1.0,
            initial_dist="root",
        )

    def reset(self, seed: int) -> EnvState:
        return self._state_at(node=0, depth=0)

    def step(self, state: EnvState, action: JointAction) -> tuple[float, EnvState]:
        self.check_action(state, action)
        node = int(state.carry[0])
        depth = state.step_index
        child = self.tree.child_id(node, depth, action[0])
        nxt = self._state_at(node=child, depth=depth + 1)
        reward = self.tree.leaf_reward(child) if nxt.terminal else 0.0
        return reward, nxt

    def _state_at(self, node: int, depth: int) -> EnvState:
        vec = np.array([float(node)])
        return EnvState(
            global_state=vec,
            observations=[vec.copy()],
            step_index=depth,
            terminal=depth >= self.tree.depth,
            action_masks=full_masks(self.spec.action_counts),
            carry=(node,),
        )

    def describe(self) -> str:
        payload = self.tree.leaf_rewards.astype("<f8").tobytes().hex()
        return f"TreeGame b={self.tree.branching} depth={self.tree.depth} leaves={payload}"


# ---------------------------------------------------------------------------
# Seeded constructions
# ---------------------------------------------------------------------------


def _filler_rewards(filler_seed: int, n_leaves: int) -> np.ndarray:
    base = splitmix64(filler_seed & ((1 << 64) - 1))
    span = FILLER_HIGH - FILLER_LOW + 1
    vals = [FILLER_LOW + splitmix64(base + i) % span for i in range(n_leaves)]
    return np.array(vals, dtype=np.float64)


def build_example1(depth: int, late_step: int, early_step: int, filler_seed: int) -> TreeGameSpec:
    """Binary tree where softmax-gap scores point at the wrong step.

    Requires ``0 <= early_step < late_step < depth - 1`` and ``depth >= 4``.
    The only way to the -100 leaf is to deviate at ``late_step`` and again at
    the final step, while the Q gap is strictly larger at ``early_step``.
    """
    if depth < 4:
        raise InvalidIndices("depth must be at least 4")
    if not 0 <= early_step < late_step < depth - 1:
        raise InvalidIndices("need 0 <= early_step < late_step < depth - 1")
    if 2 ** depth > MAX_LEAVES:
        raise TooLarge(f"2**{depth} leaves exceed {MAX_LEAVES}")

    rng = generator(filler_seed)
    astar = tuple(int(a) for a in rng.integers(0, 2, depth))
    mid = tuple(int(a) for a in rng.integers(0, 2, max(0, depth - 2 - late_step)))
    tail = tuple(int(a) for a in rng.integers(0, 2, depth - 1 - early_step))

    leaf49 = astar[:late_step] + (1 - astar[late_step],) + mid + (1,)
    leaf100 = astar[:late_step] + (1 - astar[late_step],) + mid + (0,)
    leaf48 = astar[:early_step] + (1 - astar[early_step],) + tail

    rewards = _filler_rewards(filler_seed, 2 ** depth)
    specials = ((astar, 50), (leaf49, 49), (leaf100, -100), (leaf48, 48))
    construction = TreeConstruction(
        kind="example1",
        optimal_actions=astar,
        decoy_step=early_step,
        decoy_action=1 - astar[early_step],
        optimal_plan=((late_step, 1 - astar[late_step]), (depth - 1, 0)),
        special_leaves=specials,
    )
    return _with_specials(2, depth, rewards, specials, construction)


def build_example2(depth: int, fork_step: int, filler_seed: int) -> TreeGameSpec:
    """Ternary tree where forcing the argmin-Q action can never reach -100.

    Requires ``0 <= fork_step < depth - 1`` and ``depth >= 2``.  At the fork
    the argmin branch caps at 48 while the -100 leaf sits under the branch
    whose best leaf pays 49.
    """
    if depth < 2:
        raise InvalidIndices("depth must be at least 2")
    if not 0 <= fork_step < depth - 1:
        raise InvalidIndices("need 0 <= fork_step < depth - 1")
    if 3 ** depth > MAX_LEAVES:
        raise TooLarge(f"3**{depth} leaves exceed {MAX_LEAVES}")

    rng = generator(filler_seed)
    astar = tuple(int(a) for a in rng.integers(0, 3, depth))
    mid = tuple(int(a) for a in rng.integers(0, 3, max(0, depth - 2 - fork_step)))
    tail = tuple(int(a) for a in rng.integers(0, 3, depth - 1 - fork_step))

    lure = (astar[fork_step] + 1) % 3
    decoy = (astar[fork_step] + 2) % 3
    leaf49 = astar[:fork_step] + (lure,) + mid + (1,)
    leaf100 = astar[:fork_step] + (lure,) + mid + (0,)
    leaf48 = astar[:fork_step] + (decoy,) + tail

    rewards = _filler_rewards(filler_seed, 3 ** depth)
    specials = ((astar, 50), (leaf49, 49), (leaf100, -100), (leaf48, 48))
    construction = TreeConstruction(
        kind="example2",
        optimal_actions=astar,
        decoy_step=fork_step,
        decoy_action=decoy,
        optimal_plan=((fork_step, lure), (depth - 1, 0)),
        special_leaves=specials,
    )
    return _with_specials(3, depth, rewards, specials, construction)


def _with_specials(branching, depth, rewards, specials, construction) -> TreeGameSpec:
    seen = set()
    for seq, value in specials:
        idx = 0
        for a in seq:
            idx = idx * branching + a
        if idx in seen:
            raise InvalidIndices("special leaves collide; indices too tight")
        seen.add(idx)
        rewards[idx] = value
    return TreeGameSpec(branching, depth, rewards, construction)


def build_random_tree(depth: int, branching: int, seed: int) -> TreeGameSpec:
    """Uniform integer leaf rewards in [-100, 50]; no construction metadata."""
    if branching ** depth > MAX_LEAVES:
        raise TooLarge(f"{branching}**{depth} leaves exceed {MAX_LEAVES}")
    rng = generator(seed)
    rewards = rng.integers(-100, 51, branching ** depth).astype(np.float64)
    return TreeGameSpec(branching, depth, rewards, None)
