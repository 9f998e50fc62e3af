"""Exact solutions on tree games: optimal Q values and optimal attacks.

Everything here is plain backward induction over the reward tree, so the
results are exact up to float64 arithmetic (all inputs are small integers, so
sums are in fact exact).  Three attacker DPs are provided:

``oracle_budget_dp``
    Minimise the team return subject to at most ``budget`` forced deviations;
    non-forced steps follow the frozen greedy policy.

``oracle_reg_dp``
    Maximise ``-return - lam * deviations`` with no hard budget; this is the
    soft objective the learned attacker trains on.

``oracle_forced_argmin_dp``
    The attacker only picks *when* to strike; a strike replaces the greedy
    action with the lowest-Q action.  This is the exact optimum of the
    timing-only attacker family, at ``cost`` per strike.

Each DP returns an :class:`OracleResult` whose plan can be replayed step by
step through the environment to reproduce the value bit-exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .envs.trees import TreeGame, TreeGameSpec


@dataclass(frozen=True)
class OracleResult:
    """Outcome of an exact attack DP.

    ``plan`` lists forced deviations as (step, agent, action); steps the plan
    omits follow the frozen greedy policy.  ``value`` is the optimised
    objective (team return for the budget DP, regularised attacker objective
    otherwise); ``team_return`` is the raw team return of the witness plan.
    """

    kind: str
    parameter: float
    value: float
    plan: tuple[tuple[int, int, int], ...]
    attack_count: int
    team_return: float


class TreeQ:
    """Optimal Q values of a tree game, with greedy/argmin helpers.

    Ties in both ``greedy`` and ``argmin`` resolve to the lowest action
    index, matching the package-wide convention.
    """

    def __init__(self, tree: TreeGameSpec, q: np.ndarray):
        self.tree = tree
        self.q = q
        self._greedy = np.argmax(q, axis=1)
        self._argmin = np.argmin(q, axis=1)

    def q_row(self, node: int) -> np.ndarray:
        return self.q[node]

    def value(self, node: int) -> float:
        return float(self.q[node].max())

    def greedy(self, node: int) -> int:
        return int(self._greedy[node])

    def argmin(self, node: int) -> int:
        return int(self._argmin[node])


def _tree_of(tree: TreeGameSpec | TreeGame) -> TreeGameSpec:
    return tree.tree if isinstance(tree, TreeGame) else tree


def value_iteration(tree: TreeGameSpec | TreeGame) -> TreeQ:
    """Backward-induction Q values for every internal node (discount 1)."""
    t = _tree_of(tree)
    b, depth = t.branching, t.depth
    q = np.empty((t.n_internal, b))
    values = t.leaf_rewards.astype(np.float64)
    for d in reversed(range(depth)):
        rows = values.reshape(b ** d, b)
        q[t.level_offset(d):t.level_offset(d + 1)] = rows
        values = rows.max(axis=1)
    return TreeQ(t, q)


def _greedy_by_level(t: TreeGameSpec, tq: TreeQ, d: int) -> np.ndarray:
    return tq._greedy[t.level_offset(d):t.level_offset(d + 1)]


def oracle_budget_dp(tree: TreeGameSpec | TreeGame, budget: int) -> OracleResult:
    """Worst team return reachable with at most ``budget`` forced deviations."""
    t = _tree_of(tree)
    if budget < 0:
        raise ValueError("budget must be non-negative")
    tq = value_iteration(t)
    b, depth = t.branching, t.depth
    k = min(budget, depth)

    # levels[d][j, r]: worst return from rank-r node at depth d with j strikes left
    levels: list[np.ndarray] = [None] * (depth + 1)
    levels[depth] = np.tile(t.leaf_rewards, (k + 1, 1))
    for d in reversed(range(depth)):
        nxt = levels[d + 1].reshape(k + 1, b ** d, b)
        g = _greedy_by_level(t, tq, d)
        follow = np.take_along_axis(nxt, g[None, :, None], axis=2)[..., 0]
        masked = nxt.copy()
        masked[:, np.arange(b ** d), g] = np.inf
        strike_best = masked.min(axis=2)
        cur = follow.copy()
        if k > 0:
            cur[1:] = np.minimum(follow[1:], strike_best[:-1])
        levels[d] = cur

    # witness walk; ties prefer following the greedy action, then low index
    plan: list[tuple[int, int, int]] = []
    rank, left = 0, k
    for d in range(depth):
        g = int(_greedy_by_level(t, tq, d)[rank])
        nxt = levels[d + 1]
        best_a, best_v = g, nxt[left, rank * b + g]
        if left > 0:
            for a in range(b):
                if a == g:
                    continue
                v = nxt[left - 1, rank * b + a]
                if v < best_v:
                    best_a, best_v = a, v
        if best_a != g:
            plan.append((d, 0, best_a))
            left -= 1
        rank = rank * b + best_a

    value = float(levels[0][k, 0])
    return OracleResult(
        kind="budget",
        parameter=float(budget),
        value=value,
        plan=tuple(plan),
        attack_count=len(plan),
        team_return=value,
    )


def oracle_reg_dp(tree: TreeGameSpec | TreeGame, lam: float) -> OracleResult:
    """Maximum of ``-return - lam * deviations`` over all forcing plans.

    Among value-optimal plans the one with the fewest deviations is reported
    (then greedy-following, then lowest action index), so the witness count
    is deterministic; the optimal *value* is tie-break independent.
    """
    t = _tree_of(tree)
    if lam < 0:
        raise ValueError("lam must be non-negative")
    tq = value_iteration(t)
    b, depth = t.branching, t.depth

    val = [None] * (depth + 1)
    cnt = [None] * (depth + 1)
    val[depth] = -t.leaf_rewards.astype(np.float64)
    cnt[depth] = np.zeros(t.n_leaves)
    for d in reversed(range(depth)):
        child_v = val[d + 1].reshape(b ** d, b)
        child_c = cnt[d + 1].reshape(b ** d, b)
        g = _greedy_by_level(t, tq, d)
        deviates = np.arange(b)[None, :] != g[:, None]
        cand_v = child_v - lam * deviates
        cand_c = child_c + deviates
        best_v = cand_v.max(axis=1)
        tied = cand_v == best_v[:, None]
        best_c = np.where(tied, cand_c, np.inf).min(axis=1)
        val[d], cnt[d] = best_v, best_c

    plan: list[tuple[int, int, int]] = []
    rank = 0
    for d in range(depth):
        g = int(_greedy_by_level(t, tq, d)[rank])
        best = None
        for a in range(b):
            dev = a != g
            key = (-(val[d + 1][rank * b + a] - lam * dev),
                   cnt[d + 1][rank * b + a] + dev,
                   dev,
                   a)
            if best is None or key < best[0]:
                best = (key, a)
        a = best[1]
        if a != g:
            plan.append((d, 0, a))
        rank = rank * b + a

    value = float(val[0][0])
    count = int(cnt[0][0])
    return OracleResult(
        kind="regularized",
        parameter=float(lam),
        value=value,
        plan=tuple(plan),
        attack_count=count,
        team_return=-value - lam * count,
    )


def oracle_forced_argmin_dp(tree: TreeGameSpec | TreeGame, cost: float = 0.0) -> OracleResult:
    """Best timing-only attack when every strike forces the argmin-Q action.

    Maximises ``-return - cost * strikes``; ties prefer fewer strikes.  The
    reported plan only lists strikes that actually deviate from greedy.
    """
    t = _tree_of(tree)
    if cost < 0:
        raise ValueError("cost must be non-negative")
    tq = value_iteration(t)
    b, depth = t.branching, t.depth

    val = [None] * (depth + 1)
    cnt = [None] * (depth + 1)
    val[depth] = -t.leaf_rewards.astype(np.float64)
    cnt[depth] = np.zeros(t.n_leaves)
    for d in reversed(range(depth)):
        child_v = val[d + 1].reshape(b ** d, b)
        child_c = cnt[d + 1].reshape(b ** d, b)
        lo, hi = t.level_offset(d), t.level_offset(d + 1)
        g = tq._greedy[lo:hi]
        m = tq._argmin[lo:hi]
        idx = np.arange(b ** d)
        pass_v, pass_c = child_v[idx, g], child_c[idx, g]
        strike_v, strike_c = child_v[idx, m] - cost, child_c[idx, m] + 1
        best_v = np.maximum(pass_v, strike_v)
        best_c = np.where(strike_v > pass_v, strike_c,
                          np.where(pass_v > strike_v, pass_c,
                                   np.minimum(pass_c, strike_c)))
        val[d], cnt[d] = best_v, best_c

    plan: list[tuple[int, int, int]] = []
    rank = 0
    strikes = 0
    for d in range(depth):
        lo = t.level_offset(d)
        g, m = tq.greedy(lo + rank), tq.argmin(lo + rank)
        pass_key = (-val[d + 1][rank * b + g], cnt[d + 1][rank * b + g], 0)
        strike_key = (-(val[d + 1][rank * b + m] - cost), cnt[d + 1][rank * b + m] + 1, 1)
        if strike_key < pass_key:
            strikes += 1
            if m != g:
                plan.append((d, 0, m))
            rank = rank * b + m
        else:
            rank = rank * b + g

    value = float(val[0][0])
    return OracleResult(
        kind="forced-argmin",
        parameter=float(cost),
        value=value,
        plan=tuple(plan),
        attack_count=strikes,
        team_return=-value - cost * strikes,
    )


def replay_plan(tree: TreeGameSpec | TreeGame, plan: tuple[tuple[int, int, int], ...],
                tq: TreeQ | None = None) -> tuple[float, int]:
    """Roll the greedy policy through the tree, forcing the plan's actions.

    Returns (team return, deviation count); deviations count executed actions
    that differ from the greedy choice at the visited node.
    """
    t = _tree_of(tree)
    env = tree if isinstance(tree, TreeGame) else TreeGame(t)
    tq = tq or value_iteration(t)
    forced = {step: action for step, _agent, action in plan}

    from .core import JointAction  # local import to keep module load cheap

    state = env.reset(seed=0)
    total, deviations = 0.0, 0
    while not state.terminal:
        node = int(state.carry[0])
        g = tq.greedy(node)
        a = forced.get(state.step_index, g)
        if a != g:
            deviations += 1
        reward, state = env.step(state, JointAction((a,)))
        total += reward
    return total, deviations
