"""Baseline attacks on frozen team policies.

Four families, all operating through the same adversarial wrapper so their
statistics are directly comparable with learned attacks:

``attack_random``
    Each attacked agent independently deviates with a fixed probability, to
    a uniformly random non-greedy legal action (mode ``random``) or to the
    lowest-Q legal action (mode ``lowestQ``).

``attack_rule_based``
    An online trigger rule: compute a confidence score delta from the
    victim's Q row and force the lowest-Q action whenever delta clears a
    threshold.  Two scores are provided: ``maxdiff`` (spread of the softmax
    distribution, in [0, 1]) and ``entropy`` (normalised entropy written as
    sum p log p / log m, a number in [-1, 0]; higher means more peaked).

``attack_dense``
    Force the lowest-Q action at every step.

``train_rlf`` / :class:`TimedArgminEnv`
    A learned timing attacker: per attacked agent a binary pass/strike
    action, where a strike forces that agent's lowest-Q action and costs
    ``c_adv`` whether or not it changes the action.  Trained with the same
    Q-learning machinery as the unrestricted learned attacker.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .attack import AdversarialEnv, AttackStats, FrozenTeamWrapper, rollout_wrapped
from .core import Environment, EnvState, JointAction, MmdpSpec
from .envs.trees import TreeGame
from .learners import (
    ConfigMismatch,
    QTeamPolicy,
    TrainConfig,
    _train_deep,
    masked_argmin,
    obs_signature,
    policy_hash,
)
from .seeding import derive_seed, generator

DELTA_KINDS = ("maxdiff", "entropy")


@dataclass(frozen=True)
class DeltaRule:
    """Which per-step confidence score drives the rule-based attack."""

    kind: str = "maxdiff"

    def __post_init__(self) -> None:
        if self.kind not in DELTA_KINDS:
            raise ValueError(f"unknown delta rule {self.kind!r}")

    def bounds(self) -> tuple[float, float]:
        return (0.0, 1.0) if self.kind == "maxdiff" else (-1.0, 0.0)


def softmax(q_row: np.ndarray) -> np.ndarray:
    z = np.exp(q_row - q_row.max())
    return z / z.sum()


def delta_score(rule: DeltaRule, q_row: np.ndarray) -> float:
    """Confidence score of one Q row, computed on softmax probabilities.

    ``maxdiff`` is max(p) - min(p); ``entropy`` is sum(p log p) / log(m),
    which lies in [-1, 0] and increases as the distribution gets more
    peaked.
    """
    q_row = np.asarray(q_row, dtype=np.float64)
    if q_row.ndim != 1 or q_row.size < 2:
        raise ValueError("delta scores need a Q row over at least two actions")
    if not np.all(np.isfinite(q_row)):
        raise ValueError("delta scores need finite Q values")
    p = softmax(q_row)
    if rule.kind == "maxdiff":
        return float(p.max() - p.min())
    return float(np.sum(p * np.log(p)) / math.log(q_row.size))


def threshold_grid(rule: DeltaRule, observed=(), points: int = 1000) -> np.ndarray:
    """Evenly spaced thresholds over the rule's range, plus every observed
    score value, so sweeps cannot miss a knife-edge trigger level."""
    lo, hi = rule.bounds()
    grid = np.linspace(lo, hi, points)
    return np.unique(np.concatenate([grid, np.asarray(sorted(observed), dtype=np.float64)]))


def collect_deltas(env: Environment, base_policy: QTeamPolicy,
                   targets: tuple[int, ...], rule: DeltaRule,
                   n_episodes: int = 20, seed: int = 0) -> list[float]:
    """Score values the rule could encounter.

    Tree games enumerate every internal node exactly; other environments
    sample uniformly random rollouts.
    """
    if isinstance(env, TreeGame):
        return [delta_score(rule, base_policy.q_values(0, np.array([float(node)])))
                for node in range(env.tree.n_internal)]
    rng = generator(seed, 1)
    out: list[float] = []
    for ep in range(n_episodes):
        state = env.reset(derive_seed(seed, ep))
        prev = [-1] * env.spec.n_agents
        while not state.terminal:
            for k in targets:
                out.append(delta_score(
                    rule, base_policy.q_values(k, state.observations[k], prev[k])))
            actions = [int(legal[rng.integers(len(legal))])
                       for legal in (np.flatnonzero(m) for m in state.action_masks)]
            _, state = env.step(state, JointAction(tuple(actions)))
            prev = actions
    return out


# ---------------------------------------------------------------------------
# per-step substitution baselines
# ---------------------------------------------------------------------------


def _run_substitution(env: Environment, base_policy: QTeamPolicy,
                      targets: tuple[int, ...], lam: float, n_episodes: int,
                      seed: int, choose) -> list[AttackStats]:
    """Shared episode loop: ``choose(j, q_row, greedy_action, mask, rng)``
    returns the executed action for target slot ``j`` each step."""
    wrapper = AdversarialEnv(env, base_policy, tuple(targets), lam)
    rng = generator(seed, 1)
    out = []
    for ep in range(n_episodes):
        state = wrapper.reset(derive_seed(seed, ep))
        counts = [0] * len(wrapper.targets)
        steps = 0
        team = adv = 0.0
        while not state.terminal:
            base = wrapper.base_actions(state)
            rows = wrapper.target_q_rows(state)
            masks = state.action_masks
            actions = tuple(choose(j, rows[j], base[k], masks[j], rng)
                            for j, k in enumerate(wrapper.targets))
            reward, state = wrapper.step(state, JointAction(actions))
            info = state.carry[2]
            steps += 1
            for j, k in enumerate(wrapper.targets):
                counts[j] += int(info.executed[k] != info.base_actions[k])
            team += info.base_reward
            adv += reward
        out.append(AttackStats(
            counts=tuple(counts), total_steps=steps, team_return=team,
            adv_return=adv, won=wrapper.episode_won(state)))
    return out


def attack_random(mode: str, prob: float, base_policy: QTeamPolicy,
                  env: Environment, targets: tuple[int, ...], n_episodes: int,
                  seed: int, lam: float = 0.0) -> list[AttackStats]:
    """Independent per-step random attack on each target agent.

    mode ``random`` deviates to a uniform non-greedy legal action; mode
    ``lowestQ`` deviates to the lowest-Q legal action.
    """
    if mode not in ("random", "lowestQ"):
        raise ValueError(f"unknown attack_random mode {mode!r}")
    if not 0.0 <= prob <= 1.0:
        raise ValueError("prob must lie in [0, 1]")

    def choose(j, row, greedy_a, mask, rng):
        if rng.random() >= prob:
            return greedy_a
        if mode == "lowestQ":
            return masked_argmin(row, mask)
        others = [a for a in np.flatnonzero(mask) if a != greedy_a]
        if not others:
            return greedy_a
        return int(others[rng.integers(len(others))])

    return _run_substitution(env, base_policy, targets, lam, n_episodes, seed, choose)


def attack_rule_based(rule: DeltaRule, threshold: float, base_policy: QTeamPolicy,
                      env: Environment, targets: tuple[int, ...], n_episodes: int,
                      seed: int, lam: float = 0.0) -> list[AttackStats]:
    """Force the lowest-Q action whenever the victim's score clears
    ``threshold``; pass through otherwise."""
    if math.isnan(threshold):
        raise ValueError("threshold must not be NaN")

    def choose(j, row, greedy_a, mask, rng):
        if delta_score(rule, row) >= threshold:
            return masked_argmin(row, mask)
        return greedy_a

    return _run_substitution(env, base_policy, targets, lam, n_episodes, seed, choose)


def attack_dense(base_policy: QTeamPolicy, env: Environment,
                 targets: tuple[int, ...], n_episodes: int, seed: int,
                 lam: float = 0.0) -> list[AttackStats]:
    """Force the lowest-Q action for every target at every step."""

    def choose(j, row, greedy_a, mask, rng):
        return masked_argmin(row, mask)

    return _run_substitution(env, base_policy, targets, lam, n_episodes, seed, choose)


# ---------------------------------------------------------------------------
# learned timing attacker
# ---------------------------------------------------------------------------


class TimedArgminEnv(FrozenTeamWrapper):
    """Timing-only attack MDP: per target a binary pass/strike action.

    A strike replaces that target's action with its lowest-Q legal action
    and costs ``cost``, whether or not the forced action differs from the
    greedy one; the attacker's reward is ``-r - cost * strikes``.
    """

    PASS, STRIKE = 0, 1

    def __init__(self, env: Environment, policy: QTeamPolicy,
                 targets: tuple[int, ...], cost: float):
        super().__init__(env, policy, targets)
        if not (cost >= 0 and math.isfinite(cost)):
            raise ValueError("cost must be finite and non-negative")
        self.cost = cost
        base = env.spec
        self.spec = MmdpSpec(
            n_agents=len(targets),
            action_counts=(2,) * len(targets),
            obs_dims=tuple(base.obs_dims[k] for k in targets),
            state_dim=base.state_dim,
            horizon=base.horizon,
            discount=base.discount,
            initial_dist=base.initial_dist,
        )

    def step(self, state: EnvState, action: JointAction) -> tuple[float, EnvState]:
        self.check_action(state, action)
        base, _prev, _ = state.carry
        executed = list(self.base_actions(state))
        strikes = 0
        for j, k in enumerate(self.targets):
            if action[j] == self.STRIKE:
                strikes += 1
                row = self.policy.q_values(k, base.observations[k], _prev[k])
                executed[k] = masked_argmin(row, base.action_masks[k])
        cost = self.cost
        return self._advance(state, tuple(executed),
                             lambda r, dev: -r - cost * strikes)

    def _observations(self, base: EnvState) -> list[np.ndarray]:
        return [base.observations[k] for k in self.targets]

    def _masks(self, base: EnvState) -> list[np.ndarray]:
        return [np.ones(2, dtype=bool) for _ in self.targets]

    def describe(self) -> str:
        return (f"TimedArgmin cost={self.cost!r} targets={self.targets} "
                f"policy={policy_hash(self.policy)[:16]} "
                f"over [{self.base_env.describe()}]")


def train_rlf(env: Environment, base_policy: QTeamPolicy,
              targets: tuple[int, ...], c_adv: float,
              train: TrainConfig) -> QTeamPolicy:
    """Train the timing attacker; tabular fast path on tree games, deep
    Q-learning with a mixer elsewhere."""
    timed = TimedArgminEnv(env, base_policy, tuple(targets), c_adv)
    if isinstance(env, TreeGame) and base_policy.mode == "tabular":
        policy = _train_tabular_rlf(timed, train)
    else:
        policy = _train_deep(timed, "QMIX", train)
    policy.meta["kind"] = "timing-attacker"
    policy.meta["c_adv"] = repr(c_adv)
    policy.meta["targets"] = ",".join(map(str, timed.targets))
    policy.meta["base_policy"] = policy_hash(base_policy)
    policy.meta.setdefault("env_fingerprint", timed.fingerprint())
    policy.meta.setdefault("seed", str(train.seed))
    return policy


def rollout_rlf(env: Environment, base_policy: QTeamPolicy, timing_policy,
                targets: tuple[int, ...], c_adv: float, n_episodes: int,
                seed: int) -> list[AttackStats]:
    timed = TimedArgminEnv(env, base_policy, tuple(targets), c_adv)
    return rollout_wrapped(timed, timing_policy, n_episodes, seed)


def _train_tabular_rlf(timed: TimedArgminEnv, cfg: TrainConfig) -> QTeamPolicy:
    """Exact-update Q learning over (node, pass/strike) on tree games."""
    tree = timed.base_env.tree
    b, depth = tree.branching, tree.depth
    cost = timed.cost
    obs = [np.array([float(node)]) for node in range(tree.n_internal)]
    greedy = np.array([timed.policy.greedy(0, o) for o in obs])
    forced = np.array([masked_argmin(timed.policy.q_values(0, o), None) for o in obs])
    q = np.zeros((tree.n_internal, 2))
    visits = np.zeros((tree.n_internal, 2), dtype=np.int64)
    child_base = np.array([tree.level_offset(d + 1) - tree.level_offset(d) * b
                           for d in range(depth)])
    leaf_lo = tree.level_offset(depth)
    rewards = tree.leaf_rewards
    by_visits = cfg.tabular_lr == "visit-count"
    if not by_visits and cfg.tabular_lr != "constant":
        raise ConfigMismatch(f"unknown tabular_lr {cfg.tabular_lr!r}")

    rng = generator(cfg.seed)
    for ep in range(cfg.episodes):
        eps = cfg.epsilon(ep)
        explore = rng.random(depth) < eps
        random_t = rng.integers(0, 2, depth)
        node = 0
        for d in range(depth):
            t = int(random_t[d]) if explore[d] else int(np.argmax(q[node]))
            a = forced[node] if t else greedy[node]
            child = node * b + a + child_base[d]
            imm = -cost if t else 0.0
            if d == depth - 1:
                target = imm - rewards[child - leaf_lo]
            else:
                target = imm + q[child].max()
            visits[node, t] += 1
            if by_visits:
                q[node, t] += (target - q[node, t]) / visits[node, t]
            else:
                q[node, t] = target
            node = child

    table = {obs_signature(np.array([float(node)])): q[node].copy()
             for node in range(tree.n_internal)}
    return QTeamPolicy(
        mode="tabular", algo="tabular-Q", n_agents=1,
        action_counts=(2,), obs_dims=(1,), tables=[table])
