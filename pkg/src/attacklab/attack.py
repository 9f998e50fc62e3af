"""Adversarial MDPs over frozen team policies.

The attacked team keeps playing its frozen greedy policy.  An attacker picks
the executed actions of a chosen subset ``k`` of agents; every executed
action that differs from what the frozen policy would have chosen counts as
one deviation.  :class:`AdversarialEnv` packages this interaction as an
ordinary cooperative MDP for the attacker, with reward

    r' = -r - lam * (deviations this step),

so a return-maximising attacker simultaneously minimises the team's return
and the number of touched (step, agent) pairs.  Because the wrapper is a
regular :class:`~attacklab.core.Environment`, the base-policy learners are
reused unchanged to train attackers: a tabular attacker on tree games, or a
QMIX-style attacker (whose mixer degenerates to a state-conditioned scalar
transform when a single agent is attacked).

The attacker observes exactly what its victims observe; the global state is
seen only by the mixer during training.  Non-attacked agents always execute
their frozen greedy actions, computed with the same tie-breaking the base
policy uses everywhere, so "don't attack" is always representable by copying
the base action.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

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

ATTACKER_ALGOS = ("tabular-Q", "single-agent-QMIX", "multi-agent-QMIX")


class BadTargets(Exception):
    """The attacked-agent subset is empty, duplicated or out of range."""


@dataclass(frozen=True)
class AttackConfig:
    """Everything that defines one attack-training run: the attacked subset,
    the deviation price and the learner settings."""

    targets: tuple[int, ...] = (0,)
    lam: float = 1.0
    attacker_algo: str = "single-agent-QMIX"
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self) -> None:
        if not (self.lam >= 0 and math.isfinite(self.lam)):
            raise ValueError("lam must be finite and non-negative")
        if self.attacker_algo not in ATTACKER_ALGOS:
            raise ConfigMismatch(f"unknown attacker algorithm {self.attacker_algo!r}")


@dataclass(frozen=True)
class StepInfo:
    """What actually happened during one wrapped step."""

    base_reward: float
    deviations: int
    base_actions: tuple[int, ...]
    executed: tuple[int, ...]


def _check_policy(env: Environment, policy: QTeamPolicy) -> None:
    if (policy.n_agents != env.spec.n_agents
            or tuple(policy.action_counts) != tuple(env.spec.action_counts)
            or tuple(policy.obs_dims) != tuple(env.spec.obs_dims)):
        raise ConfigMismatch("frozen policy does not fit the environment")


def _check_targets(env: Environment, targets: tuple[int, ...]) -> None:
    if not targets:
        raise BadTargets("need at least one attacked agent")
    if list(targets) != sorted(set(targets)):
        raise BadTargets("targets must be strictly increasing and unique")
    if targets[0] < 0 or targets[-1] >= env.spec.n_agents:
        raise BadTargets(f"targets out of range for {env.spec.n_agents} agents")


class FrozenTeamWrapper(Environment):
    """Shared wrapper plumbing for attacks on a frozen team.

    The wrapped state's carry holds (inner state, previously executed joint
    action, :class:`StepInfo` of the step that produced it).  Subclasses
    decide what the attacker observes and how its actions map to executed
    team actions.
    """

    def __init__(self, env: Environment, policy: QTeamPolicy, targets: tuple[int, ...]):
        _check_policy(env, policy)
        _check_targets(env, targets)
        self.base_env = env
        self.policy = policy
        self.targets = targets
        self.has_win_condition = env.has_win_condition

    def episode_won(self, state: EnvState) -> bool:
        return self.base_env.episode_won(state.carry[0])

    def base_actions(self, state: EnvState) -> tuple[int, ...]:
        """The frozen team's joint action at ``state`` (before interference)."""
        base, prev, _ = state.carry
        return tuple(
            self.policy.greedy(i, base.observations[i], base.action_masks[i], prev[i])
            for i in range(self.base_env.spec.n_agents))

    def target_q_rows(self, state: EnvState) -> list[np.ndarray]:
        """Frozen Q rows of the attacked agents (rule-based scores read these)."""
        base, prev, _ = state.carry
        return [self.policy.q_values(k, base.observations[k], prev[k])
                for k in self.targets]

    def _advance(self, state: EnvState, executed: tuple[int, ...],
                 adv_reward_of) -> tuple[float, EnvState]:
        base, _prev, _ = state.carry
        base_actions = self.base_actions(state)
        deviations = sum(executed[k] != base_actions[k] for k in self.targets)
        base_reward, nxt = self.base_env.step(base, JointAction(executed))
        info = StepInfo(base_reward, deviations, base_actions, executed)
        wrapped = self._wrap_state(nxt, executed, info)
        return adv_reward_of(base_reward, deviations), wrapped

    def _wrap_state(self, base: EnvState, prev: tuple[int, ...],
                    info: StepInfo | None) -> EnvState:
        return EnvState(
            global_state=base.global_state,
            observations=self._observations(base),
            step_index=base.step_index,
            terminal=base.terminal,
            action_masks=self._masks(base),
            carry=(base, prev, info),
        )

    def reset(self, seed: int) -> EnvState:
        base = self.base_env.reset(seed)
        return self._wrap_state(base, (-1,) * self.base_env.spec.n_agents, None)

    def _observations(self, base: EnvState) -> list[np.ndarray]:
        raise NotImplementedError

    def _masks(self, base: EnvState) -> list[np.ndarray]:
        raise NotImplementedError


def step_info(state: EnvState) -> StepInfo | None:
    """The :class:`StepInfo` recorded when ``state`` was produced (None for
    initial states)."""
    return state.carry[2]


class AdversarialEnv(FrozenTeamWrapper):
    """The attacker chooses the executed action of every target agent."""

    def __init__(self, env: Environment, policy: QTeamPolicy,
                 targets: tuple[int, ...], lam: float):
        super().__init__(env, policy, targets)
        if not (lam >= 0 and math.isfinite(lam)):
            raise ValueError("lam must be finite and non-negative")
        self.lam = lam
        base = env.spec
        self.spec = MmdpSpec(
            n_agents=len(targets),
            action_counts=tuple(base.action_counts[k] for k in targets),
            obs_dims=tuple(base.obs_dims[k] for k in targets),
            state_dim=base.state_dim,
            horizon=base.horizon,
            discount=base.discount,
            initial_dist=base.initial_dist,
        )

    def step(self, state: EnvState, action: JointAction) -> tuple[float, EnvState]:
        self.check_action(state, action)
        executed = list(self.base_actions(state))
        for j, k in enumerate(self.targets):
            executed[k] = action[j]
        lam = self.lam
        return self._advance(state, tuple(executed),
                             lambda r, dev: -r - lam * dev)

    def _observations(self, base: EnvState) -> list[np.ndarray]:
        return [base.observations[k] for k in self.targets]

    def _masks(self, base: EnvState) -> list[np.ndarray]:
        return [base.action_masks[k].copy() for k in self.targets]

    def describe(self) -> str:
        return (f"Adversarial lam={self.lam!r} targets={self.targets} "
                f"policy={policy_hash(self.policy)[:16]} "
                f"over [{self.base_env.describe()}]")


def wrap_adversarial(env: Environment, base_policy: QTeamPolicy,
                     targets: tuple[int, ...], lam: float) -> AdversarialEnv:
    """Validated constructor for the adversarial wrapper."""
    return AdversarialEnv(env, base_policy, tuple(targets), lam)


# ---------------------------------------------------------------------------
# attacker training
# ---------------------------------------------------------------------------


def train_attack(adv_env: AdversarialEnv, config: AttackConfig) -> QTeamPolicy:
    """Train an attacker in a wrapped environment.

    ``tabular-Q`` runs a fast exact-update loop on tree games; the QMIX
    variants reuse the deep learner on the wrapper (with one attacked agent
    the mixer is a state-conditioned monotone transform of a single Q value).
    """
    if tuple(config.targets) != adv_env.targets or config.lam != adv_env.lam:
        raise ConfigMismatch("attack config does not match the wrapped environment")
    m = len(adv_env.targets)
    algo = config.attacker_algo
    if algo == "tabular-Q":
        if not isinstance(adv_env.base_env, TreeGame) or adv_env.policy.mode != "tabular":
            raise ConfigMismatch("tabular attackers need a tree game and a "
                                 "tabular base policy")
        policy = _train_tabular_attacker(adv_env, config.train)
    elif algo == "single-agent-QMIX":
        if m != 1:
            raise ConfigMismatch("single-agent-QMIX attacks exactly one agent")
        policy = _train_deep(adv_env, "QMIX", config.train)
    else:  # multi-agent-QMIX
        if m < 2:
            raise ConfigMismatch("multi-agent-QMIX needs at least two targets")
        policy = _train_deep(adv_env, "QMIX", config.train)
    policy.meta["kind"] = "attacker"
    policy.meta["lam"] = repr(adv_env.lam)
    policy.meta["targets"] = ",".join(map(str, adv_env.targets))
    policy.meta["base_policy"] = policy_hash(adv_env.policy)
    policy.meta.setdefault("env_fingerprint", adv_env.fingerprint())
    policy.meta.setdefault("seed", str(config.train.seed))
    return policy


def _train_tabular_attacker(adv: AdversarialEnv, cfg: TrainConfig) -> QTeamPolicy:
    """Q learning for the attacker over tree node ids.

    The attacked episode is deterministic given the attacker's choices, so
    assignment updates converge to the exact optimum of the regularised
    objective; per-step reward is ``-lam`` per deviation plus the negated
    leaf payout on the last step.
    """
    tree = adv.base_env.tree
    b, depth = tree.branching, tree.depth
    lam = adv.lam
    greedy = np.array([adv.policy.greedy(0, np.array([float(node)]))
                       for node in range(tree.n_internal)])
    q = np.zeros((tree.n_internal, b))
    visits = np.zeros((tree.n_internal, b), dtype=np.int64)
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
        random_a = rng.integers(0, b, depth)
        node = 0
        for d in range(depth):
            a = int(random_a[d]) if explore[d] else int(np.argmax(q[node]))
            child = node * b + a + child_base[d]
            imm = -lam if a != greedy[node] else 0.0
            if d == depth - 1:
                target = imm - rewards[child - leaf_lo]
            else:
                target = imm + q[child].max()
            visits[node, a] += 1
            if by_visits:
                q[node, a] += (target - q[node, a]) / visits[node, a]
            else:
                q[node, a] = target
            node = child

    table = {obs_signature(np.array([float(node)])): q[node].copy()
             for node in range(tree.n_internal)}
    return QTeamPolicy(
        mode="tabular", algo="tabular-Q", n_agents=1,
        action_counts=(b,), obs_dims=(1,), tables=[table])


# ---------------------------------------------------------------------------
# attacked rollouts
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AttackStats:
    """Per-episode accounting of an attacked rollout.

    ``counts[j]`` is the number of steps on which target ``j``'s executed
    action deviated from the frozen policy's choice — the quantity the reward
    transform prices at ``lam`` each.  ``adv_return`` is the attacker's
    summed wrapper reward.
    """

    counts: tuple[int, ...]
    total_steps: int
    team_return: float
    adv_return: float
    won: bool

    @property
    def deviations(self) -> int:
        return sum(self.counts)


class RestrictedPolicy:
    """A base policy viewed as an attacker over its own agents: it replays
    the frozen greedy actions of the target subset, so it never deviates."""

    def __init__(self, base: QTeamPolicy, targets: tuple[int, ...]):
        self.base = base
        self.targets = tuple(targets)
        self.n_agents = len(self.targets)

    def greedy_all(self, state: EnvState, prev_actions: list[int]) -> list[int]:
        return [self.base.greedy(k, state.observations[j], state.action_masks[j],
                                 prev_actions[j])
                for j, k in enumerate(self.targets)]


def restrict_policy(base_policy: QTeamPolicy, targets: tuple[int, ...]) -> RestrictedPolicy:
    return RestrictedPolicy(base_policy, targets)


def rollout_wrapped(wrapper: FrozenTeamWrapper, attacker, n_episodes: int,
                    seed: int) -> list[AttackStats]:
    """Greedy attacker episodes through any frozen-team wrapper; the attacker
    only needs a ``greedy_all(state, prev_actions)`` method."""
    out = []
    n = wrapper.spec.n_agents
    targets = wrapper.targets
    for ep in range(n_episodes):
        state = wrapper.reset(derive_seed(seed, ep))
        prev = [-1] * n
        steps = 0
        counts = [0] * len(targets)
        team = adv = 0.0
        while not state.terminal:
            actions = attacker.greedy_all(state, prev)
            reward, state = wrapper.step(state, JointAction(tuple(actions)))
            info = step_info(state)
            steps += 1
            for j, k in enumerate(targets):
                counts[j] += int(info.executed[k] != info.base_actions[k])
            team += info.base_reward
            adv += reward
            prev = actions
        out.append(AttackStats(
            counts=tuple(counts), total_steps=steps, team_return=team,
            adv_return=adv, won=wrapper.episode_won(state)))
    return out


def rollout_attacked(env: Environment, base_policy: QTeamPolicy, attacker,
                     targets: tuple[int, ...], lam: float, n_episodes: int,
                     seed: int) -> list[AttackStats]:
    """Greedy attacker rollouts against a frozen base policy; deterministic
    given ``seed``."""
    wrapper = AdversarialEnv(env, base_policy, tuple(targets), lam)
    return rollout_wrapped(wrapper, attacker, n_episodes, seed)


def summarize_attack(stats: list[AttackStats],
                     has_win_condition: bool = True) -> dict[str, float | None]:
    """Aggregate rollout statistics.

    ``attack_ratio`` is the per-target mean deviation count over total steps,
    pooled across episodes (the attacked-steps / total-steps evaluation
    criterion); for a single target it is simply the fraction of steps whose
    action was changed.
    """
    if not stats:
        raise ValueError("no episodes to summarize")
    total_steps = sum(s.total_steps for s in stats)
    n_targets = len(stats[0].counts)
    return {
        "episodes": float(len(stats)),
        "win_rate": (sum(s.won for s in stats) / len(stats)
                     if has_win_condition else None),
        "mean_team_return": float(np.mean([s.team_return for s in stats])),
        "mean_adv_return": float(np.mean([s.adv_return for s in stats])),
        "attack_ratio": sum(s.deviations for s in stats) / (n_targets * total_steps),
        "mean_attacked_steps": float(np.mean([s.deviations for s in stats])),
        "mean_total_steps": total_steps / len(stats),
    }
