"""Base-policy learners: exact tabular solvers and deep Q with value mixing.

Four algorithms share one policy container:

* ``tabular-VI``: exact backward induction on a tree game.
* ``tabular-Q``: epsilon-greedy Q learning with assignment updates, which is
  exact in finite time on the deterministic trees.
* ``VDN``: per-agent Q networks whose utilities are summed into the team value.
* ``QMIX``: the same networks mixed by the monotone hypernetwork mixer.

Network policies are feed-forward; recurrence is replaced by feeding each
agent its observation, a one-hot of its previously executed own action and a
one-hot agent id.  When all agents share an action/observation space the
network parameters are shared across agents (the id input keeps them
distinguishable), which is also what makes multi-agent attack heads cheap.

``greedy_action`` is a pure function of (policy, observation, mask, previous
own action); ties resolve to the lowest action index everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .core import Environment, EnvState, JointAction, sha256_text
from .envs.trees import TreeGame
from .nn import (
    MixerSpec,
    MlpSpec,
    NonFinite,
    Tensor,
    backward,
    load_params,
    mixer_forward,
    mixer_infer,
    mixer_init,
    mlp_forward,
    mlp_infer,
    mlp_init,
    optimizer_init,
    optimizer_step,
    save_params,
    stack_cols,
    sum_mixer,
    take_per_row,
    zero_grads,
)
from .oracles import value_iteration
from .seeding import derive_seed, generator

NETWORK_ALGOS = ("VDN", "QMIX")
TABULAR_ALGOS = ("tabular-VI", "tabular-Q")


class ConfigMismatch(Exception):
    """Algorithm and environment (or options) do not fit together."""


class EmptyEvaluation(Exception):
    """evaluate_policy needs at least one episode."""


class DivergedTraining(Exception):
    """Training hit a non-finite loss; carries the last good policy."""

    def __init__(self, message: str, last_policy: "QTeamPolicy | None" = None):
        super().__init__(message)
        self.last_policy = last_policy


@dataclass
class TrainConfig:
    """Knobs shared by every learner; tabular runs ignore the network fields."""

    episodes: int = 6000
    lr: float = 5e-4
    batch_size: int = 64
    buffer_capacity: int = 50_000
    min_buffer: int = 500
    discount: float = 0.99
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_anneal_episodes: int | None = None  # None: first 20% of episodes
    target_period: int = 200  # gradient updates between target copies
    updates_per_episode: int = 2
    hidden: tuple[int, ...] = (64, 64)
    mixer_embed: int = 32
    mixer_hyper_hidden: int = 64
    tabular_lr: str = "constant"  # "constant" (assignment) or "visit-count"
    seed: int = 0

    def anneal_span(self) -> int:
        if self.eps_anneal_episodes is not None:
            return max(1, self.eps_anneal_episodes)
        return max(1, self.episodes // 5)

    def epsilon(self, episode: int) -> float:
        span = self.anneal_span()
        frac = min(1.0, episode / span)
        return self.eps_start + frac * (self.eps_end - self.eps_start)


@dataclass
class EvalStats:
    n_episodes: int
    mean_return: float
    win_rate: float | None
    mean_length: float

    def score(self) -> float:
        """Ordering metric: win rate when defined, mean return otherwise."""
        return self.mean_return if self.win_rate is None else self.win_rate


def obs_signature(obs: np.ndarray) -> bytes:
    """Byte-exact tabular key for an observation vector."""
    return np.ascontiguousarray(obs, dtype=np.float64).tobytes()


def masked_argmax(row: np.ndarray, mask: np.ndarray | None) -> int:
    if mask is None:
        return int(np.argmax(row))
    legal = np.flatnonzero(mask)
    if legal.size == 0:
        raise ValueError("no legal action")
    return int(legal[np.argmax(row[legal])])


def masked_argmin(row: np.ndarray, mask: np.ndarray | None) -> int:
    if mask is None:
        return int(np.argmin(row))
    legal = np.flatnonzero(mask)
    if legal.size == 0:
        raise ValueError("no legal action")
    return int(legal[np.argmin(row[legal])])


@dataclass
class QTeamPolicy:
    """A team of per-agent Q functions plus an optional value mixer.

    ``tables`` (tabular mode) maps observation signatures to Q rows; unseen
    signatures read as all-zero rows.  ``params`` (network mode) holds every
    tensor under ``agent.``/``agent{i}.`` and ``mixer.`` prefixes.
    """

    mode: str
    algo: str
    n_agents: int
    action_counts: tuple[int, ...]
    obs_dims: tuple[int, ...]
    tables: list[dict[bytes, np.ndarray]] | None = None
    net_specs: list[MlpSpec] | None = None
    shared_net: bool = True
    mixer_kind: str | None = None  # None, "sum" or "hyper"
    mixer_spec: MixerSpec | None = None
    params: dict[str, Tensor] | None = None
    meta: dict[str, str] = field(default_factory=dict)

    # -- network plumbing -------------------------------------------------

    def agent_prefix(self, agent: int) -> str:
        return "agent." if self.shared_net else f"agent{agent}."

    def net_input(self, agent: int, obs: np.ndarray, prev_action: int) -> np.ndarray:
        n_act = self.action_counts[agent]
        out = np.zeros(self.obs_dims[agent] + n_act + self.n_agents)
        out[:self.obs_dims[agent]] = obs
        if prev_action >= 0:
            out[self.obs_dims[agent] + prev_action] = 1.0
        out[self.obs_dims[agent] + n_act + agent] = 1.0
        return out

    def data_view(self) -> dict[str, np.ndarray]:
        return {k: p.data for k, p in self.params.items()}

    # -- Q values ----------------------------------------------------------

    def q_values(self, agent: int, obs: np.ndarray, prev_action: int = -1) -> np.ndarray:
        if self.mode == "tabular":
            row = self.tables[agent].get(obs_signature(obs))
            return row.copy() if row is not None else np.zeros(self.action_counts[agent])
        x = self.net_input(agent, obs, prev_action)[None, :]
        return mlp_infer(self.net_specs[agent], self.data_view(), x,
                         self.agent_prefix(agent))[0]

    def greedy(self, agent: int, obs: np.ndarray, mask: np.ndarray | None = None,
               prev_action: int = -1) -> int:
        return masked_argmax(self.q_values(agent, obs, prev_action), mask)

    def greedy_all(self, state: EnvState, prev_actions: list[int]) -> list[int]:
        return [self.greedy(i, state.observations[i], state.action_masks[i],
                            prev_actions[i])
                for i in range(self.n_agents)]


def greedy_action(policy: QTeamPolicy, agent: int, obs: np.ndarray,
                  mask: np.ndarray | None = None, prev_action: int = -1) -> int:
    """Lowest-index argmax of the policy's Q row over legal actions."""
    return policy.greedy(agent, obs, mask, prev_action)


class ReplayBuffer:
    """Fixed-capacity ring of transition records."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self._items: list = []
        self._pos = 0

    def push(self, item) -> None:
        if len(self._items) < self.capacity:
            self._items.append(item)
        else:
            self._items[self._pos] = item
        self._pos = (self._pos + 1) % self.capacity

    def extend(self, items) -> None:
        for item in items:
            self.push(item)

    def sample(self, batch: int, rng: np.random.Generator) -> list:
        if batch > len(self._items):
            raise ValueError("not enough stored transitions to sample")
        idx = rng.choice(len(self._items), size=batch, replace=False)
        return [self._items[i] for i in idx]

    def __len__(self) -> int:
        return len(self._items)


# ---------------------------------------------------------------------------
# training entry point
# ---------------------------------------------------------------------------


def train_base(env: Environment, algo: str, config: TrainConfig) -> QTeamPolicy:
    """Train (or exactly solve) a base policy for ``env``."""
    if algo in TABULAR_ALGOS:
        if not isinstance(env, TreeGame):
            raise ConfigMismatch(f"{algo} only runs on tree games")
        if algo == "tabular-VI":
            policy = _tabular_from_tree(env)
        else:
            policy = _train_tabular_q_tree(env, config)
    elif algo in NETWORK_ALGOS:
        policy = _train_deep(env, algo, config)
    else:
        raise ConfigMismatch(f"unknown algorithm {algo!r}")
    policy.meta.setdefault("env_fingerprint", env.fingerprint())
    policy.meta.setdefault("seed", str(config.seed))
    return policy


def _tabular_from_tree(env: TreeGame) -> QTeamPolicy:
    tq = value_iteration(env.tree)
    table = {obs_signature(np.array([float(node)])): tq.q_row(node).copy()
             for node in range(env.tree.n_internal)}
    return QTeamPolicy(
        mode="tabular", algo="tabular-VI", n_agents=1,
        action_counts=(env.tree.branching,), obs_dims=(1,), tables=[table])


def _train_tabular_q_tree(env: TreeGame, cfg: TrainConfig) -> QTeamPolicy:
    """Flat-array Q learning over node ids; assignment updates by default."""
    tree = env.tree
    b, depth = tree.branching, tree.depth
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
            target = rewards[child - leaf_lo] if d == depth - 1 else q[child].max()
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
# deep Q with mixing
# ---------------------------------------------------------------------------


def _homogeneous(env: Environment) -> bool:
    return len(set(env.spec.action_counts)) == 1 and len(set(env.spec.obs_dims)) == 1


def build_network_policy(env: Environment, algo: str, cfg: TrainConfig,
                         rng: np.random.Generator) -> QTeamPolicy:
    """Fresh network policy with seeded scaled-uniform init."""
    spec = env.spec
    n = spec.n_agents
    shared = _homogeneous(env)
    if len(cfg.hidden) < 1:
        raise ConfigMismatch("agent networks need at least one hidden layer")
    in_dims = [spec.obs_dims[i] + spec.action_counts[i] + n for i in range(n)]
    net_specs = [MlpSpec((in_dims[i], *cfg.hidden, spec.action_counts[i]))
                 for i in range(n)]

    params: dict[str, Tensor] = {}
    if shared:
        params.update(mlp_init(net_specs[0], rng, "agent."))
    else:
        for i in range(n):
            params.update(mlp_init(net_specs[i], rng, f"agent{i}."))

    mixer_kind = "sum" if algo == "VDN" else "hyper"
    mixer_spec = None
    if mixer_kind == "hyper":
        mixer_spec = MixerSpec(n_inputs=n, state_dim=spec.state_dim,
                               embed_dim=cfg.mixer_embed,
                               hyper_hidden=cfg.mixer_hyper_hidden)
        params.update(mixer_init(mixer_spec, rng, "mixer."))

    return QTeamPolicy(
        mode="network", algo=algo, n_agents=n,
        action_counts=tuple(spec.action_counts), obs_dims=tuple(spec.obs_dims),
        net_specs=net_specs, shared_net=shared,
        mixer_kind=mixer_kind, mixer_spec=mixer_spec, params=params)


def _policy_snapshot(policy: QTeamPolicy) -> QTeamPolicy:
    snap = replace(policy, params={k: Tensor(p.data.copy(), requires_grad=True)
                                   for k, p in policy.params.items()})
    snap.meta = dict(policy.meta)
    return snap


def _train_deep(env: Environment, algo: str, cfg: TrainConfig) -> QTeamPolicy:
    n = env.spec.n_agents
    rng = generator(cfg.seed, 1)
    policy = build_network_policy(env, algo, cfg, generator(cfg.seed, 0))
    target = {k: p.data.copy() for k, p in policy.params.items()}
    opt = optimizer_init(policy.params, cfg.lr)
    buffer = ReplayBuffer(cfg.buffer_capacity)
    updates = 0
    last_good = _policy_snapshot(policy)
    recent: list[float] = []

    for ep in range(cfg.episodes):
        eps = cfg.epsilon(ep)
        state = env.reset(derive_seed(cfg.seed, 2, ep))
        prev = [-1] * n
        while not state.terminal:
            inputs = [policy.net_input(i, state.observations[i], prev[i])
                      for i in range(n)]
            actions = []
            for i in range(n):
                if rng.random() < eps:
                    legal = np.flatnonzero(state.action_masks[i])
                    actions.append(int(legal[rng.integers(len(legal))]))
                else:
                    row = mlp_infer(policy.net_specs[i], policy.data_view(),
                                    inputs[i][None, :], policy.agent_prefix(i))[0]
                    actions.append(masked_argmax(row, state.action_masks[i]))
            reward, nxt = env.step(state, JointAction(tuple(actions)))
            next_inputs = [policy.net_input(i, nxt.observations[i], actions[i])
                           for i in range(n)]
            buffer.push((inputs, np.array(actions), reward, next_inputs,
                         [m.copy() for m in nxt.action_masks], nxt.terminal,
                         state.global_state, nxt.global_state))
            prev = actions
            state = nxt

        if len(buffer) < max(cfg.batch_size, cfg.min_buffer):
            continue
        for _ in range(cfg.updates_per_episode):
            try:
                loss = _deep_update(policy, target, buffer, opt, cfg, rng)
            except NonFinite as err:
                raise DivergedTraining(f"episode {ep}: {err}", last_good) from err
            recent.append(loss)
            if len(recent) > 50:
                recent.pop(0)
            updates += 1
            if updates % cfg.target_period == 0:
                target = {k: p.data.copy() for k, p in policy.params.items()}
                last_good = _policy_snapshot(policy)

    policy.meta["final_loss"] = repr(float(np.mean(recent)) if recent else 0.0)
    policy.meta["updates"] = str(updates)
    return policy


def _deep_update(policy: QTeamPolicy, target: dict[str, np.ndarray],
                 buffer: ReplayBuffer, opt, cfg: TrainConfig,
                 rng: np.random.Generator) -> float:
    batch = buffer.sample(cfg.batch_size, rng)
    n = policy.n_agents

    qs = []
    for i in range(n):
        x = Tensor(np.stack([tr[0][i] for tr in batch]))
        rows = mlp_forward(policy.net_specs[i], policy.params, x, policy.agent_prefix(i))
        qs.append(take_per_row(rows, np.array([tr[1][i] for tr in batch])))
    chosen = stack_cols(qs)

    states = np.stack([tr[6] for tr in batch])
    if policy.mixer_kind == "hyper":
        q_tot = mixer_forward(policy.mixer_spec, policy.params, chosen, states, "mixer.")
    else:
        q_tot = sum_mixer(chosen)

    next_best = np.empty((len(batch), n))
    for i in range(n):
        nx = np.stack([tr[3][i] for tr in batch])
        rows = mlp_infer(policy.net_specs[i], target, nx, policy.agent_prefix(i))
        masks = np.stack([tr[4][i] for tr in batch])
        rows = np.where(masks, rows, -np.inf)
        next_best[:, i] = rows.max(axis=1)
    next_states = np.stack([tr[7] for tr in batch])
    if policy.mixer_kind == "hyper":
        boot = mixer_infer(policy.mixer_spec, target, next_best, next_states, "mixer.")
    else:
        boot = next_best.sum(axis=1)

    rewards = np.array([tr[2] for tr in batch])
    live = 1.0 - np.array([float(tr[5]) for tr in batch])
    y = rewards + cfg.discount * live * boot

    diff = q_tot - Tensor(y)
    loss = (diff * diff).mean()
    zero_grads(policy.params)
    backward(loss)
    optimizer_step(opt, policy.params)
    return float(loss.data)


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------


def evaluate_policy(env: Environment, policy: QTeamPolicy, n_episodes: int,
                    seed: int) -> EvalStats:
    """Greedy rollouts; reports mean return, episode length and win rate
    (None when the environment has no win condition)."""
    if n_episodes < 1:
        raise EmptyEvaluation("need at least one evaluation episode")
    total, wins, steps = 0.0, 0, 0
    for ep in range(n_episodes):
        state = env.reset(derive_seed(seed, ep))
        prev = [-1] * policy.n_agents
        while not state.terminal:
            actions = policy.greedy_all(state, prev)
            reward, state = env.step(state, JointAction(tuple(actions)))
            total += reward
            steps += 1
            prev = actions
        wins += int(env.episode_won(state))
    return EvalStats(
        n_episodes=n_episodes,
        mean_return=total / n_episodes,
        win_rate=wins / n_episodes if env.has_win_condition else None,
        mean_length=steps / n_episodes)


def mean_td_error(env: Environment, policy: QTeamPolicy, discount: float,
                  n_episodes: int, seed: int) -> float:
    """Mean squared one-step TD error of the policy on its own greedy
    trajectories (online network used for both sides)."""
    if policy.mode != "network":
        raise ConfigMismatch("TD error check applies to network policies")
    data = policy.data_view()
    errs = []
    for ep in range(n_episodes):
        state = env.reset(derive_seed(seed, ep))
        prev = [-1] * policy.n_agents
        while not state.terminal:
            actions = policy.greedy_all(state, prev)
            chosen = np.empty((1, policy.n_agents))
            for i in range(policy.n_agents):
                x = policy.net_input(i, state.observations[i], prev[i])[None, :]
                row = mlp_infer(policy.net_specs[i], data, x, policy.agent_prefix(i))[0]
                chosen[0, i] = row[actions[i]]
            reward, nxt = env.step(state, JointAction(tuple(actions)))

            if policy.mixer_kind == "hyper":
                q_tot = mixer_infer(policy.mixer_spec, data, chosen,
                                    state.global_state[None, :], "mixer.")[0]
            else:
                q_tot = chosen.sum()
            boot = 0.0
            if not nxt.terminal:
                best = np.empty((1, policy.n_agents))
                for i in range(policy.n_agents):
                    x = policy.net_input(i, nxt.observations[i], actions[i])[None, :]
                    row = mlp_infer(policy.net_specs[i], data, x, policy.agent_prefix(i))[0]
                    best[0, i] = np.where(nxt.action_masks[i], row, -np.inf).max()
                if policy.mixer_kind == "hyper":
                    boot = mixer_infer(policy.mixer_spec, data, best,
                                       nxt.global_state[None, :], "mixer.")[0]
                else:
                    boot = best.sum()
            errs.append((reward + discount * boot - q_tot) ** 2)
            prev = actions
            state = nxt
    return float(np.mean(errs))


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

POLICY_HEADER = "# policy v1"


def save_policy(policy: QTeamPolicy, base: str | Path) -> None:
    """Write ``<base>.policy`` (text header) plus the parameter manifest and
    payload; loading reproduces the policy bit-exactly."""
    base = Path(base)
    lines = [POLICY_HEADER,
             f"mode = {policy.mode}",
             f"algo = {policy.algo}",
             f"n_agents = {policy.n_agents}",
             f"action_counts = {','.join(map(str, policy.action_counts))}",
             f"obs_dims = {','.join(map(str, policy.obs_dims))}"]
    arrays: dict[str, np.ndarray] = {}
    if policy.mode == "tabular":
        lines.append("mixer = none")
        for agent, table in enumerate(policy.tables):
            for sig, row in table.items():
                arrays[f"table{agent}.{sig.hex()}"] = row
    else:
        lines.append(f"shared_net = {int(policy.shared_net)}")
        lines.append(f"hidden = {','.join(map(str, policy.net_specs[0].sizes[1:-1]))}")
        lines.append(f"mixer = {policy.mixer_kind}")
        if policy.mixer_spec is not None:
            lines.append(f"mixer_embed = {policy.mixer_spec.embed_dim}")
            lines.append(f"mixer_hyper_hidden = {policy.mixer_spec.hyper_hidden}")
        arrays = {k: p.data for k, p in policy.params.items()}
    for key in sorted(policy.meta):
        lines.append(f"meta.{key} = {policy.meta[key]}")
    base.parent.mkdir(parents=True, exist_ok=True)
    base.with_suffix(base.suffix + ".policy").write_text("\n".join(lines) + "\n")
    save_params(base, arrays)


def load_policy(base: str | Path) -> QTeamPolicy:
    base = Path(base)
    text = base.with_suffix(base.suffix + ".policy").read_text().splitlines()
    if not text or text[0] != POLICY_HEADER:
        raise ValueError("unrecognised policy header")
    fields: dict[str, str] = {}
    meta: dict[str, str] = {}
    for line in text[1:]:
        if not line.strip():
            continue
        key, _, value = line.partition(" = ")
        if key.startswith("meta."):
            meta[key[len("meta."):]] = value
        else:
            fields[key] = value

    n_agents = int(fields["n_agents"])
    action_counts = tuple(int(x) for x in fields["action_counts"].split(","))
    obs_dims = tuple(int(x) for x in fields["obs_dims"].split(","))
    arrays = load_params(base)

    if fields["mode"] == "tabular":
        tables: list[dict[bytes, np.ndarray]] = [dict() for _ in range(n_agents)]
        for name, row in arrays.items():
            head, sig_hex = name.split(".", 1)
            tables[int(head[len("table"):])][bytes.fromhex(sig_hex)] = row
        return QTeamPolicy(mode="tabular", algo=fields["algo"], n_agents=n_agents,
                           action_counts=action_counts, obs_dims=obs_dims,
                           tables=tables, meta=meta)

    shared = bool(int(fields["shared_net"]))
    hidden = tuple(int(x) for x in fields["hidden"].split(",") if x)
    net_specs = [MlpSpec((obs_dims[i] + action_counts[i] + n_agents, *hidden,
                          action_counts[i])) for i in range(n_agents)]
    mixer_kind = fields["mixer"]
    mixer_spec = None
    if mixer_kind == "hyper":
        mixer_spec = MixerSpec(
            n_inputs=n_agents,
            state_dim=arrays["mixer.hb1.w0"].shape[0],
            embed_dim=int(fields["mixer_embed"]),
            hyper_hidden=int(fields["mixer_hyper_hidden"]))
    params = {k: Tensor(v, requires_grad=True) for k, v in arrays.items()}
    return QTeamPolicy(mode="network", algo=fields["algo"], n_agents=n_agents,
                       action_counts=action_counts, obs_dims=obs_dims,
                       net_specs=net_specs, shared_net=shared,
                       mixer_kind=mixer_kind, mixer_spec=mixer_spec,
                       params=params, meta=meta)


def policy_hash(policy: QTeamPolicy) -> str:
    """Stable content hash of a policy (header fields plus parameter bytes)."""
    parts = [policy.mode, policy.algo, str(policy.n_agents),
             str(policy.action_counts), str(policy.obs_dims)]
    if policy.mode == "tabular":
        for agent, table in enumerate(policy.tables):
            for sig in sorted(table):
                parts.append(f"{agent}:{sig.hex()}:{table[sig].tobytes().hex()}")
    else:
        for name in sorted(policy.params):
            parts.append(f"{name}:{policy.params[name].data.tobytes().hex()}")
    return sha256_text("|".join(parts))
