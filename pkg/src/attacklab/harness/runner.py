"""Config-driven experiment runs with the 5-seed median-of-3 protocol.

``run_experiment`` derives one training seed per run seed from the master
seed, trains whatever the configured method needs, evaluates with the
configured episode count, and returns a :class:`RunRecord`.  Every reported
number is a pure function of (config text, master seed); wall-clock is the
only non-deterministic field.  A seed whose training or evaluation raises is
recorded with its error message and marks the whole record degraded rather
than being silently dropped from the aggregate.
"""

from __future__ import annotations

import dataclasses
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..attack import AttackConfig, rollout_attacked, train_attack, wrap_adversarial
from ..baselines import (
    DeltaRule,
    attack_dense,
    attack_random,
    attack_rule_based,
    rollout_rlf,
    train_rlf,
)
from ..learners import evaluate_policy, save_policy, train_base
from ..oracles import oracle_budget_dp, oracle_reg_dp
from ..seeding import derive_seed
from .config import ConfigError, ExperimentConfig, config_hash

RECORD_HEADER = "# runrecord v1"
CONFIG_MARKER = "# config"


class WrongArity(Exception):
    """aggregate_median3 needs exactly five seed results."""


@dataclass(frozen=True)
class SeedResult:
    """Evaluation outcome of one seed (win rate is None for environments
    without a win condition; ``attacked_steps`` holds per-target means)."""

    seed_index: int
    train_seed: int
    win_rate: float | None
    mean_return: float
    attacked_steps: tuple[float, ...]
    total_steps: float
    error: str = ""

    @property
    def failed(self) -> bool:
        return bool(self.error)

    def score(self) -> float:
        return self.mean_return if self.win_rate is None else self.win_rate


@dataclass(frozen=True)
class Aggregate:
    """Mean of the three seeds retained after dropping the best and worst."""

    retained: tuple[int, ...]
    retained_scores: tuple[float, ...]
    win_rate: float | None
    mean_return: float
    attacked_steps: tuple[float, ...]
    total_steps: float


def aggregate_median3(results) -> Aggregate:
    """Drop the extreme seeds by win rate (mean return when win rates are
    absent, ties by seed index) and average the middle three."""
    results = list(results)
    if len(results) != 5:
        raise WrongArity(f"need exactly 5 seed results, got {len(results)}")
    if any(r.failed for r in results):
        raise ValueError("cannot aggregate failed seeds")
    ranked = sorted(results, key=lambda r: (r.score(), r.seed_index))
    retained = ranked[1:4]
    wins = [r.win_rate for r in retained]
    per_agent = np.array([r.attacked_steps for r in retained], dtype=np.float64)
    return Aggregate(
        retained=tuple(r.seed_index for r in retained),
        retained_scores=tuple(r.score() for r in retained),
        win_rate=None if wins[0] is None else float(np.mean(wins)),
        mean_return=float(np.mean([r.mean_return for r in retained])),
        attacked_steps=tuple(float(x) for x in per_agent.mean(axis=0))
                       if per_agent.size else (),
        total_steps=float(np.mean([r.total_steps for r in retained])),
    )


@dataclass(frozen=True)
class RunRecord:
    """Everything one experiment produced; persists as structured text."""

    config_text: str
    config_hash: str
    method: str
    parameter: str
    seeds: tuple[SeedResult, ...]
    aggregate: Aggregate | None
    artifacts: tuple[str, ...]
    wall_clock: float
    degraded: bool

    def without_wall_clock(self) -> "RunRecord":
        return dataclasses.replace(self, wall_clock=0.0)


def _stats_result(seed_index: int, train_seed: int, stats,
                  has_win: bool) -> SeedResult:
    n_targets = len(stats[0].counts)
    return SeedResult(
        seed_index=seed_index,
        train_seed=train_seed,
        win_rate=(sum(s.won for s in stats) / len(stats)) if has_win else None,
        mean_return=float(np.mean([s.team_return for s in stats])),
        attacked_steps=tuple(
            float(np.mean([s.counts[j] for s in stats])) for j in range(n_targets)),
        total_steps=float(np.mean([s.total_steps for s in stats])),
        error="",
    )


def _run_seed(config: ExperimentConfig, seed_index: int,
              out_dir: Path | None) -> tuple[SeedResult, list[str]]:
    master = config.master_seed
    train_seed = derive_seed(master, seed_index)
    eval_seed = derive_seed(master, seed_index, 1)
    attack_seed = derive_seed(master, seed_index, 2)
    env = config.make_env()
    artifacts: list[str] = []

    base_cfg = dataclasses.replace(config.base_train, seed=train_seed)
    base = train_base(env, config.base_algo, base_cfg)
    if out_dir is not None:
        save_policy(base, out_dir / f"base_s{seed_index}")
        artifacts.append(f"base_s{seed_index}.policy")

    method = config.method
    has_win = env.has_win_condition
    n_eval = config.n_eval_episodes
    targets = config.targets

    if method is None:
        ev = evaluate_policy(env, base, n_episodes=n_eval, seed=eval_seed)
        return SeedResult(seed_index, train_seed, ev.win_rate, ev.mean_return,
                          (), ev.mean_length), artifacts

    if method == "OPT":
        adv = wrap_adversarial(env, base, targets, config.lam)
        attacker = train_attack(adv, AttackConfig(
            targets=targets, lam=config.lam, attacker_algo=config.attack_algo,
            train=dataclasses.replace(config.attack_train, seed=attack_seed)))
        if out_dir is not None:
            save_policy(attacker, out_dir / f"attack_s{seed_index}")
            artifacts.append(f"attack_s{seed_index}.policy")
        stats = rollout_attacked(env, base, attacker, targets, config.lam,
                                 n_eval, eval_seed)
    elif method in ("Ra-R", "Ra-L"):
        mode = "random" if method == "Ra-R" else "lowestQ"
        stats = attack_random(mode, config.prob, base, env, targets,
                              n_eval, eval_seed)
    elif method == "Ru-B":
        stats = attack_rule_based(DeltaRule(config.rule), config.threshold,
                                  base, env, targets, n_eval, eval_seed)
    elif method == "Ru-D":
        stats = attack_dense(base, env, targets, n_eval, eval_seed)
    elif method == "RL-F":
        timing = train_rlf(env, base, targets, config.c_adv,
                           dataclasses.replace(config.attack_train,
                                               seed=attack_seed))
        if out_dir is not None:
            save_policy(timing, out_dir / f"attack_s{seed_index}")
            artifacts.append(f"attack_s{seed_index}.policy")
        stats = rollout_rlf(env, base, timing, targets, config.c_adv,
                            n_eval, eval_seed)
    elif method == "oracle-budget":
        result = oracle_budget_dp(env.tree, config.budget)
        return SeedResult(seed_index, train_seed, None, result.team_return,
                          (float(result.attack_count),),
                          float(env.tree.depth)), artifacts
    elif method == "oracle-reg":
        result = oracle_reg_dp(env.tree, config.lam)
        return SeedResult(seed_index, train_seed, None, result.team_return,
                          (float(result.attack_count),),
                          float(env.tree.depth)), artifacts
    else:  # pragma: no cover - config validation forbids this
        raise ValueError(f"unhandled method {method!r}")

    return _stats_result(seed_index, train_seed, stats, has_win), artifacts


def run_experiment(config: ExperimentConfig,
                   out_dir: str | Path | None = None) -> RunRecord:
    """Train (where the method learns) and evaluate every seed; aggregate
    median-3 when all five seeds succeed."""
    if config.lam_grid is not None or config.threshold_grid is not None:
        raise ConfigError("grids describe a sweep: call config.expand() and "
                          "run each point separately")
    t0 = time.monotonic()
    out_path = Path(out_dir) if out_dir is not None else None
    if out_path is not None:
        out_path.mkdir(parents=True, exist_ok=True)

    seeds: list[SeedResult] = []
    artifacts: list[str] = []
    degraded = False
    for s in range(config.n_seeds):
        try:
            result, files = _run_seed(config, s, out_path)
        except Exception as exc:  # noqa: BLE001 - recorded, not swallowed
            result = SeedResult(s, derive_seed(config.master_seed, s), None,
                                float("nan"), (), 0.0,
                                error=f"{type(exc).__name__}: {exc}")
            files = []
            degraded = True
        seeds.append(result)
        artifacts.extend(files)

    aggregate = None
    if not degraded and config.n_seeds == 5:
        aggregate = aggregate_median3(seeds)

    record = RunRecord(
        config_text=config.to_text(),
        config_hash=config_hash(config),
        method=config.method or "none",
        parameter=config.parameter_label(),
        seeds=tuple(seeds),
        aggregate=aggregate,
        artifacts=tuple(artifacts),
        wall_clock=time.monotonic() - t0,
        degraded=degraded,
    )
    if out_path is not None:
        save_record(record, out_path / "record.txt")
    return record


# ---------------------------------------------------------------------------
# record persistence (same line-oriented style as policy files)
# ---------------------------------------------------------------------------


def _fmt_floats(values) -> str:
    return ",".join(repr(float(v)) for v in values) if values else "-"


def _parse_floats(text: str) -> tuple[float, ...]:
    return () if text == "-" else tuple(float(p) for p in text.split(","))


def _fmt_opt(value: float | None) -> str:
    return "none" if value is None else repr(float(value))


def _parse_opt(text: str) -> float | None:
    return None if text == "none" else float(text)


def save_record(record: RunRecord, path: str | Path) -> None:
    lines = [RECORD_HEADER,
             f"config_hash = {record.config_hash}",
             f"method = {record.method}",
             f"parameter = {record.parameter}",
             f"wall_clock = {record.wall_clock!r}",
             f"degraded = {int(record.degraded)}",
             f"n_seeds = {len(record.seeds)}"]
    for name in record.artifacts:
        lines.append(f"artifact = {name}")
    for r in record.seeds:
        p = f"seed.{r.seed_index}"
        lines.append(f"{p}.train_seed = {r.train_seed}")
        lines.append(f"{p}.win_rate = {_fmt_opt(r.win_rate)}")
        lines.append(f"{p}.mean_return = {r.mean_return!r}")
        lines.append(f"{p}.attacked_steps = {_fmt_floats(r.attacked_steps)}")
        lines.append(f"{p}.total_steps = {r.total_steps!r}")
        if r.error:
            lines.append(f"{p}.error = {r.error}")
    if record.aggregate is not None:
        a = record.aggregate
        lines.append(f"aggregate.retained = {','.join(map(str, a.retained))}")
        lines.append(f"aggregate.retained_scores = {_fmt_floats(a.retained_scores)}")
        lines.append(f"aggregate.win_rate = {_fmt_opt(a.win_rate)}")
        lines.append(f"aggregate.mean_return = {a.mean_return!r}")
        lines.append(f"aggregate.attacked_steps = {_fmt_floats(a.attacked_steps)}")
        lines.append(f"aggregate.total_steps = {a.total_steps!r}")
    lines.append(CONFIG_MARKER)
    text = "\n".join(lines) + "\n" + record.config_text
    Path(path).write_text(text, encoding="utf-8")


def load_record(path: str | Path) -> RunRecord:
    text = Path(path).read_text(encoding="utf-8")
    head, _, config_text = text.partition(CONFIG_MARKER + "\n")
    lines = head.splitlines()
    if not lines or lines[0] != RECORD_HEADER:
        raise ValueError(f"{path} is not a run record")
    fields: dict[str, str] = {}
    artifacts: list[str] = []
    for line in lines[1:]:
        if not line.strip():
            continue
        key, _, value = line.partition(" = ")
        if key == "artifact":
            artifacts.append(value)
        else:
            fields[key] = value

    n_seeds = int(fields["n_seeds"])
    seeds = []
    for s in range(n_seeds):
        p = f"seed.{s}"
        seeds.append(SeedResult(
            seed_index=s,
            train_seed=int(fields[f"{p}.train_seed"]),
            win_rate=_parse_opt(fields[f"{p}.win_rate"]),
            mean_return=float(fields[f"{p}.mean_return"]),
            attacked_steps=_parse_floats(fields[f"{p}.attacked_steps"]),
            total_steps=float(fields[f"{p}.total_steps"]),
            error=fields.get(f"{p}.error", ""),
        ))
    aggregate = None
    if "aggregate.retained" in fields:
        aggregate = Aggregate(
            retained=tuple(int(v) for v in fields["aggregate.retained"].split(",")),
            retained_scores=_parse_floats(fields["aggregate.retained_scores"]),
            win_rate=_parse_opt(fields["aggregate.win_rate"]),
            mean_return=float(fields["aggregate.mean_return"]),
            attacked_steps=_parse_floats(fields["aggregate.attacked_steps"]),
            total_steps=float(fields["aggregate.total_steps"]),
        )
    return RunRecord(
        config_text=config_text,
        config_hash=fields["config_hash"],
        method=fields["method"],
        parameter=fields["parameter"],
        seeds=tuple(seeds),
        aggregate=aggregate,
        artifacts=tuple(artifacts),
        wall_clock=float(fields["wall_clock"]),
        degraded=bool(int(fields["degraded"])),
    )
