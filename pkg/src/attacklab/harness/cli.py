"""Command-line interface.

Subcommands::

    attacklab train-base      --config C --out DIR [--seed N]
    attacklab train-attack    --config C --out DIR [--seed N] [--base PATH]
    attacklab attack-baseline --config C [--seed N] [--base PATH]
    attacklab oracle          --config C
    attacklab evaluate        --config C [--out DIR] [--seed N]
    attacklab report          RECORD... [--format F] [--out DIR] [--figures]

``--seed`` overrides ``run.master_seed``; per-seed training seeds are always
derived from the master seed, so a config plus a seed pins every number.
Exit codes: 0 success, 2 config error, 3 degraded run (an experiment seed
failed and was recorded rather than aggregated).
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

from ..attack import (
    AttackConfig,
    BadTargets,
    rollout_attacked,
    summarize_attack,
    train_attack,
    wrap_adversarial,
)
from ..baselines import (
    DeltaRule,
    attack_dense,
    attack_random,
    attack_rule_based,
    rollout_rlf,
    train_rlf,
)
from ..learners import ConfigMismatch, evaluate_policy, load_policy, save_policy, train_base
from ..oracles import oracle_budget_dp, oracle_reg_dp
from ..seeding import derive_seed
from .config import ConfigError, ExperimentConfig, load_config
from .report import emit_report
from .runner import load_record, run_experiment, save_record

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DEGRADED = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="attacklab",
        description="sparse adversarial attacks on cooperative teams")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required,
                       help="experiment config file (key = value lines)")
        p.add_argument("--seed", type=int, default=None,
                       help="override run.master_seed")
        p.add_argument("--out", default=None, help="output directory")

    common(sub.add_parser("train-base", help="train and save a base policy"))
    p = sub.add_parser("train-attack", help="train and save an attacker")
    common(p)
    p.add_argument("--base", default=None, help="saved base policy to attack")
    p = sub.add_parser("attack-baseline", help="run a rule/random baseline")
    common(p)
    p.add_argument("--base", default=None, help="saved base policy to attack")
    common(sub.add_parser("oracle", help="exact DP attack values on trees"))
    common(sub.add_parser("evaluate", help="full seeded experiment"))

    p = sub.add_parser("report", help="render run records as a table")
    p.add_argument("records", nargs="+", help="record files from evaluate")
    p.add_argument("--format", choices=("table", "delimited"), default="table")
    p.add_argument("--out", default=None, help="directory for report.txt")
    p.add_argument("--figures", action="store_true",
                   help="also render PNG figures (requires --out)")
    return parser


def _load(args) -> ExperimentConfig:
    config = load_config(args.config)
    if args.seed is not None:
        config = dataclasses.replace(config, master_seed=args.seed)
    return config


def _base_policy(config: ExperimentConfig, env, base_path: str | None):
    if base_path is not None:
        stem = Path(base_path)
        if stem.suffix == ".policy":
            stem = stem.with_suffix("")
        policy = load_policy(stem)
        if policy.meta.get("env_fingerprint", "") != env.fingerprint():
            raise ConfigError(f"{base_path} was trained on a different "
                              "environment than the config describes")
        return policy
    seed = derive_seed(config.master_seed, 0)
    return train_base(env, config.base_algo,
                      dataclasses.replace(config.base_train, seed=seed))


def _print_summary(label: str, stats, has_win: bool) -> None:
    s = summarize_attack(stats, has_win_condition=has_win)
    win = "-" if s["win_rate"] is None else f"{s['win_rate']:.3f}"
    print(f"{label}: win_rate={win} team_return={s['mean_team_return']:.3f} "
          f"attack_ratio={s['attack_ratio']:.3f} "
          f"attacked/ep={s['mean_attacked_steps']:.3f}")


def _cmd_train_base(args) -> int:
    config = _load(args)
    env = config.make_env()
    policy = _base_policy(config, env, None)
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    save_policy(policy, out / "base")
    ev = evaluate_policy(env, policy, n_episodes=config.n_eval_episodes,
                         seed=derive_seed(config.master_seed, 0, 1))
    win = "-" if ev.win_rate is None else f"{ev.win_rate:.3f}"
    print(f"saved {out / 'base.policy'} win_rate={win} "
          f"mean_return={ev.mean_return:.3f}")
    return EXIT_OK


def _cmd_train_attack(args) -> int:
    config = _load(args)
    if config.method not in ("OPT", "RL-F"):
        raise ConfigError("train-attack needs attack.method OPT or RL-F")
    env = config.make_env()
    base = _base_policy(config, env, args.base)
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    eval_seed = derive_seed(config.master_seed, 0, 1)
    attack_seed = derive_seed(config.master_seed, 0, 2)
    for point in config.expand():
        train = dataclasses.replace(point.attack_train, seed=attack_seed)
        if point.method == "OPT":
            adv = wrap_adversarial(env, base, point.targets, point.lam)
            attacker = train_attack(adv, AttackConfig(
                targets=point.targets, lam=point.lam,
                attacker_algo=point.attack_algo, train=train))
            stats = rollout_attacked(env, base, attacker, point.targets,
                                     point.lam, point.n_eval_episodes, eval_seed)
            stem = f"attack_lambda{point.lam:g}"
        else:
            attacker = train_rlf(env, base, point.targets, point.c_adv, train)
            stats = rollout_rlf(env, base, attacker, point.targets,
                                point.c_adv, point.n_eval_episodes, eval_seed)
            stem = f"attack_cadv{point.c_adv:g}"
        save_policy(attacker, out / stem)
        _print_summary(f"saved {out / (stem + '.policy')} "
                       f"[{point.parameter_label()}]", stats,
                       env.has_win_condition)
    return EXIT_OK


def _cmd_attack_baseline(args) -> int:
    config = _load(args)
    if config.method not in ("Ra-R", "Ra-L", "Ru-B", "Ru-D"):
        raise ConfigError("attack-baseline needs attack.method "
                          "Ra-R, Ra-L, Ru-B or Ru-D")
    env = config.make_env()
    base = _base_policy(config, env, args.base)
    eval_seed = derive_seed(config.master_seed, 0, 1)
    for point in config.expand():
        if point.method in ("Ra-R", "Ra-L"):
            mode = "random" if point.method == "Ra-R" else "lowestQ"
            stats = attack_random(mode, point.prob, base, env, point.targets,
                                  point.n_eval_episodes, eval_seed)
        elif point.method == "Ru-B":
            stats = attack_rule_based(DeltaRule(point.rule), point.threshold,
                                      base, env, point.targets,
                                      point.n_eval_episodes, eval_seed)
        else:
            stats = attack_dense(base, env, point.targets,
                                 point.n_eval_episodes, eval_seed)
        _print_summary(f"{point.method} [{point.parameter_label()}]", stats,
                       env.has_win_condition)
    return EXIT_OK


def _cmd_oracle(args) -> int:
    config = _load(args)
    if config.method not in ("oracle-budget", "oracle-reg"):
        raise ConfigError("oracle needs attack.method oracle-budget or "
                          "oracle-reg")
    env = config.make_env()
    if config.method == "oracle-budget":
        result = oracle_budget_dp(env.tree, config.budget)
    else:
        result = oracle_reg_dp(env.tree, config.lam)
    plan = ";".join(f"{step}:{action}" for step, _agent, action in result.plan)
    print(f"{result.kind} {config.parameter_label()}: value={result.value!r} "
          f"count={result.attack_count} team_return={result.team_return!r} "
          f"plan={plan or '-'}")
    return EXIT_OK


def _cmd_evaluate(args) -> int:
    config = _load(args)
    record = run_experiment(config, out_dir=args.out)
    print(emit_report([record], format="table"), end="")
    if record.degraded:
        failures = [r for r in record.seeds if r.failed]
        for r in failures:
            print(f"seed {r.seed_index} failed: {r.error}", file=sys.stderr)
        return EXIT_DEGRADED
    return EXIT_OK


def _cmd_report(args) -> int:
    records = [load_record(p) for p in args.records]
    text = emit_report(records, format=args.format)
    if args.figures and args.out is None:
        raise ConfigError("--figures needs --out to know where to write")
    if args.out is not None:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.txt").write_text(text, encoding="utf-8")
        print(f"wrote {out / 'report.txt'}")
        if args.figures:
            from .figures import render_figures

            for path in render_figures(records, out):
                print(f"wrote {path}")
    else:
        print(text, end="")
    if any(r.degraded for r in records):
        return EXIT_DEGRADED
    return EXIT_OK


_COMMANDS = {
    "train-base": _cmd_train_base,
    "train-attack": _cmd_train_attack,
    "attack-baseline": _cmd_attack_baseline,
    "oracle": _cmd_oracle,
    "evaluate": _cmd_evaluate,
    "report": _cmd_report,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, ConfigMismatch, BadTargets, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
