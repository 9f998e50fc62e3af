"""Line-oriented experiment configuration.

Config files are UTF-8 text, one ``key = value`` pair per line, with dotted
section prefixes::

    env.kind = tree_example1
    env.depth = 6
    base.algo = tabular-VI
    attack.method = OPT
    attack.lambda = 1.0
    attack.algo = tabular-Q

Blank lines and ``#`` comments are skipped.  Unknown keys, duplicate keys and
parameters that do not belong to the chosen attack method are errors: every
run is described by exactly one method with exactly its own parameter set.

``ExperimentConfig.to_text`` emits a canonical serialisation (every field,
sorted sections, repr-exact floats), so two configs describing the same
experiment hash identically regardless of which keys were spelled out.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

from ..core import Environment, sha256_text
from ..envs.goalgather import GoalGather, GridTeamSpec
from ..envs.trees import TreeGame, build_example1, build_example2, build_random_tree
from ..learners import NETWORK_ALGOS, TABULAR_ALGOS, TrainConfig

ATTACK_METHODS = ("OPT", "Ra-R", "Ra-L", "Ru-B", "Ru-D", "RL-F",
                  "oracle-budget", "oracle-reg")
ENV_KINDS = ("tree_example1", "tree_example2", "tree_random", "goalgather")
TREE_KINDS = ("tree_example1", "tree_example2", "tree_random")

# editable parameters per environment kind, with their parse type
_ENV_FIELDS: dict[str, dict[str, type]] = {
    "tree_example1": {"depth": int, "late_step": int, "early_step": int,
                      "filler_seed": int},
    "tree_example2": {"depth": int, "fork_step": int, "filler_seed": int},
    "tree_random": {"depth": int, "branching": int, "tree_seed": int},
    "goalgather": {
        "width": int, "height": int, "n_agents": int, "n_goals": int,
        "horizon": int, "obs_radius": int, "reward_win": float,
        "reward_step": float, "reward_progress": float,
    },
}

_ENV_DEFAULTS: dict[str, dict[str, float | int]] = {
    "tree_example1": {"depth": 6, "late_step": 3, "early_step": 1, "filler_seed": 0},
    "tree_example2": {"depth": 5, "fork_step": 2, "filler_seed": 0},
    "tree_random": {"depth": 4, "branching": 3, "tree_seed": 0},
    "goalgather": {f.name: f.default for f in dataclasses.fields(GridTeamSpec)},
}

# which attack.* parameter keys each method accepts / requires; OPT and Ru-B
# additionally take exactly one of a single value or a grid of values
_METHOD_PARAMS: dict[str, tuple[set[str], set[str]]] = {
    # method: (required keys, optional keys)
    "OPT": ({"lambda"}, {"algo", "train"}),
    "Ra-R": ({"prob"}, set()),
    "Ra-L": ({"prob"}, set()),
    "Ru-B": ({"threshold"}, {"rule"}),
    "Ru-D": (set(), set()),
    "RL-F": ({"c_adv"}, {"train"}),
    "oracle-budget": ({"budget"}, set()),
    "oracle-reg": ({"lambda"}, set()),
}


class ConfigError(Exception):
    """Malformed config text, unknown keys, or method/parameter mismatch."""


def parse_config_text(text: str) -> dict[str, str]:
    """``key = value`` lines to a dict; comments and blank lines skipped."""
    items: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not key or not value:
            raise ConfigError(f"line {lineno}: empty key or value in {raw!r}")
        if key in items:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        items[key] = value
    return items


def _as_int(key: str, value: str) -> int:
    try:
        return int(value)
    except ValueError:
        raise ConfigError(f"{key}: expected an integer, got {value!r}") from None


def _as_float(key: str, value: str) -> float:
    try:
        out = float(value)
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got {value!r}") from None
    if math.isnan(out):
        raise ConfigError(f"{key}: NaN is not a valid parameter")
    return out


def _as_floats(key: str, value: str) -> tuple[float, ...]:
    return tuple(_as_float(key, part) for part in value.split(","))


def _as_ints(key: str, value: str) -> tuple[int, ...]:
    return tuple(_as_int(key, part) for part in value.split(","))


def _parse_train(items: dict[str, str], prefix: str) -> TrainConfig:
    """Consume ``<prefix>.<field>`` keys into a TrainConfig (seed excluded:
    the runner derives per-seed training seeds from the master seed)."""
    kwargs = {}
    for name in list(items):
        if not name.startswith(prefix + "."):
            continue
        fname = name[len(prefix) + 1:]
        value = items.pop(name)
        if fname == "seed":
            raise ConfigError(f"{name}: training seeds are derived from "
                              "run.master_seed, not configured directly")
        if fname in ("episodes", "batch_size", "buffer_capacity", "min_buffer",
                     "target_period", "updates_per_episode", "mixer_embed",
                     "mixer_hyper_hidden"):
            kwargs[fname] = _as_int(name, value)
        elif fname in ("lr", "discount", "eps_start", "eps_end"):
            kwargs[fname] = _as_float(name, value)
        elif fname == "eps_anneal_episodes":
            kwargs[fname] = None if value == "none" else _as_int(name, value)
        elif fname == "hidden":
            kwargs[fname] = _as_ints(name, value)
        elif fname == "tabular_lr":
            kwargs[fname] = value
        else:
            raise ConfigError(f"unknown key {name!r}")
    try:
        return TrainConfig(**kwargs)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{prefix}: {exc}") from None


def _format_train(prefix: str, cfg: TrainConfig) -> list[str]:
    lines = []
    for f in dataclasses.fields(TrainConfig):
        if f.name == "seed":
            continue
        value = getattr(cfg, f.name)
        if f.name == "hidden":
            text = ",".join(map(str, value))
        elif value is None:
            text = "none"
        elif isinstance(value, float):
            text = repr(value)
        else:
            text = str(value)
        lines.append(f"{prefix}.{f.name} = {text}")
    return lines


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment: an environment, a base learner, at most one attack
    method with its parameters, and the evaluation protocol."""

    env_kind: str = "goalgather"
    env_params: tuple[tuple[str, float | int], ...] = ()
    base_algo: str = "QMIX"
    base_train: TrainConfig = field(default_factory=TrainConfig)
    method: str | None = None
    targets: tuple[int, ...] = (0,)
    lam: float | None = None
    lam_grid: tuple[float, ...] | None = None
    prob: float | None = None
    threshold: float | None = None
    threshold_grid: tuple[float, ...] | None = None
    rule: str = "maxdiff"
    c_adv: float | None = None
    budget: int | None = None
    attack_algo: str | None = None
    attack_train: TrainConfig | None = None
    n_eval_episodes: int = 1000
    n_seeds: int = 5
    master_seed: int = 0

    def __post_init__(self) -> None:
        # learning methods get canonical training defaults; anything else
        # must not carry learner settings at all
        if self.method in ("OPT", "RL-F"):
            if self.attack_train is None:
                object.__setattr__(self, "attack_train", TrainConfig())
            if self.method == "OPT" and self.attack_algo is None:
                object.__setattr__(self, "attack_algo", "single-agent-QMIX")
        if self.method != "OPT" and self.attack_algo is not None:
            raise ConfigError("attack.algo only applies to method OPT")
        if self.method not in ("OPT", "RL-F") and self.attack_train is not None:
            raise ConfigError("attack.train.* only applies to OPT and RL-F")
        if self.env_kind not in ENV_KINDS:
            raise ConfigError(f"env.kind must be one of {ENV_KINDS}")
        allowed = _ENV_FIELDS[self.env_kind]
        for key, _value in self.env_params:
            if key not in allowed:
                raise ConfigError(f"unknown key 'env.{key}' for {self.env_kind}")
        # canonical form: every parameter explicit, sorted by name
        merged = dict(_ENV_DEFAULTS[self.env_kind])
        merged.update(dict(self.env_params))
        object.__setattr__(self, "env_params", tuple(sorted(merged.items())))
        if self.base_algo not in TABULAR_ALGOS + NETWORK_ALGOS:
            raise ConfigError(f"unknown base.algo {self.base_algo!r}")
        if not self.targets or list(self.targets) != sorted(set(self.targets)) \
                or self.targets[0] < 0:
            raise ConfigError("attack.targets must be strictly increasing "
                              "non-negative agent indices")
        if self.n_eval_episodes < 1:
            raise ConfigError("eval.n_episodes must be positive")
        if self.n_seeds < 1:
            raise ConfigError("run.n_seeds must be positive")
        if not 0 <= self.master_seed < 2 ** 64:
            raise ConfigError("run.master_seed must fit in 64 bits")
        if self.rule not in ("maxdiff", "entropy"):
            raise ConfigError(f"unknown attack.rule {self.rule!r}")
        self._check_method()

    def _check_method(self) -> None:
        given = {name for name, value in [
            ("lambda", self.lam), ("lambda_grid", self.lam_grid),
            ("prob", self.prob),
            ("threshold", self.threshold), ("threshold_grid", self.threshold_grid),
            ("c_adv", self.c_adv), ("budget", self.budget)] if value is not None}
        if self.method is None:
            if given:
                raise ConfigError("attack parameters are set but attack.method "
                                  "is missing")
            return
        if self.method not in ATTACK_METHODS:
            raise ConfigError(f"unknown attack.method {self.method!r}; "
                              f"expected one of {ATTACK_METHODS}")
        required, optional = _METHOD_PARAMS[self.method]
        if self.method == "Ru-B":
            # exactly one of a single threshold or a reported grid
            if ("threshold" in given) == ("threshold_grid" in given):
                raise ConfigError("Ru-B needs exactly one of attack.threshold "
                                  "or attack.threshold_grid")
            given -= {"threshold", "threshold_grid"}
            required = required - {"threshold"}
        if self.method == "OPT":
            if ("lambda" in given) == ("lambda_grid" in given):
                raise ConfigError("OPT needs exactly one of attack.lambda or "
                                  "attack.lambda_grid")
            given -= {"lambda", "lambda_grid"}
            required = required - {"lambda"}
        extra = given - required - optional
        if extra:
            raise ConfigError(f"parameters {sorted(extra)} do not belong to "
                              f"method {self.method}")
        missing = required - given
        if missing:
            raise ConfigError(f"method {self.method} requires parameters "
                              f"{sorted(missing)}")
        if self.method.startswith("oracle") and self.env_kind not in TREE_KINDS:
            raise ConfigError(f"{self.method} needs a tree environment")
        for lam in (self.lam,) if self.lam_grid is None else self.lam_grid:
            if lam is not None and lam < 0:
                raise ConfigError("attack.lambda must be non-negative")
        if self.prob is not None and not 0.0 <= self.prob <= 1.0:
            raise ConfigError("attack.prob must lie in [0, 1]")
        if self.c_adv is not None and self.c_adv < 0:
            raise ConfigError("attack.c_adv must be non-negative")
        if self.budget is not None and self.budget < 0:
            raise ConfigError("attack.budget must be non-negative")
        if self.attack_algo is not None and self.attack_algo not in (
                "tabular-Q", "single-agent-QMIX", "multi-agent-QMIX"):
            raise ConfigError(f"unknown attack.algo {self.attack_algo!r}")

    # ---- construction ---------------------------------------------------

    @staticmethod
    def from_text(text: str) -> "ExperimentConfig":
        return ExperimentConfig.from_items(parse_config_text(text))

    @staticmethod
    def from_items(items: dict[str, str]) -> "ExperimentConfig":
        items = dict(items)
        kwargs: dict = {}
        kind = items.pop("env.kind", "goalgather")
        if kind not in ENV_KINDS:
            raise ConfigError(f"env.kind must be one of {ENV_KINDS}")
        kwargs["env_kind"] = kind
        params = []
        fields = _ENV_FIELDS[kind]
        for key in sorted(k for k in items if k.startswith("env.")):
            name = key[len("env."):]
            if name not in fields:
                raise ConfigError(f"unknown key {key!r} for {kind}")
            cast = _as_int if fields[name] is int else _as_float
            params.append((name, cast(key, items.pop(key))))
        kwargs["env_params"] = tuple(params)
        if "base.algo" in items:
            kwargs["base_algo"] = items.pop("base.algo")
        elif kind in TREE_KINDS:
            kwargs["base_algo"] = "tabular-VI"
        kwargs["base_train"] = _parse_train(items, "base.train")
        if any(k.startswith("attack.train.") for k in items):
            kwargs["attack_train"] = _parse_train(items, "attack.train")

        simple = {
            "attack.method": ("method", str),
            "attack.targets": ("targets", lambda k, v: _as_ints(k, v)),
            "attack.lambda": ("lam", _as_float),
            "attack.lambda_grid": ("lam_grid", lambda k, v: _as_floats(k, v)),
            "attack.prob": ("prob", _as_float),
            "attack.threshold": ("threshold", _as_float),
            "attack.threshold_grid": ("threshold_grid", lambda k, v: _as_floats(k, v)),
            "attack.rule": ("rule", str),
            "attack.c_adv": ("c_adv", _as_float),
            "attack.budget": ("budget", _as_int),
            "attack.algo": ("attack_algo", str),
            "eval.n_episodes": ("n_eval_episodes", _as_int),
            "run.n_seeds": ("n_seeds", _as_int),
            "run.master_seed": ("master_seed", _as_int),
        }
        for key, (attr, cast) in simple.items():
            if key in items:
                value = items.pop(key)
                kwargs[attr] = cast(key, value) if cast is not str else value
        if items:
            raise ConfigError(f"unknown keys: {sorted(items)}")
        return ExperimentConfig(**kwargs)

    # ---- views -----------------------------------------------------------

    def env_values(self) -> dict[str, float | int]:
        merged = dict(_ENV_DEFAULTS[self.env_kind])
        merged.update(dict(self.env_params))
        return merged

    def make_env(self) -> Environment:
        p = self.env_values()
        if self.env_kind == "tree_example1":
            return TreeGame(build_example1(p["depth"], p["late_step"],
                                           p["early_step"], p["filler_seed"]))
        if self.env_kind == "tree_example2":
            return TreeGame(build_example2(p["depth"], p["fork_step"],
                                           p["filler_seed"]))
        if self.env_kind == "tree_random":
            return TreeGame(build_random_tree(p["depth"], p["branching"],
                                              p["tree_seed"]))
        return GoalGather(GridTeamSpec(**p))

    def parameter_label(self) -> str:
        if self.method in ("OPT", "oracle-reg"):
            if self.lam_grid is not None:
                return f"lambda grid[{len(self.lam_grid)}]"
            return f"lambda={self.lam!r}"
        if self.method in ("Ra-R", "Ra-L"):
            return f"prob={self.prob!r}"
        if self.method == "Ru-B":
            if self.threshold_grid is not None:
                return f"{self.rule} grid[{len(self.threshold_grid)}]"
            return f"{self.rule} threshold={self.threshold!r}"
        if self.method == "RL-F":
            return f"c_adv={self.c_adv!r}"
        if self.method == "oracle-budget":
            return f"N={self.budget}"
        return "-"

    def expand(self) -> list["ExperimentConfig"]:
        """Grids report every point as its own single-parameter config."""
        if self.threshold_grid is not None:
            return [dataclasses.replace(self, threshold=t, threshold_grid=None)
                    for t in self.threshold_grid]
        if self.lam_grid is not None:
            return [dataclasses.replace(self, lam=v, lam_grid=None)
                    for v in self.lam_grid]
        return [self]

    def to_text(self) -> str:
        lines = [f"env.kind = {self.env_kind}"]
        for name, value in sorted(self.env_values().items()):
            text = repr(value) if isinstance(value, float) else str(value)
            lines.append(f"env.{name} = {text}")
        lines.append(f"base.algo = {self.base_algo}")
        lines.extend(_format_train("base.train", self.base_train))
        if self.method is not None:
            lines.append(f"attack.method = {self.method}")
            lines.append(f"attack.targets = {','.join(map(str, self.targets))}")
            for key, value in (("lambda", self.lam), ("prob", self.prob),
                               ("threshold", self.threshold),
                               ("c_adv", self.c_adv), ("budget", self.budget)):
                if value is not None:
                    lines.append(f"attack.{key} = {value!r}")
            for key, grid in (("lambda_grid", self.lam_grid),
                              ("threshold_grid", self.threshold_grid)):
                if grid is not None:
                    lines.append(f"attack.{key} = "
                                 + ",".join(repr(v) for v in grid))
            if self.method == "Ru-B":
                lines.append(f"attack.rule = {self.rule}")
            if self.method == "OPT":
                lines.append(f"attack.algo = {self.attack_algo}")
            if self.method in ("OPT", "RL-F"):
                lines.extend(_format_train("attack.train", self.attack_train))
        lines.append(f"eval.n_episodes = {self.n_eval_episodes}")
        lines.append(f"run.n_seeds = {self.n_seeds}")
        lines.append(f"run.master_seed = {self.master_seed}")
        return "\n".join(lines) + "\n"


def config_hash(config: ExperimentConfig) -> str:
    return sha256_text(config.to_text())


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            return ExperimentConfig.from_text(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
