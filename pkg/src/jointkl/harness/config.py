"""Experiment configuration files.

A config is an INI file read with :mod:`configparser`.  Comma-separated values
define grids; every other value is a scalar.  Sections::

    [experiment]   name, seeds ("0-39" or "0, 1, 5"), baseline, out
    [environment]  kind = coins | logistic | testbed | dataset, plus its keys
    [estimator]    J, N, m_enn, metrics ("1@iid, 10@dyadic")
    [agent.NAME]   kind (defaults to NAME) and hyperparameter grids

Relative dataset paths resolve against the config file's directory.
"""

from __future__ import annotations

import configparser
import hashlib
import itertools
import json
from dataclasses import dataclass, field, replace
from functools import lru_cache
from pathlib import Path
from typing import Any

from jointkl.agents.analytic import (
    beta_posterior_factory,
    logistic_marginal_factory,
    logistic_prior_factory,
    perfect_factory,
    shared_p_factory,
    uniform_factory,
)
from jointkl.agents.neural import Ensemble, EnsemblePlus, Mlp, trained_factory
from jointkl.core import DEFAULT_M_ENN, AgentFactory
from jointkl.environments import CoinsPrior, LogisticPrior, MlpTestbedPrior, dataset_prior_from_csv
from jointkl.sampling import SamplerSpec, parse_sampler

ANALYTIC_KINDS = ("uniform", "marginal", "prior", "posterior", "shared_p", "perfect")
TRAINED_KINDS = {"mlp": Mlp, "ensemble": Ensemble, "ensemble+": EnsemblePlus}
ENV_KINDS = ("coins", "logistic", "testbed", "dataset")

# keys each environment kind accepts; grid keys may hold comma lists
_ENV_KEYS = {
    "coins": {"grid": ("m", "t"), "scalar": ()},
    "logistic": {"grid": ("d", "t", "lambda", "rho"), "scalar": ()},
    "testbed": {"grid": ("d", "t", "lambda", "rho"), "scalar": ("hidden", "classes")},
    "dataset": {"grid": ("t",), "scalar": ("path", "test_path", "test_fraction", "split_seed", "anchor_pool")},
}
_TRAINED_KEYS = {"l2_decay", "steps", "lr", "hidden", "momentum", "batch_size", "size", "prior_scale",
                 "bootstrap", "scale_steps"}


class ConfigError(ValueError):
    """The experiment configuration is invalid."""


@dataclass(frozen=True)
class Metric:
    tau: int
    sampler: SamplerSpec

    @classmethod
    def parse(cls, text: str) -> "Metric":
        tau, _, sampler = text.strip().partition("@")
        try:
            return cls(int(tau), parse_sampler(sampler or "iid"))
        except ValueError as exc:
            raise ConfigError(f"bad metric {text!r}: expected TAU@SAMPLER") from exc

    def __str__(self) -> str:
        return f"{self.tau}@{self.sampler}"


@dataclass(frozen=True)
class Setting:
    """One point of the environment grid."""

    kind: str
    D: int | None
    T: int
    rho: float | None
    options: tuple = ()

    def option(self, key: str, default=None):
        return dict(self.options).get(key, default)


@dataclass(frozen=True)
class AgentVariant:
    """One agent at one hyperparameter point."""

    name: str
    kind: str
    hp_id: str
    params: tuple = ()

    @property
    def hparams(self) -> str:
        return ";".join(f"{k}={v}" for k, v in self.params)


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    env_kind: str
    settings: tuple[Setting, ...]
    agents: tuple[tuple[str, tuple[AgentVariant, ...]], ...]
    metrics: tuple[Metric, ...]
    seeds: tuple[int, ...]
    J: int = 1
    N: int = 100
    m_enn: int = DEFAULT_M_ENN
    baseline: str = "mlp"
    out: str | None = None
    base_seed: int = 0
    source: dict = field(default_factory=dict, compare=False, repr=False)

    def variants(self):
        for _, group in self.agents:
            yield from group

    def digest(self) -> str:
        """Hash of everything that affects the numbers in the output."""
        canon = json.dumps(
            {
                "name": self.name,
                "settings": [repr(s) for s in self.settings],
                "agents": [repr(v) for v in self.variants()],
                "metrics": [str(m) for m in self.metrics],
                "seeds": list(self.seeds),
                "J": self.J, "N": self.N, "m_enn": self.m_enn, "base_seed": self.base_seed,
            },
            sort_keys=True,
        )
        return hashlib.sha256(canon.encode()).hexdigest()[:16]

    def with_overrides(self, *, m_enn: int | None = None, base_seed: int | None = None,
                       out: str | None = None) -> "ExperimentConfig":
        changes: dict[str, Any] = {}
        if m_enn is not None:
            if m_enn < 1:
                raise ConfigError("m_enn must be >= 1")
            changes["m_enn"] = m_enn
        if base_seed is not None:
            changes["base_seed"] = base_seed
        if out is not None:
            changes["out"] = out
        return replace(self, **changes)


def _split(value: str) -> list[str]:
    return [v.strip() for v in value.split(",") if v.strip()]


def _number(text: str):
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        pass
    low = text.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    raise ConfigError(f"not a number or boolean: {text!r}")


def parse_seeds(text: str) -> tuple[int, ...]:
    seeds: list[int] = []
    for part in _split(text):
        lo, dash, hi = part.partition("-")
        try:
            seeds.extend(range(int(lo), int(hi) + 1) if dash else [int(lo)])
        except ValueError as exc:
            raise ConfigError(f"bad seed list entry {part!r}") from exc
    if not seeds:
        raise ConfigError("seed list is empty")
    if len(set(seeds)) != len(seeds) or min(seeds) < 0:
        raise ConfigError("seeds must be distinct nonnegative integers")
    return tuple(seeds)


def _grid(section, key: str, cast) -> list:
    if key not in section:
        return []
    values = _split(section[key])
    if not values:
        raise ConfigError(f"{key} grid is empty")
    try:
        return [cast(v) for v in values]
    except ValueError as exc:
        raise ConfigError(f"bad value in {key}: {section[key]!r}") from exc


def _settings(env, base_dir: Path) -> tuple[str, tuple[Setting, ...]]:
    kind = env.get("kind", "").strip()
    if kind not in ENV_KINDS:
        raise ConfigError(f"environment kind must be one of {ENV_KINDS}, got {kind!r}")
    allowed = {"kind", *_ENV_KEYS[kind]["grid"], *_ENV_KEYS[kind]["scalar"]}
    unknown = set(env) - allowed
    if unknown:
        raise ConfigError(f"unknown [environment] keys for {kind}: {sorted(unknown)}")

    if kind == "dataset":
        if "path" not in env:
            raise ConfigError("dataset environments need a path")
        opts = {
            "path": str((base_dir / env["path"]).resolve()),
            "test_path": str((base_dir / env["test_path"]).resolve()) if env.get("test_path") else None,
            "test_fraction": float(env.get("test_fraction", 0.2)),
            "split_seed": int(env.get("split_seed", 0)),
            "anchor_pool": env.get("anchor_pool", "test"),
        }
        if opts["anchor_pool"] not in ("test", "train"):
            raise ConfigError("anchor_pool must be test or train")
        options = tuple(sorted(opts.items()))
        try:
            prior = _dataset(options, None)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot load dataset: {exc}") from exc
        Ts = _grid(env, "t", int) or [len(prior.train_labels)]
        if max(Ts) > len(prior.train_labels) or min(Ts) < 0:
            raise ConfigError(f"T must lie in [0, {len(prior.train_labels)}]")
        D = prior.train_inputs.shape[1]
        return kind, tuple(Setting(kind, D, T, 0.0, options) for T in Ts)

    dims = _grid(env, "m" if kind == "coins" else "d", int)
    if not dims or min(dims) < 1:
        raise ConfigError(f"{kind} environments need a positive {'M' if kind == 'coins' else 'D'} grid")
    if "lambda" in env and "t" in env:
        raise ConfigError("give either T or lambda, not both")
    rhos = [None] if kind == "coins" else _grid(env, "rho", float)
    if not rhos or (kind != "coins" and min(rhos) <= 0):
        raise ConfigError("rho grid must be nonempty and positive")
    options: dict[str, Any] = {}
    if kind == "testbed":
        options["hidden"] = tuple(int(h) for h in _split(env.get("hidden", "50, 50")))
        options["classes"] = int(env.get("classes", 2))
        if not options["hidden"] or min(options["hidden"]) < 1 or options["classes"] < 2:
            raise ConfigError("testbed needs positive hidden widths and classes >= 2")
    settings = []
    for D in dims:
        if "lambda" in env:
            Ts = [int(round(lam * D)) for lam in _grid(env, "lambda", float)]
        else:
            Ts = _grid(env, "t", int) or [0]
        if min(Ts) < 0:
            raise ConfigError("T must be >= 0")
        for T in Ts:
            for rho in rhos:
                settings.append(Setting(kind, D, T, rho, tuple(sorted(options.items()))))
    return kind, tuple(settings)


def _agent_group(name: str, section) -> tuple[AgentVariant, ...]:
    kind = section.get("kind", name).strip()
    keys = [k for k in section if k != "kind"]
    if kind in ANALYTIC_KINDS:
        if keys:
            raise ConfigError(f"agent {name!r} ({kind}) takes no hyperparameters, got {keys}")
        return (AgentVariant(name, kind, "h0"),)
    if kind not in TRAINED_KINDS:
        raise ConfigError(f"unknown agent kind {kind!r} for agent {name!r}")
    unknown = set(keys) - _TRAINED_KEYS
    if kind != "ensemble+":
        unknown |= set(keys) & {"prior_scale", "bootstrap"}
    if kind == "mlp":
        unknown |= set(keys) & {"size"}
    if unknown:
        raise ConfigError(f"agent {name!r}: unknown hyperparameters {sorted(unknown)}")
    grids = []
    for k in keys:
        if k == "hidden":
            grids.append([(k, tuple(int(h) for h in _split(section[k])))])
        else:
            values = _split(section[k])
            if not values:
                raise ConfigError(f"agent {name!r}: empty grid for {k}")
            grids.append([(k, _number(v)) for v in values])
    variants = []
    for i, combo in enumerate(itertools.product(*grids)):
        variant = AgentVariant(name, kind, f"h{i}", tuple(combo))
        build_factory(variant, None)  # validates the values
        variants.append(variant)
    return tuple(variants)


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, base_dir=path.parent)


def parse_config(text: str, base_dir: str | Path = ".") -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    for required in ("experiment", "environment", "estimator"):
        if not parser.has_section(required):
            raise ConfigError(f"missing [{required}] section")
    exp, est = parser["experiment"], parser["estimator"]
    name = exp.get("name", "").strip()
    if not name:
        raise ConfigError("experiment name is required")
    kind, settings = _settings(parser["environment"], Path(base_dir))

    agents = []
    for section in parser.sections():
        if section.startswith("agent."):
            agent = section[len("agent."):].strip()
            if not agent:
                raise ConfigError("agent sections need a name: [agent.NAME]")
            agents.append((agent, _agent_group(agent, parser[section])))
        elif section not in ("experiment", "environment", "estimator"):
            raise ConfigError(f"unknown section [{section}]")
    if not agents:
        raise ConfigError("the agent grid is empty")

    metrics = tuple(Metric.parse(m) for m in _split(est.get("metrics", "")))
    if not metrics:
        raise ConfigError("estimator metrics are required, e.g. metrics = 1@iid, 10@dyadic")
    if len(set(metrics)) != len(metrics):
        raise ConfigError("duplicate metrics")
    try:
        J, N = int(est.get("J", 1)), int(est.get("N", 100))
        m_enn = int(est.get("m_enn", DEFAULT_M_ENN))
    except ValueError as exc:
        raise ConfigError(f"bad estimator value: {exc}") from exc
    if min(J, N, m_enn) < 1 or min(m.tau for m in metrics) < 1:
        raise ConfigError("J, N, m_enn and every tau must be >= 1")

    return ExperimentConfig(
        name=name,
        env_kind=kind,
        settings=settings,
        agents=tuple(agents),
        metrics=metrics,
        seeds=parse_seeds(exp.get("seeds", "0")),
        J=J,
        N=N,
        m_enn=m_enn,
        baseline=exp.get("baseline", "mlp").strip(),
        out=exp.get("out"),
        source={s: dict(parser[s]) for s in parser.sections()},
    )


@lru_cache(maxsize=8)
def _dataset(options: tuple, T: int | None):
    o = dict(options)
    return dataset_prior_from_csv(
        o["path"], T=T, test_path=o["test_path"], test_fraction=o["test_fraction"],
        split_seed=o["split_seed"], anchor_pool=o["anchor_pool"],
    )


def build_prior(setting: Setting):
    if setting.kind == "coins":
        return CoinsPrior(setting.D, setting.T)
    if setting.kind == "logistic":
        return LogisticPrior(setting.D, setting.rho, setting.T)
    if setting.kind == "testbed":
        return MlpTestbedPrior(
            setting.D, setting.rho, setting.T,
            hidden=setting.option("hidden", (50, 50)), num_classes=setting.option("classes", 2),
        )
    if setting.kind == "dataset":
        return _dataset(setting.options, setting.T)
    raise ConfigError(f"unknown environment kind {setting.kind!r}")


def num_classes(setting: Setting) -> int:
    if setting.kind == "testbed":
        return setting.option("classes", 2)
    if setting.kind == "dataset":
        return _dataset(setting.options, None).num_classes
    return 2


def build_factory(variant: AgentVariant, setting: Setting | None) -> AgentFactory:
    """Agent factory for a variant in a setting; ``setting=None`` only validates."""
    kind, params = variant.kind, dict(variant.params)
    if kind in TRAINED_KINDS:
        scale_steps = bool(params.pop("scale_steps", True))
        try:
            spec = TRAINED_KINDS[kind](**params)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"agent {variant.name!r}: {exc}") from exc
        classes = 2 if setting is None else num_classes(setting)
        factory = trained_factory(spec, num_classes=classes, scale_steps=scale_steps)
    elif setting is None:
        return uniform_factory()
    elif kind == "uniform":
        factory = uniform_factory(num_classes(setting))
    elif kind == "perfect":
        factory = perfect_factory()
    elif kind == "shared_p" or kind == "posterior":
        if setting.kind != "coins":
            raise ConfigError(f"agent kind {kind!r} needs a coins environment")
        factory = shared_p_factory() if kind == "shared_p" else beta_posterior_factory(setting.D)
    elif kind in ("marginal", "prior"):
        if setting.kind != "logistic":
            raise ConfigError(f"agent kind {kind!r} needs a logistic environment")
        factory = (logistic_marginal_factory(setting.rho) if kind == "marginal"
                   else logistic_prior_factory(setting.rho, setting.D))
    else:
        raise ConfigError(f"unknown agent kind {kind!r}")
    return replace(factory, name=variant.name)


def check_compatible(cfg: ExperimentConfig) -> None:
    """Fail early when an agent cannot run in the configured environment."""
    for setting in cfg.settings:
        for variant in cfg.variants():
            build_factory(variant, setting)
