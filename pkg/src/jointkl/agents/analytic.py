"""Reference agents whose imagined environments have closed forms."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any

import numpy as np
from scipy.special import log_expit

from jointkl.core import (
    PROB_FLOOR,
    Agent,
    AgentFactory,
    DomainError,
    Environment,
    TestBatch,
    TrainingData,
    environment_log_likelihood,
)
from jointkl.environments import _binary_probs

LOG_FLOOR = math.log(PROB_FLOOR)


def _features(inputs: np.ndarray, dim: int | None = None) -> np.ndarray:
    x = np.asarray(inputs, dtype=float)
    if x.ndim != 2 or (dim is not None and x.shape[1] != dim):
        raise DomainError(f"expected (n, {dim or 'D'}) feature inputs, got shape {x.shape}")
    return x


def _binary_joint(logits: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Per-row joint log-likelihood of binary labels given logits (m, tau)."""
    signed = np.where(labels == 1, logits, -logits)
    return np.maximum(log_expit(signed), LOG_FLOOR).sum(axis=1)


def _bernoulli_joint(p: np.ndarray, heads: np.ndarray, tails: np.ndarray) -> np.ndarray:
    return heads * np.log(np.maximum(p, PROB_FLOOR)) + tails * np.log(np.maximum(1 - p, PROB_FLOOR))


class UniformAgent(Agent):
    name = "uniform"

    def sample_imagined(self, rng):
        c = self.num_classes
        return lambda inputs: np.full((len(inputs), c), 1.0 / c)

    def joint_log_likelihoods(self, batch, m, rng):
        return np.full(m, -batch.tau * math.log(self.num_classes))


class LogisticMarginalAgent(Agent):
    """Draws one scalar lambda ~ N(0, 1) and predicts sigmoid(rho * lambda * |x|)."""

    name = "marginal"

    def __init__(self, rho: float):
        super().__init__(2, {"rho": rho})
        self.rho = rho

    def sample_imagined(self, rng):
        lam = rng.standard_normal()
        return lambda inputs: _binary_probs(
            self.rho * lam * np.linalg.norm(_features(inputs), axis=1)
        )

    def joint_log_likelihoods(self, batch, m, rng):
        norms = np.linalg.norm(_features(batch.inputs), axis=1)
        lam = rng.standard_normal(m)
        return _binary_joint(self.rho * np.outer(lam, norms), batch.labels)


class LogisticPriorAgent(Agent):
    """Draws phi ~ N(0, I_D) and predicts sigmoid(rho * phi . x)."""

    name = "prior"

    def __init__(self, rho: float, dim: int):
        super().__init__(2, {"rho": rho, "D": dim})
        self.rho = rho
        self.dim = dim

    def sample_imagined(self, rng):
        phi = rng.standard_normal(self.dim)
        return lambda inputs: _binary_probs(self.rho * (_features(inputs, self.dim) @ phi))

    def joint_log_likelihoods(self, batch, m, rng):
        x = _features(batch.inputs, self.dim)
        if self.dim <= len(x):
            z = rng.standard_normal((m, self.dim)) @ x.T
        else:
            # phi . x over the batch is N(0, X X^T); factor the tau x tau Gram
            # matrix instead of drawing m full D-vectors.
            evals, evecs = np.linalg.eigh(x @ x.T)
            factor = evecs * np.sqrt(np.clip(evals, 0.0, None))
            z = rng.standard_normal((m, len(x))) @ factor.T
        return _binary_joint(self.rho * z, batch.labels)


class CoinsBetaPosteriorAgent(Agent):
    """Independent Beta(1 + heads, 1 + tails) belief for every coin."""

    name = "posterior"

    def __init__(self, heads: np.ndarray, tails: np.ndarray):
        heads = np.asarray(heads, dtype=float)
        tails = np.asarray(tails, dtype=float)
        if heads.shape != tails.shape or np.any(heads < 0) or np.any(tails < 0):
            raise ValueError("counts must be nonnegative and of equal length")
        super().__init__(2, {"M": len(heads)})
        self.heads = heads
        self.tails = tails

    @classmethod
    def from_data(cls, data: TrainingData, num_coins: int) -> "CoinsBetaPosteriorAgent":
        coins = np.asarray(data.inputs, dtype=np.int64)
        heads = np.bincount(coins[data.labels == 1], minlength=num_coins)
        tails = np.bincount(coins[data.labels == 0], minlength=num_coins)
        return cls(heads, tails)

    def _coins(self, inputs) -> np.ndarray:
        coins = np.asarray(inputs)
        if coins.ndim != 1 or np.any(coins < 0) or np.any(coins >= len(self.heads)):
            raise DomainError("coin index out of range")
        return coins

    def sample_imagined(self, rng):
        p = rng.beta(1 + self.heads, 1 + self.tails)

        def predict(inputs):
            q = p[self._coins(inputs)]
            return np.stack([1 - q, q], axis=-1)

        return predict

    def joint_log_likelihoods(self, batch, m, rng):
        coins, where = np.unique(self._coins(batch.inputs), return_inverse=True)
        heads = np.bincount(where, weights=batch.labels == 1, minlength=len(coins))
        tails = np.bincount(where, weights=batch.labels == 0, minlength=len(coins))
        # Beta through its gamma-ratio form; numpy's beta sampler is several times slower
        a = rng.standard_gamma(1 + self.heads[coins], size=(m, len(coins)))
        b = rng.standard_gamma(1 + self.tails[coins], size=(m, len(coins)))
        p = a / (a + b)
        return _bernoulli_joint(p, heads, tails).sum(axis=1)


class SharedPAgent(Agent):
    """Ignores inputs: one p ~ Unif(0, 1) per imagined environment, used everywhere."""

    name = "shared_p"

    def __init__(self):
        super().__init__(2)

    def sample_imagined(self, rng):
        p = rng.random()
        return lambda inputs: np.tile([1 - p, p], (len(inputs), 1))

    def joint_log_likelihoods(self, batch, m, rng):
        heads = int(np.sum(batch.labels == 1))
        return _bernoulli_joint(rng.random(m), heads, batch.tau - heads)


class PerfectAgent(Agent):
    """Every imagined environment is the true one."""

    name = "perfect"

    def __init__(self, env: Environment):
        super().__init__(env.num_classes)
        self.env = env

    def sample_imagined(self, rng):
        return self.env.probs

    def joint_log_likelihoods(self, batch: TestBatch, m, rng):
        return np.full(m, environment_log_likelihood(self.env, batch))


@dataclass(frozen=True)
class Uniform:
    num_classes: int = 2


@dataclass(frozen=True)
class LogisticMarginal:
    rho: float


@dataclass(frozen=True)
class LogisticPriorSpec:
    rho: float
    dim: int


@dataclass(frozen=True)
class CoinsBetaPosterior:
    heads: Any
    tails: Any


@dataclass(frozen=True)
class SharedP:
    pass


@dataclass(frozen=True)
class Perfect:
    env: Any


AnalyticAgentSpec = Uniform | LogisticMarginal | LogisticPriorSpec | CoinsBetaPosterior | SharedP | Perfect


def make_analytic(spec: AnalyticAgentSpec) -> Agent:
    if isinstance(spec, Uniform):
        return UniformAgent(spec.num_classes)
    if isinstance(spec, LogisticMarginal):
        return LogisticMarginalAgent(spec.rho)
    if isinstance(spec, LogisticPriorSpec):
        return LogisticPriorAgent(spec.rho, spec.dim)
    if isinstance(spec, CoinsBetaPosterior):
        return CoinsBetaPosteriorAgent(spec.heads, spec.tails)
    if isinstance(spec, SharedP):
        return SharedPAgent()
    if isinstance(spec, Perfect):
        return PerfectAgent(spec.env)
    raise TypeError(f"not an analytic agent spec: {spec!r}")


# Factories: analytic agents ignore training data except the Beta posterior.

def uniform_factory(num_classes: int = 2) -> AgentFactory:
    return AgentFactory("uniform", lambda data, rng, env=None: UniformAgent(num_classes))


def logistic_marginal_factory(rho: float) -> AgentFactory:
    return AgentFactory("marginal", lambda data, rng, env=None: LogisticMarginalAgent(rho), {"rho": rho})


def logistic_prior_factory(rho: float, dim: int) -> AgentFactory:
    return AgentFactory("prior", lambda data, rng, env=None: LogisticPriorAgent(rho, dim), {"rho": rho})


def beta_posterior_factory(num_coins: int) -> AgentFactory:
    return AgentFactory(
        "posterior", lambda data, rng, env=None: CoinsBetaPosteriorAgent.from_data(data, num_coins)
    )


def shared_p_factory() -> AgentFactory:
    return AgentFactory("shared_p", lambda data, rng, env=None: SharedPAgent())


def _perfect(data, rng, env=None):
    if env is None:
        raise ValueError("the perfect agent needs the true environment")
    return PerfectAgent(env)


def perfect_factory() -> AgentFactory:
    return AgentFactory("perfect", _perfect)
