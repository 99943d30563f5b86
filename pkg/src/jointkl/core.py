"""Shared domain types and the log-likelihood primitives.

Inputs are numpy arrays with the batch along axis 0.  Coin environments take
integer index vectors of shape ``(tau,)``; feature environments take float
matrices of shape ``(tau, D)``.  Class probabilities come back as ``(tau, C)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Protocol

import numpy as np

PROB_FLOOR = 1e-9
DEFAULT_M_ENN = 10_000


class DomainError(ValueError):
    """An input does not belong to the domain of an environment or agent."""


class TrainingError(RuntimeError):
    """Agent training produced a non-finite loss."""


class InvariantViolation(RuntimeError):
    """A quantity that must be finite or well-formed was not."""


class Environment(Protocol):
    num_classes: int

    def probs(self, inputs: np.ndarray) -> np.ndarray:
        """Return class probabilities of shape ``(len(inputs), num_classes)``."""
        ...


Predictor = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class TrainingData:
    inputs: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64)
        if len(self.inputs) != len(labels):
            raise ValueError("inputs and labels differ in length")
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return len(self.labels)


@dataclass(frozen=True)
class TestBatch:
    inputs: np.ndarray
    labels: np.ndarray

    __test__ = False  # not a pytest class

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64)
        if len(labels) < 1 or len(self.inputs) != len(labels):
            raise ValueError("a test batch needs tau >= 1 inputs, one label each")
        object.__setattr__(self, "labels", labels)

    @property
    def tau(self) -> int:
        return len(self.labels)


@dataclass(frozen=True)
class KlEstimate:
    mean: float
    stderr: float
    n_terms: int


class Agent:
    """A trained agent: a distribution over imagined environments.

    Subclasses implement :meth:`sample_imagined`.  Those with a cheaper exact
    route to the per-sample joint log-likelihoods override
    :meth:`joint_log_likelihoods`; the result must have the same distribution
    as looping over :meth:`sample_imagined`.
    """

    name = "agent"

    def __init__(self, num_classes: int, hyperparameters: dict[str, Any] | None = None):
        self.num_classes = num_classes
        self.hyperparameters = dict(hyperparameters or {})

    def sample_imagined(self, rng: np.random.Generator) -> Predictor:
        raise NotImplementedError

    def joint_log_likelihoods(
        self, batch: TestBatch, m: int, rng: np.random.Generator
    ) -> np.ndarray:
        out = np.empty(m)
        for i in range(m):
            out[i] = joint_log_prob(self.sample_imagined(rng)(batch.inputs), batch.labels)
        return out


def split(rng: np.random.Generator, k: int) -> list[np.random.Generator]:
    """k child generators seeded from draws of ``rng``; works for any bit generator."""
    return [np.random.default_rng(int(s)) for s in rng.integers(0, 2**63, size=k)]


def check_class_probs(probs: np.ndarray, atol: float = 1e-9) -> np.ndarray:
    probs = np.asarray(probs, dtype=float)
    if probs.ndim != 2 or probs.shape[1] < 2:
        raise ValueError(f"class probabilities need shape (n, C>=2), got {probs.shape}")
    if np.any(probs < 0) or np.any(probs > 1):
        raise ValueError("class probabilities outside [0, 1]")
    if not np.allclose(probs.sum(axis=1), 1.0, rtol=0, atol=atol):
        raise ValueError("class probabilities do not sum to one")
    return probs


def joint_log_prob(probs: np.ndarray, labels: np.ndarray) -> float:
    """Sum over the batch of log probs[t, labels[t]], floored at PROB_FLOOR."""
    picked = probs[np.arange(len(labels)), labels]
    return float(np.sum(np.log(np.maximum(picked, PROB_FLOOR))))


def log_mean_exp(values: np.ndarray) -> float:
    """log of the mean of exp(values), independent of the order of ``values``."""
    values = np.sort(np.asarray(values, dtype=float))
    top = values[-1]
    if not np.isfinite(top):
        raise InvariantViolation("non-finite sample log-likelihood")
    return float(top + np.log(np.mean(np.exp(values - top))))


def environment_log_likelihood(env: Environment, batch: TestBatch) -> float:
    """log of the true joint likelihood of the batch labels, in nats."""
    return joint_log_prob(env.probs(batch.inputs), batch.labels)


def agent_log_likelihood(
    agent: Agent, batch: TestBatch, m_enn: int, rng: np.random.Generator
) -> float:
    """Monte-Carlo log of the agent's joint predictive probability of the batch.

    Draws ``m_enn`` imagined environments, scores the whole batch under each
    and averages the joint likelihoods in log space.
    """
    if m_enn < 1:
        raise ValueError("m_enn must be at least 1")
    return log_mean_exp(agent.joint_log_likelihoods(batch, m_enn, rng))


def exact_mean(values) -> float:
    """Mean that does not depend on value order; constant inputs come back unchanged."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ValueError("mean of no values")
    base = float(values.min())
    return base + math.fsum((values - base).tolist()) / values.size


def kl_estimate(terms) -> KlEstimate:
    terms = np.asarray(terms, dtype=float)
    n = terms.size
    mean = exact_mean(terms)
    if n < 2:
        return KlEstimate(mean, 0.0, n)
    var = math.fsum(((terms - mean) ** 2).tolist()) / (n - 1)
    return KlEstimate(mean, math.sqrt(var / n), n)


@dataclass(frozen=True)
class AgentFactory:
    """Named training routine.  ``train(data, rng, env=...)`` returns an Agent.

    The true environment is passed as a keyword so oracle agents can be built;
    ordinary agents ignore it.
    """

    name: str
    train: Callable[..., Agent]
    hyperparameters: dict[str, Any] = field(default_factory=dict)
