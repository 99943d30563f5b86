"""Monte-Carlo KL-loss estimation.

For each of J environment draws an agent is trained once, then scored on N
test batches of tau labelled inputs.  The score of one batch is the true joint
log-likelihood minus the agent's Monte-Carlo joint log-likelihood.

Randomness is counter based: every (seed, j, n, purpose) triple owns its own
Philox stream, so results do not depend on evaluation order and different
agents scored with the same seed see identical environments and test batches.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np

from jointkl.core import (
    DEFAULT_M_ENN,
    AgentFactory,
    Environment,
    InvariantViolation,
    KlEstimate,
    TrainingData,
    TrainingError,
    TestBatch,
    agent_log_likelihood,
    joint_log_prob,
    kl_estimate,
)
from jointkl.sampling import Iid, SamplerSpec, draw_labels, sample_test_inputs

# stream purposes
_ENV, _TRAIN, _ANCHORS, _RESAMPLE, _LABELS, _AGENT = range(6)


class EnvironmentPrior(Protocol):
    @property
    def test_distribution(self): ...

    def sample(self, rng: np.random.Generator) -> tuple[Environment, TrainingData]: ...


class EstimationError(RuntimeError):
    def __init__(self, j: int, agent: str, cause: Exception):
        super().__init__(f"training agent {agent!r} failed on environment draw j={j}: {cause}")
        self.j = j
        self.agent = agent


class RatioUndefined(ValueError):
    """The denominator estimate is not distinguishable from zero."""


@dataclass(frozen=True)
class EstimatorConfig:
    J: int
    N: int
    tau: int
    m_enn: int = DEFAULT_M_ENN
    sampler: SamplerSpec = field(default_factory=Iid)
    seed: int = 0

    def __post_init__(self):
        if min(self.J, self.N, self.tau, self.m_enn) < 1:
            raise ValueError("J, N, tau and m_enn must all be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in 64 unsigned bits")


@dataclass(frozen=True)
class EstimateReport:
    agent: str
    overall: KlEstimate
    per_environment: tuple[KlEstimate, ...]
    config: EstimatorConfig


def stream(seed: int, j: int, n: int, purpose: int) -> np.random.Generator:
    """Independent generator for one (seed, j, n, purpose) cell."""
    return np.random.Generator(np.random.Philox(key=seed, counter=[0, purpose, n, j]))


class _Streams:
    """Same generators as :func:`stream`, rewinding one cached Philox per purpose
    instead of constructing a new one for every cell."""

    def __init__(self, seed: int):
        self.seed = seed
        self._bitgens = {}

    def __call__(self, j: int, n: int, purpose: int) -> np.random.Generator:
        entry = self._bitgens.get(purpose)
        if entry is None:
            bitgen = np.random.Philox(key=self.seed)
            entry = self._bitgens[purpose] = (bitgen, bitgen.state)
        bitgen, fresh = entry
        fresh["state"]["counter"][:] = (0, purpose, n, j)
        bitgen.state = fresh
        return np.random.Generator(bitgen)


def _score_terms(env, agent, prior, cfg: EstimatorConfig, j: int, streams: _Streams) -> np.ndarray:
    terms = np.empty(cfg.N)
    dist = prior.test_distribution
    for n in range(cfg.N):
        inputs = sample_test_inputs(
            cfg.sampler, dist, cfg.tau, streams(j, n, _ANCHORS), streams(j, n, _RESAMPLE)
        )
        # one env evaluation serves both the label draw and the true likelihood
        probs = env.probs(inputs)
        batch = TestBatch(inputs, draw_labels(probs, streams(j, n, _LABELS)))
        log_p = joint_log_prob(probs, batch.labels)
        log_q = agent_log_likelihood(agent, batch, cfg.m_enn, streams(j, n, _AGENT))
        terms[n] = log_p - log_q
    if not np.all(np.isfinite(terms)):
        raise InvariantViolation(f"non-finite log-likelihood ratio on environment draw j={j}")
    return terms


def estimate_kl_many(
    prior: EnvironmentPrior, factory: AgentFactory, cfgs: Sequence[EstimatorConfig]
) -> list[EstimateReport]:
    """Several estimates that share environment draws and trained agents.

    All configs must agree on J and seed; each report equals what
    :func:`estimate_kl` returns for that config alone.
    """
    if not cfgs:
        return []
    J, seed = cfgs[0].J, cfgs[0].seed
    if any(c.J != J or c.seed != seed for c in cfgs):
        raise ValueError("configs sharing environment draws must agree on J and seed")
    terms = [np.empty((J, c.N)) for c in cfgs]
    streams = _Streams(seed)
    for j in range(J):
        env, data = prior.sample(streams(j, 0, _ENV))
        try:
            agent = factory.train(data, streams(j, 0, _TRAIN), env=env)
        except TrainingError as exc:
            raise EstimationError(j, factory.name, exc) from exc
        for c, out in zip(cfgs, terms):
            out[j] = _score_terms(env, agent, prior, c, j, streams)
    return [
        EstimateReport(
            agent=factory.name,
            overall=kl_estimate(t.ravel()),
            per_environment=tuple(kl_estimate(row) for row in t),
            config=c,
        )
        for c, t in zip(cfgs, terms)
    ]


def estimate_kl(prior: EnvironmentPrior, factory: AgentFactory, cfg: EstimatorConfig) -> EstimateReport:
    """Estimate the expected KL divergence between true and agent joint predictives."""
    return estimate_kl_many(prior, factory, [cfg])[0]


def estimate_ratio(num: KlEstimate, den: KlEstimate) -> tuple[float, float]:
    """num.mean / den.mean with a first-order propagated standard error."""
    if den.mean <= 0 or abs(den.mean) < 3 * den.stderr:
        raise RatioUndefined(f"denominator {den.mean:.4g} +- {den.stderr:.2g} is indistinguishable from zero")
    ratio = num.mean / den.mean
    stderr = math.hypot(num.stderr / den.mean, num.mean * den.stderr / den.mean**2)
    return ratio, stderr


def kl_ratio(a: EstimateReport, b: EstimateReport) -> tuple[float, float]:
    """Ratio of two reports' overall estimates; they must share tau and sampler."""
    ca, cb = a.config, b.config
    if (ca.tau, ca.sampler) != (cb.tau, cb.sampler):
        raise ValueError("reports were computed with different tau or sampler")
    return estimate_ratio(a.overall, b.overall)
