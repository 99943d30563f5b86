"""Test-input samplers: i.i.d. draws and polyadic anchor resampling."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from jointkl.core import Environment, TestBatch, split


@dataclass(frozen=True)
class UniformCoins:
    num_coins: int

    def __post_init__(self):
        if self.num_coins < 1:
            raise ValueError("need at least one coin")

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return rng.integers(0, self.num_coins, size=n)


@dataclass(frozen=True)
class StandardGaussian:
    dim: int

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dimension must be >= 1")

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return rng.standard_normal((n, self.dim))


@dataclass(frozen=True, eq=False)
class EmpiricalPool:
    """Uniform over stored rows, drawn with replacement."""

    inputs: np.ndarray

    def __post_init__(self):
        if len(self.inputs) == 0:
            raise ValueError("empirical pool is empty")

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return self.inputs[rng.integers(0, len(self.inputs), size=n)]


InputDistribution = UniformCoins | StandardGaussian | EmpiricalPool


@dataclass(frozen=True)
class Iid:
    def __str__(self) -> str:
        return "iid"


@dataclass(frozen=True)
class Polyadic:
    kappa: int

    def __post_init__(self):
        if not isinstance(self.kappa, (int, np.integer)) or self.kappa < 1:
            raise ValueError(f"anchor count must be an integer >= 1, got {self.kappa!r}")

    def __str__(self) -> str:
        return {1: "monadic", 2: "dyadic"}.get(self.kappa, f"polyadic:{self.kappa}")


SamplerSpec = Iid | Polyadic

Monadic = Polyadic(1)
Dyadic = Polyadic(2)


def parse_sampler(text: str) -> SamplerSpec:
    """'iid', 'monadic', 'dyadic' or 'polyadic:K'."""
    text = text.strip().lower()
    if text == "iid":
        return Iid()
    if text == "monadic":
        return Monadic
    if text == "dyadic":
        return Dyadic
    if text.startswith("polyadic:"):
        return Polyadic(int(text.split(":", 1)[1]))
    raise ValueError(f"unknown sampler {text!r}")


def sampler_kappa(spec: SamplerSpec) -> int | str:
    return "iid" if isinstance(spec, Iid) else spec.kappa


def sample_test_inputs(
    spec: SamplerSpec,
    dist: InputDistribution,
    tau: int,
    rng: np.random.Generator,
    resample_rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Draw tau test inputs.

    Polyadic sampling draws the anchors from ``rng`` and picks among them with
    ``resample_rng``; when the latter is omitted it is split off ``rng``
    before any anchor is drawn.
    """
    if tau < 1:
        raise ValueError("tau must be >= 1")
    if isinstance(spec, Iid):
        return dist.sample(tau, rng)
    if resample_rng is None:
        (resample_rng,) = split(rng, 1)
    picks = resample_rng.integers(0, spec.kappa, size=tau)
    if spec.kappa <= tau:
        return dist.sample(spec.kappa, rng)[picks]
    # anchors are iid, so drawing only the ones picked has the same law and
    # keeps huge kappa cheap
    used, where = np.unique(picks, return_inverse=True)
    return dist.sample(len(used), rng)[where.reshape(-1)]


def draw_labels(probs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One categorical draw per row of ``probs``."""
    # inverse-cdf draw; the clamp stops round-off from yielding label C
    u = rng.random(len(probs))[:, None]
    return np.minimum((np.cumsum(probs, axis=1) <= u).sum(axis=1), probs.shape[1] - 1)


def sample_labels(env: Environment, inputs: np.ndarray, rng: np.random.Generator) -> TestBatch:
    """Draw one label per input, independently, from the environment."""
    return TestBatch(inputs, draw_labels(env.probs(inputs), rng))
