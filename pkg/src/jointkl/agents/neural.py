"""SGD-trained ReLU networks: single MLP, deep ensemble, ensemble with
randomized prior functions.

All ensemble members train together as one stacked array so a step costs a
handful of batched matmuls.  Each training call splits its rng into four fixed
children (trainable init, prior nets, bootstrap, mini-batches) so switching a
feature off never perturbs the draws of the others.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace

import numpy as np

from jointkl import nets
from jointkl.core import PROB_FLOOR, Agent, AgentFactory, DomainError, TrainingData, TrainingError, split

LOG_FLOOR = math.log(PROB_FLOOR)


@dataclass(frozen=True)
class Mlp:
    l2_decay: float = 1.0
    steps: int = 1000
    lr: float = 0.01
    hidden: tuple[int, ...] = (50, 50)
    momentum: float = 0.9
    batch_size: int = 100

    def __post_init__(self):
        if self.lr <= 0 or self.l2_decay < 0 or self.steps < 0:
            raise ValueError("need lr > 0, l2_decay >= 0, steps >= 0")


@dataclass(frozen=True)
class Ensemble(Mlp):
    size: int = 10

    def __post_init__(self):
        super().__post_init__()
        if self.size < 1:
            raise ValueError("ensemble size must be >= 1")


@dataclass(frozen=True)
class EnsemblePlus(Ensemble):
    prior_scale: float = 1.0
    bootstrap: bool = False

    def __post_init__(self):
        super().__post_init__()
        if self.prior_scale < 0:
            raise ValueError("prior scale must be >= 0")


TrainedAgentSpec = Mlp | Ensemble | EnsemblePlus


class EnsembleAgent(Agent):
    """Uniform mixture over members f_k = h_k + prior_scale * g_k (logits)."""

    def __init__(self, params, prior_params=None, prior_scale=0.0, name="ensemble", hyperparameters=None):
        super().__init__(params[-1][0].shape[-1], hyperparameters)
        self.params = params
        self.prior_params = prior_params
        self.prior_scale = prior_scale
        self.name = name

    @property
    def size(self) -> int:
        return self.params[0][0].shape[0]

    @property
    def dim(self) -> int:
        return self.params[0][0].shape[1]

    def member_logits(self, inputs: np.ndarray) -> np.ndarray:
        x = np.asarray(inputs, dtype=float)
        if x.ndim != 2 or x.shape[1] != self.dim:
            raise DomainError(f"expected (n, {self.dim}) inputs, got {x.shape}")
        logits = nets.forward(self.params, x)
        if self.prior_params is not None and self.prior_scale:
            logits = logits + self.prior_scale * nets.forward(self.prior_params, x)
        return logits

    def member_probs(self, inputs):
        return nets.softmax(self.member_logits(inputs))

    def sample_imagined(self, rng):
        k = 0 if self.size == 1 else int(rng.integers(self.size))
        return lambda inputs: nets.softmax(self.member_logits(inputs)[k])

    def joint_log_likelihoods(self, batch, m, rng):
        logp = np.maximum(nets.log_softmax(self.member_logits(batch.inputs)), LOG_FLOOR)
        per_member = logp[:, np.arange(batch.tau), batch.labels].sum(axis=1)
        if self.size == 1:
            return np.full(m, per_member[0])
        return per_member[rng.integers(0, self.size, size=m)]


def _fit(spec: Mlp, data: TrainingData, num_classes: int, members: int, prior_scale: float,
         bootstrap: bool, rng: np.random.Generator):
    init_rng, prior_rng, boot_rng, batch_rng = split(rng, 4)
    x = np.asarray(data.inputs, dtype=float)
    y = data.labels
    n, dim = x.shape
    sizes = [dim, *spec.hidden, num_classes]
    params = nets.init_mlp(init_rng, sizes, members)
    prior = nets.init_mlp(prior_rng, sizes, members) if prior_scale > 0 else None
    if n == 0 or spec.steps == 0:
        return params, prior

    rows = boot_rng.integers(0, n, size=(members, n)) if bootstrap else np.tile(np.arange(n), (members, 1))
    prior_logits = prior_scale * nets.forward(prior, x) if prior is not None else None
    batch = min(n, spec.batch_size)
    decay = 2.0 * spec.l2_decay / n
    velocity = [(np.zeros_like(W), np.zeros_like(b)) for W, b in params]
    member_ix = np.arange(members)[:, None]

    def gather(pick):
        extra = prior_logits[member_ix, pick] if prior_logits is not None else 0.0
        return x[pick], y[pick], extra

    if batch == n:
        xb, yb, extra = gather(rows)
    for step in range(spec.steps):
        if batch < n:
            xb, yb, extra = gather(
                np.take_along_axis(rows, batch_rng.integers(0, n, size=(members, batch)), axis=1)
            )
        logits, acts = nets.forward_with_activations(params, xb)
        logits = logits + extra
        logp = nets.log_softmax(logits)
        if step % 50 == 0 or step == spec.steps - 1:
            loss = -np.take_along_axis(logp, yb[..., None], axis=-1).mean()
            if not np.isfinite(loss):
                raise TrainingError(f"non-finite training loss at step {step}")

        delta = np.exp(logp)
        delta[member_ix, np.arange(batch)[None, :], yb] -= 1.0
        delta /= batch
        for layer in range(len(params) - 1, -1, -1):
            W, b = params[layer]
            gW = np.swapaxes(acts[layer], 1, 2) @ delta + decay * W
            gb = delta.sum(axis=1)
            if layer:
                delta = (delta @ np.swapaxes(W, 1, 2)) * (acts[layer] > 0)
            vW, vb = velocity[layer]
            vW *= spec.momentum
            vW += gW
            vb *= spec.momentum
            vb += gb
            W -= spec.lr * vW
            b -= spec.lr * vb

    if not all(np.all(np.isfinite(W)) for W, _ in params):
        raise TrainingError("non-finite network weights after training")
    return params, prior


def _hyper(spec) -> dict:
    return {k: v for k, v in asdict(spec).items() if k not in ("hidden", "momentum", "batch_size")}


def train_mlp(spec: Mlp, data: TrainingData, rng: np.random.Generator, num_classes: int = 2) -> EnsembleAgent:
    """Point-estimate network; its imagined environment is always the fit itself."""
    params, _ = _fit(spec, data, num_classes, 1, 0.0, False, rng)
    return EnsembleAgent(params, name="mlp", hyperparameters=_hyper(spec))


def train_ensemble(spec: Ensemble, data: TrainingData, rng: np.random.Generator,
                   num_classes: int = 2) -> EnsembleAgent:
    scale = getattr(spec, "prior_scale", 0.0)
    bootstrap = getattr(spec, "bootstrap", False)
    params, prior = _fit(spec, data, num_classes, spec.size, scale, bootstrap, rng)
    name = "ensemble+" if isinstance(spec, EnsemblePlus) else "ensemble"
    return EnsembleAgent(params, prior, scale, name=name, hyperparameters=_hyper(spec))


def scaled_steps(base: int, T: int, dim: int) -> int:
    """Training-step schedule by data regime lambda = T / D: x5 at lambda >= 1000,
    /5 at lambda <= 1."""
    ratio = T / dim
    if ratio >= 1000:
        return base * 5
    if ratio <= 1:
        return max(1, base // 5)
    return base


def trained_factory(spec: TrainedAgentSpec, num_classes: int = 2, scale_steps: bool = True) -> AgentFactory:
    def train(data, rng, env=None):
        s = spec
        if scale_steps and len(data):
            s = replace(spec, steps=scaled_steps(spec.steps, len(data), np.asarray(data.inputs).shape[1]))
        if isinstance(spec, Ensemble):
            return train_ensemble(s, data, rng, num_classes)
        return train_mlp(s, data, rng, num_classes)

    name = "ensemble+" if isinstance(spec, EnsemblePlus) else "ensemble" if isinstance(spec, Ensemble) else "mlp"
    return AgentFactory(name, train, _hyper(spec))
