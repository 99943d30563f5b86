"""Environment priors: bag of coins, logistic regression, the random-MLP
testbed, and fixed datasets treated as deterministic labelers."""

from __future__ import annotations

import copy
import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit

from jointkl import nets
from jointkl.core import DomainError, TrainingData
from jointkl.sampling import EmpiricalPool, StandardGaussian, UniformCoins, draw_labels


def _check_features(inputs: np.ndarray, dim: int) -> np.ndarray:
    inputs = np.asarray(inputs, dtype=float)
    if inputs.ndim != 2 or inputs.shape[1] != dim:
        raise DomainError(f"expected inputs of shape (n, {dim}), got {inputs.shape}")
    return inputs


def _binary_probs(logits: np.ndarray) -> np.ndarray:
    return np.stack([expit(-logits), expit(logits)], axis=-1)


@dataclass(frozen=True, eq=False)
class CoinsEnvironment:
    heads_prob: np.ndarray
    num_classes: int = 2

    def probs(self, inputs: np.ndarray) -> np.ndarray:
        inputs = np.asarray(inputs)
        if inputs.ndim != 1 or (inputs.size and (inputs.min() < 0 or inputs.max() >= len(self.heads_prob))):
            raise DomainError("coin index out of range")
        p = self.heads_prob[inputs]
        out = np.empty((len(p), 2))
        out[:, 0] = 1.0 - p
        out[:, 1] = p
        return out


@dataclass(frozen=True, eq=False)
class LogisticEnvironment:
    """P(y=1 | x) = sigmoid(rho * phi . x)."""

    phi: np.ndarray
    rho: float
    num_classes: int = 2

    def probs(self, inputs: np.ndarray) -> np.ndarray:
        x = _check_features(inputs, len(self.phi))
        return _binary_probs(self.rho * (x @ self.phi))


@dataclass(frozen=True, eq=False)
class MlpEnvironment:
    """Class probabilities softmax(logits / rho) of a fixed ReLU network."""

    params: nets.Params
    rho: float

    @property
    def num_classes(self) -> int:
        return self.params[-1][0].shape[-1]

    def logits(self, inputs: np.ndarray) -> np.ndarray:
        x = _check_features(inputs, self.params[0][0].shape[1])
        return nets.forward(self.params, x)[0]

    def probs(self, inputs: np.ndarray) -> np.ndarray:
        return nets.softmax(self.logits(inputs) / self.rho)


@dataclass(frozen=True, eq=False)
class LookupEnvironment:
    """Deterministic labeler over a finite set of stored inputs."""

    table: dict
    dim: int
    num_classes: int

    def probs(self, inputs: np.ndarray) -> np.ndarray:
        x = _check_features(inputs, self.dim)
        out = np.zeros((len(x), self.num_classes))
        for i, row in enumerate(x):
            label = self.table.get(row.tobytes())
            if label is None:
                raise DomainError("input is not in the stored dataset")
            out[i, label] = 1.0
        return out


@dataclass(frozen=True)
class CoinsPrior:
    """M coins with heads probabilities drawn Unif(0, 1); T single tosses."""

    num_coins: int
    T: int = 0

    def __post_init__(self):
        if self.num_coins < 1 or self.T < 0:
            raise ValueError("need num_coins >= 1 and T >= 0")

    @property
    def test_distribution(self) -> UniformCoins:
        return UniformCoins(self.num_coins)

    def describe(self) -> dict:
        return {"D": self.num_coins, "T": self.T, "rho": ""}

    def sample(self, rng: np.random.Generator):
        env = CoinsEnvironment(rng.random(self.num_coins))
        coins = rng.integers(0, self.num_coins, size=self.T)
        heads = (rng.random(self.T) < env.heads_prob[coins]).astype(np.int64)
        return env, TrainingData(coins, heads)


@dataclass(frozen=True)
class LogisticPrior:
    dim: int
    rho: float
    T: int = 0

    def __post_init__(self):
        if self.dim < 1 or self.rho <= 0 or self.T < 0:
            raise ValueError("need dim >= 1, rho > 0, T >= 0")

    @property
    def test_distribution(self) -> StandardGaussian:
        return StandardGaussian(self.dim)

    def describe(self) -> dict:
        return {"D": self.dim, "T": self.T, "rho": self.rho}

    def sample(self, rng: np.random.Generator):
        env = LogisticEnvironment(rng.standard_normal(self.dim), self.rho)
        x = rng.standard_normal((self.T, self.dim))
        return env, TrainingData(x, draw_labels(env.probs(x), rng))


@dataclass(frozen=True)
class MlpTestbedPrior:
    """Random Xavier-initialised ReLU network labelling Gaussian inputs."""

    dim: int
    rho: float
    T: int = 0
    hidden: tuple[int, ...] = (50, 50)
    num_classes: int = 2

    def __post_init__(self):
        if self.dim < 1 or self.rho <= 0 or self.T < 0 or self.num_classes < 2:
            raise ValueError("need dim >= 1, rho > 0, T >= 0, num_classes >= 2")
        if not self.hidden or min(self.hidden) < 1:
            raise ValueError("hidden widths must be >= 1")

    @property
    def test_distribution(self) -> StandardGaussian:
        return StandardGaussian(self.dim)

    def describe(self) -> dict:
        return {"D": self.dim, "T": self.T, "rho": self.rho}

    def sample(self, rng: np.random.Generator):
        sizes = [self.dim, *self.hidden, self.num_classes]
        env = MlpEnvironment(nets.init_mlp(rng, sizes), self.rho)
        x = rng.standard_normal((self.T, self.dim))
        return env, TrainingData(x, draw_labels(env.probs(x), rng))


def standardize(train: np.ndarray, *others: np.ndarray):
    """Scale features to mean 0, variance 1 using train-pool statistics."""
    mean = train.mean(axis=0)
    std = train.std(axis=0)
    std[std == 0] = 1.0
    return tuple((a - mean) / std for a in (train, *others))


@dataclass(frozen=True, eq=False)
class EmpiricalDatasetPrior:
    """A fixed dataset in the low-temperature limit.

    Features are standardised on construction.  Every draw returns the same
    deterministic labeler and a fresh size-T subsample of the train pool.  Test
    anchors come from the test pool unless ``anchor_pool="train"``.
    """

    train_inputs: np.ndarray
    train_labels: np.ndarray
    test_inputs: np.ndarray
    test_labels: np.ndarray
    T: int
    num_classes: int
    anchor_pool: str = "test"
    name: str = "dataset"
    env: LookupEnvironment = field(init=False, repr=False)

    def __post_init__(self):
        if self.T > len(self.train_labels):
            raise ValueError(f"T={self.T} exceeds the train pool size {len(self.train_labels)}")
        if self.anchor_pool not in ("test", "train"):
            raise ValueError("anchor_pool must be 'test' or 'train'")
        object.__setattr__(self, "train_labels", np.asarray(self.train_labels, np.int64))
        object.__setattr__(self, "test_labels", np.asarray(self.test_labels, np.int64))
        for labels in (self.train_labels, self.test_labels):
            if np.any(labels < 0) or np.any(labels >= self.num_classes):
                raise ValueError("label outside [0, num_classes)")
        train, test = standardize(
            np.asarray(self.train_inputs, float), np.asarray(self.test_inputs, float)
        )
        object.__setattr__(self, "train_inputs", train)
        object.__setattr__(self, "test_inputs", test)
        object.__setattr__(self, "env", self._build_env())

    def _build_env(self) -> LookupEnvironment:
        # duplicated rows keep their most frequent label; test labels win ties with train
        votes: dict[bytes, np.ndarray] = {}
        for x, y, weight in [
            *((x, y, 1.0) for x, y in zip(self.train_inputs, self.train_labels)),
            *((x, y, 1.5) for x, y in zip(self.test_inputs, self.test_labels)),
        ]:
            votes.setdefault(x.tobytes(), np.zeros(self.num_classes))[y] += weight
        table = {k: int(np.argmax(v)) for k, v in votes.items()}
        return LookupEnvironment(table, self.train_inputs.shape[1], self.num_classes)

    @property
    def test_distribution(self) -> EmpiricalPool:
        pool = self.test_inputs if self.anchor_pool == "test" else self.train_inputs
        return EmpiricalPool(pool)

    def describe(self) -> dict:
        return {"D": self.train_inputs.shape[1], "T": self.T, "rho": 0.0}

    def with_T(self, T: int) -> "EmpiricalDatasetPrior":
        clone = copy.copy(self)
        if T > len(self.train_labels):
            raise ValueError(f"T={T} exceeds the train pool size {len(self.train_labels)}")
        object.__setattr__(clone, "T", T)
        return clone

    def sample(self, rng: np.random.Generator):
        idx = rng.choice(len(self.train_labels), size=self.T, replace=False)
        return self.env, TrainingData(self.train_inputs[idx], self.train_labels[idx])


def load_csv(path: str | Path):
    """Read a numeric-feature CSV with the label in the last column.

    A first row that does not parse as numbers is taken as a header.  String
    labels are mapped to integers in sorted order.  Returns
    ``(features, labels, class_names)``.
    """
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise ValueError(f"{path}: no rows")
    try:
        [float(c) for c in rows[0][:-1]]
    except ValueError:
        rows = rows[1:]
    features = np.array([[float(c) for c in r[:-1]] for r in rows])
    raw = [r[-1].strip() for r in rows]
    try:
        values = [int(float(v)) for v in raw]
    except ValueError:
        values = raw
    names = sorted(set(values))
    lookup = {n: i for i, n in enumerate(names)}
    labels = np.array([lookup[v] for v in values], dtype=np.int64)
    return features, labels, [str(n) for n in names]


def dataset_prior_from_csv(
    path: str | Path,
    T: int | None = None,
    test_path: str | Path | None = None,
    test_fraction: float = 0.2,
    split_seed: int = 0,
    anchor_pool: str = "test",
) -> EmpiricalDatasetPrior:
    """Build a dataset prior from one CSV (split here) or a train/test pair."""
    x, y, names = load_csv(path)
    if test_path is None:
        order = np.random.default_rng(split_seed).permutation(len(y))
        n_test = int(round(test_fraction * len(y)))
        test_idx, train_idx = order[:n_test], order[n_test:]
        xtr, ytr, xte, yte = x[train_idx], y[train_idx], x[test_idx], y[test_idx]
    else:
        xtr, ytr = x, y
        xte, yte, test_names = load_csv(test_path)
        if test_names != names:
            raise ValueError("train and test files disagree on the label set")
    return EmpiricalDatasetPrior(
        xtr, ytr, xte, yte,
        T=len(ytr) if T is None else T,
        num_classes=len(names),
        anchor_pool=anchor_pool,
        name=Path(path).stem,
    )
