import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jointkl import nets
from jointkl.core import DomainError, TestBatch, environment_log_likelihood
from jointkl.environments import (
    CoinsPrior,
    EmpiricalDatasetPrior,
    LogisticEnvironment,
    LogisticPrior,
    MlpEnvironment,
    MlpTestbedPrior,
    dataset_prior_from_csv,
    load_csv,
)
from jointkl.harness.repro import config_path
from jointkl.sampling import Dyadic, sample_labels, sample_test_inputs

IRIS = config_path("iris").with_name("iris.csv")


def test_single_coin_environment(rng):
    env, data = CoinsPrior(1).sample(rng)
    p = env.heads_prob[0]
    assert 0 <= p <= 1
    assert env.probs(np.array([0]))[0, 1] == p
    assert len(data) == 0


def test_coin_probabilities_are_uniform(rng):
    env, _ = CoinsPrior(10_000).sample(rng)
    assert abs(env.heads_prob.mean() - 0.5) < 0.02


def test_coin_training_tosses(rng):
    env, data = CoinsPrior(3, T=500).sample(rng)
    assert len(data) == 500
    assert set(np.unique(data.inputs)) <= {0, 1, 2}
    assert set(np.unique(data.labels)) <= {0, 1}


def test_logistic_zero_logit_and_sigmoid_value():
    env = LogisticEnvironment(np.array([1.0, 0.0]), rho=3.0)
    assert env.probs(np.array([[0.0, 5.0]]))[0, 1] == 0.5
    env = LogisticEnvironment(np.array([1.0]), rho=0.01)
    assert env.probs(np.array([[100.0]]))[0, 1] == pytest.approx(0.7311, abs=1e-4)


def test_logistic_marginal_is_half(rng):
    x = np.array([[0.7, -1.3, 2.0]])
    phis = rng.standard_normal((100_000, 3))
    p1 = np.mean([LogisticEnvironment(phi, 1.0).probs(x)[0, 1] for phi in phis[:20_000]])
    assert abs(p1 - 0.5) < 0.005


@pytest.mark.parametrize("prior", [LogisticPrior(4, 1.0, T=400), MlpTestbedPrior(4, 0.1, T=400)])
def test_training_inputs_are_standard_normal(prior, rng):
    _, data = prior.sample(rng)
    assert data.inputs.shape == (400, 4)
    assert np.all(np.abs(data.inputs.mean(axis=0)) < 4 / math.sqrt(400))
    assert set(np.unique(data.labels)) <= {0, 1}


@pytest.mark.parametrize(
    "prior", [CoinsPrior(5, 20), LogisticPrior(3, 2.0, 20), MlpTestbedPrior(3, 0.5, 20, num_classes=3)]
)
def test_sampling_replays_from_rng_state(prior):
    a_env, a_data = prior.sample(np.random.default_rng(11))
    b_env, b_data = prior.sample(np.random.default_rng(11))
    x = prior.test_distribution.sample(6, np.random.default_rng(0))
    np.testing.assert_array_equal(a_env.probs(x), b_env.probs(x))
    np.testing.assert_array_equal(a_data.inputs, b_data.inputs)
    np.testing.assert_array_equal(a_data.labels, b_data.labels)


def test_zero_weight_network_is_uniform():
    params = [(np.zeros((1, 4, 50)), np.zeros((1, 50))), (np.zeros((1, 50, 50)), np.zeros((1, 50))),
              (np.zeros((1, 50, 3)), np.zeros((1, 3)))]
    env = MlpEnvironment(params, rho=0.1)
    np.testing.assert_allclose(env.probs(np.random.default_rng(0).standard_normal((5, 4))), 1 / 3)


def test_low_temperature_approaches_one_hot(rng):
    env, _ = MlpTestbedPrior(3, 1.0).sample(rng)
    x = rng.standard_normal((20, 3))
    cold = MlpEnvironment(env.params, rho=1e-4).probs(x)
    np.testing.assert_allclose(cold.max(axis=1), 1.0, atol=1e-6)
    np.testing.assert_array_equal(cold.argmax(axis=1), env.logits(x).argmax(axis=1))


def test_testbed_snr_increases_as_rho_falls(rng):
    x = rng.standard_normal((200, 2))
    means = []
    for rho in (0.5, 0.1, 0.01):
        prior = MlpTestbedPrior(2, rho)
        envs = [prior.sample(np.random.default_rng(s))[0] for s in range(1000)]
        means.append(np.mean([e.probs(x).max(axis=1).mean() for e in envs]))
    assert means[0] < means[1] < means[2]


def test_xavier_bounds(rng):
    W = nets.xavier_uniform(rng, 3, 10, 50)
    bound = math.sqrt(6 / 60)
    assert W.shape == (3, 10, 50)
    assert np.abs(W).max() <= bound
    assert np.abs(W).max() > 0.9 * bound


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31), classes=st.integers(2, 5), rho=st.sampled_from([0.01, 0.1, 0.5, 2.0]))
def test_testbed_class_probs_valid(seed, classes, rho):
    rng = np.random.default_rng(seed)
    env, _ = MlpTestbedPrior(3, rho, num_classes=classes).sample(rng)
    p = env.probs(rng.standard_normal((8, 3)))
    assert p.shape == (8, classes)
    assert np.all(p >= 0) and np.all(p <= 1)
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-9)


def test_prior_validation():
    for bad in (lambda: CoinsPrior(0), lambda: LogisticPrior(0, 1.0), lambda: LogisticPrior(2, 0.0),
                lambda: MlpTestbedPrior(2, 0.1, hidden=()), lambda: MlpTestbedPrior(2, 0.1, num_classes=1)):
        with pytest.raises(ValueError):
            bad()


def test_csv_loader_reads_iris():
    x, y, names = load_csv(IRIS)
    assert x.shape == (150, 4)
    assert names == ["setosa", "versicolor", "virginica"]
    assert np.bincount(y).tolist() == [50, 50, 50]


def test_csv_loader_without_header(tmp_path):
    path = tmp_path / "plain.csv"
    path.write_text("1,2,0\n3,4,1\n5,6,1\n")
    x, y, names = load_csv(path)
    assert x.tolist() == [[1, 2], [3, 4], [5, 6]]
    assert y.tolist() == [0, 1, 1] and names == ["0", "1"]


def test_iris_prior_shapes_and_standardization():
    prior = dataset_prior_from_csv(IRIS)
    assert prior.num_classes == 3 and prior.T == 120
    assert prior.train_inputs.shape == (120, 4) and prior.test_inputs.shape == (30, 4)
    np.testing.assert_allclose(prior.train_inputs.mean(axis=0), 0, atol=1e-9)
    np.testing.assert_allclose(prior.train_inputs.var(axis=0), 1, atol=1e-6)


def test_empirical_environment_is_deterministic(rng):
    prior = dataset_prior_from_csv(IRIS, T=50)
    env, data = prior.sample(rng)
    assert len(data) == 50
    assert len({tuple(r) for r in data.inputs}) == len(np.unique(data.inputs, axis=0))
    x = sample_test_inputs(Dyadic, prior.test_distribution, 10, rng)
    batch = sample_labels(env, x, rng)
    assert environment_log_likelihood(env, batch) == 0.0
    np.testing.assert_array_equal(env.probs(x).max(axis=1), 1.0)


def test_empirical_subsample_has_no_repeats(rng):
    prior = dataset_prior_from_csv(IRIS, T=120)
    _, data = prior.sample(rng)
    idx = [int(np.flatnonzero(np.all(prior.train_inputs == row, axis=1))[0]) for row in data.inputs]
    assert len(idx) == 120


def test_empirical_errors():
    prior = dataset_prior_from_csv(IRIS, T=10)
    with pytest.raises(DomainError):
        prior.env.probs(np.full((1, 4), 99.0))
    with pytest.raises(ValueError):
        prior.with_T(121)
    with pytest.raises(ValueError):
        EmpiricalDatasetPrior(np.zeros((3, 2)), np.array([0, 1, 2]), np.zeros((1, 2)), np.array([0]),
                              T=1, num_classes=2)
    with pytest.raises(ValueError):
        EmpiricalDatasetPrior(np.zeros((3, 2)), np.array([0, 1, 1]), np.zeros((1, 2)), np.array([0]),
                              T=4, num_classes=2)


def test_anchor_pool_switch():
    test_pool = dataset_prior_from_csv(IRIS).test_distribution.inputs
    train_pool = dataset_prior_from_csv(IRIS, anchor_pool="train").test_distribution.inputs
    assert len(test_pool) == 30 and len(train_pool) == 120


def test_uniform_score_on_dataset_batch_is_ten_ln3(rng):
    from jointkl.agents.analytic import UniformAgent
    from jointkl.core import agent_log_likelihood

    prior = dataset_prior_from_csv(IRIS)
    env, _ = prior.sample(rng)
    x = sample_test_inputs(Dyadic, prior.test_distribution, 10, rng)
    batch = sample_labels(env, x, rng)
    score = environment_log_likelihood(env, batch) - agent_log_likelihood(UniformAgent(3), batch, 5, rng)
    assert score == 10 * math.log(3)
    assert TestBatch(x, batch.labels).tau == 10
