import math

import numpy as np
import pytest

from jointkl.agents.analytic import (
    beta_posterior_factory,
    logistic_marginal_factory,
    logistic_prior_factory,
    perfect_factory,
    shared_p_factory,
    uniform_factory,
)
from jointkl.agents.neural import Mlp, trained_factory
from jointkl.core import AgentFactory, KlEstimate, TrainingError
from jointkl.environments import CoinsPrior, LogisticPrior, MlpTestbedPrior
from jointkl.estimator import (
    EstimateReport,
    EstimationError,
    EstimatorConfig,
    RatioUndefined,
    estimate_kl,
    estimate_kl_many,
    estimate_ratio,
    kl_ratio,
    stream,
)
from jointkl.harness.repro import coins_posterior_kl, coins_uniform_kl, collision_probability
from jointkl.sampling import Dyadic, Iid, Monadic, Polyadic


def _cfg(**kw):
    base = dict(J=20, N=50, tau=2, m_enn=200, sampler=Iid(), seed=3)
    base.update(kw)
    return EstimatorConfig(**base)


def test_config_validation():
    for bad in (dict(J=0), dict(N=0), dict(tau=0), dict(m_enn=0), dict(seed=-1), dict(seed=2**64)):
        with pytest.raises(ValueError):
            _cfg(**bad)


@pytest.mark.parametrize("prior", [CoinsPrior(4, 3), LogisticPrior(3, 2.0, 5), MlpTestbedPrior(2, 0.1, 4)])
@pytest.mark.parametrize("sampler", [Iid(), Monadic, Dyadic, Polyadic(5)])
def test_perfect_agent_scores_exactly_zero(prior, sampler):
    report = estimate_kl(prior, perfect_factory(), _cfg(J=3, N=10, tau=4, sampler=sampler))
    assert report.overall.mean == 0.0 and report.overall.stderr == 0.0
    assert report.overall.n_terms == 30
    assert all(e.mean == 0.0 for e in report.per_environment)


def test_single_coin_uniform_agent():
    cfg = EstimatorConfig(J=20_000, N=1, tau=1, m_enn=1, seed=1)
    est = estimate_kl(CoinsPrior(1), uniform_factory(), cfg).overall
    assert abs(est.mean - (math.log(2) - 0.5)) <= 3 * est.stderr


def test_report_bookkeeping():
    report = estimate_kl(CoinsPrior(5), shared_p_factory(), _cfg(J=4, N=7))
    assert len(report.per_environment) == 4
    assert report.overall.n_terms == 28
    assert report.overall.mean == pytest.approx(np.mean([e.mean for e in report.per_environment]), abs=1e-12)
    assert report.config.J == 4 and report.agent == "shared_p"


def test_same_seed_is_bit_identical_and_seed_matters():
    a = estimate_kl(CoinsPrior(5), shared_p_factory(), _cfg())
    b = estimate_kl(CoinsPrior(5), shared_p_factory(), _cfg())
    c = estimate_kl(CoinsPrior(5), shared_p_factory(), _cfg(seed=4))
    assert a == b
    assert a.overall.mean != c.overall.mean


def test_shared_draws_match_individual_runs():
    prior = LogisticPrior(3, 2.0, 0)
    cfgs = [_cfg(tau=1), _cfg(tau=5, sampler=Dyadic)]
    together = estimate_kl_many(prior, logistic_prior_factory(2.0, 3), cfgs)
    for cfg, report in zip(cfgs, together):
        assert report == estimate_kl(prior, logistic_prior_factory(2.0, 3), cfg)
    with pytest.raises(ValueError):
        estimate_kl_many(prior, uniform_factory(), [_cfg(J=2), _cfg(J=3)])
    assert estimate_kl_many(prior, uniform_factory(), []) == []


def test_stream_keys_are_independent():
    draws = {(j, n, p): stream(9, j, n, p).random() for j in range(3) for n in range(3) for p in range(3)}
    assert len(set(draws.values())) == len(draws)
    assert stream(9, 1, 2, 0).random() == draws[(1, 2, 0)]


def test_training_failure_names_environment():
    def broken(data, rng, env=None):
        raise TrainingError("loss is nan")
    with pytest.raises(EstimationError, match="j=0"):
        estimate_kl(CoinsPrior(2), AgentFactory("broken", broken), _cfg())


def test_posterior_agent_is_never_beaten_on_coins():
    prior = CoinsPrior(10, T=20)
    cfg = _cfg(J=300, N=10, tau=3, m_enn=300, sampler=Dyadic)
    post = estimate_kl(prior, beta_posterior_factory(10), cfg).overall
    for factory in (uniform_factory(), shared_p_factory()):
        other = estimate_kl(prior, factory, cfg).overall
        assert other.mean >= post.mean - 3 * math.hypot(other.stderr, post.stderr)


@pytest.mark.parametrize("M,tau", [(20, 3), (100, 5)])
def test_iid_uniform_gap_within_collision_band(M, tau):
    cfg = EstimatorConfig(J=20_000, N=1, tau=tau, m_enn=1, seed=5)
    est = estimate_kl(CoinsPrior(M), uniform_factory(), cfg).overall
    gap = est.mean - coins_posterior_kl(M, tau)
    upper = tau * math.log(2) * collision_probability(M, tau)
    assert -3 * est.stderr <= gap <= upper + 3 * est.stderr


def test_uniform_exactly_matches_closed_form_gap_to_truth():
    cfg = EstimatorConfig(J=20_000, N=1, tau=2, m_enn=1, seed=8)
    est = estimate_kl(CoinsPrior(3), uniform_factory(), cfg).overall
    assert abs(est.mean - coins_uniform_kl(2)) <= 3 * est.stderr


def test_logistic_prior_agent_is_optimal():
    prior = LogisticPrior(5, 3.0)
    cfg = _cfg(J=100, N=10, tau=6, m_enn=500, sampler=Dyadic)
    best = estimate_kl(prior, logistic_prior_factory(3.0, 5), cfg).overall
    for factory in (uniform_factory(), logistic_marginal_factory(3.0)):
        other = estimate_kl(prior, factory, cfg).overall
        assert best.mean <= other.mean + 3 * math.hypot(best.stderr, other.stderr)


def test_mlp_beats_uniform_marginally_on_testbed():
    prior = MlpTestbedPrior(10, 0.1, T=1000)
    cfg = EstimatorConfig(J=2, N=300, tau=1, m_enn=1, seed=2)
    mlp = estimate_kl(prior, trained_factory(Mlp(steps=200, l2_decay=1.0)), cfg).overall
    uni = estimate_kl(prior, uniform_factory(), cfg).overall
    assert mlp.mean < uni.mean


def _report(mean, stderr, tau=10, sampler=Dyadic):
    cfg = EstimatorConfig(J=1, N=2, tau=tau, sampler=sampler)
    return EstimateReport("x", KlEstimate(mean, stderr, 2), (), cfg)


def test_ratio_of_identical_reports_is_one():
    r = _report(0.8, 0.01)
    assert kl_ratio(r, r)[0] == 1.0


def test_perfect_over_uniform_ratio_is_zero():
    assert kl_ratio(_report(0.0, 0.0), _report(2.0, 0.1)) == (0.0, 0.0)


def test_ratio_error_propagation():
    ratio, stderr = estimate_ratio(KlEstimate(1.0, 0.1, 10), KlEstimate(2.0, 0.2, 10))
    assert ratio == 0.5
    assert stderr == pytest.approx(math.sqrt((0.1 / 2) ** 2 + (1.0 * 0.2 / 4) ** 2))


def test_ratio_undefined_and_mismatch():
    with pytest.raises(RatioUndefined):
        kl_ratio(_report(1.0, 0.1), _report(0.0, 0.0))
    with pytest.raises(RatioUndefined):
        kl_ratio(_report(1.0, 0.1), _report(0.2, 0.1))
    with pytest.raises(ValueError):
        kl_ratio(_report(1.0, 0.1), _report(1.0, 0.1, tau=5))
    with pytest.raises(ValueError):
        kl_ratio(_report(1.0, 0.1), _report(1.0, 0.1, sampler=Iid()))
