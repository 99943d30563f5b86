"""Oracle values, frozen, and the package's closed forms checked against them."""

import math

import pytest

import oracles
from jointkl.harness.repro import (
    coins_posterior_kl,
    coins_uniform_kl,
    collision_probability,
    shared_p_monadic_kl,
)

# frozen from the oracles in oracles.py
COIN_UNIFORM_TAU1 = 0.19314718055994526
SHARED_P_MONADIC = 0.32966134885493314
UNIFORM_MONADIC_TAU2 = 0.38629436111989057
POSTERIOR_M100_TAU5 = 0.9600985860918483


def test_frozen_values_still_come_out_of_the_oracles():
    assert oracles.coin_kl_uniform_quadrature() == pytest.approx(COIN_UNIFORM_TAU1, abs=1e-12)
    assert oracles.shared_p_monadic_enumeration() == pytest.approx(SHARED_P_MONADIC, abs=1e-10)
    assert oracles.coins_posterior_kl_partitions(100, 5) == pytest.approx(POSTERIOR_M100_TAU5, abs=1e-10)


def test_quadrature_matches_ln2_minus_half():
    assert COIN_UNIFORM_TAU1 == pytest.approx(math.log(2) - 0.5, abs=1e-12)


def test_closed_forms_match_oracles():
    assert shared_p_monadic_kl() == pytest.approx(SHARED_P_MONADIC, abs=1e-10)
    assert coins_uniform_kl(1) == pytest.approx(COIN_UNIFORM_TAU1, abs=1e-12)
    assert coins_uniform_kl(2) == pytest.approx(UNIFORM_MONADIC_TAU2, abs=1e-12)
    assert coins_posterior_kl(100, 5) == pytest.approx(POSTERIOR_M100_TAU5, abs=1e-10)


@pytest.mark.parametrize("M,tau", [(1, 1), (1, 4), (2, 3), (3, 3), (7, 4), (10, 5)])
def test_posterior_closed_form_against_partition_enumeration(M, tau):
    assert coins_posterior_kl(M, tau) == pytest.approx(oracles.coins_posterior_kl_partitions(M, tau), abs=1e-9)


def test_single_coin_posterior_equals_shared_p_for_two_tosses():
    # with one coin every toss hits the same p, exactly the shared-p situation
    assert coins_posterior_kl(1, 2) == pytest.approx(SHARED_P_MONADIC, abs=1e-10)


def test_collision_probability():
    assert collision_probability(10, 3) == pytest.approx(1 - 0.72)
    assert collision_probability(100, 5) == pytest.approx(1 - 0.99 * 0.98 * 0.97 * 0.96)
    assert collision_probability(5, 1) == 0.0


def test_posterior_never_worse_than_uniform():
    for M in (1, 5, 100):
        for tau in (1, 3, 6):
            assert coins_posterior_kl(M, tau) <= coins_uniform_kl(tau) + 1e-12
