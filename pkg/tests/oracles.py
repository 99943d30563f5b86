"""Independent reference computations.

Nothing here imports the package.  Each oracle takes a different route to the
number than the code under test: quadrature instead of closed forms, explicit
enumeration instead of linearity tricks, probability space instead of logs.
"""

from __future__ import annotations

import itertools
import math

import numpy as np
from scipy import integrate


def coin_kl_uniform_quadrature() -> float:
    """E_p KL(Ber(p) || Ber(1/2)) for p ~ Unif(0, 1)."""
    def kl(p):
        if p <= 0 or p >= 1:
            return math.log(2)
        return p * math.log(2 * p) + (1 - p) * math.log(2 * (1 - p))
    value, _ = integrate.quad(kl, 0, 1)
    return value


def shared_p_monadic_enumeration() -> float:
    """tau = 2 tosses of one coin p ~ Unif(0,1), agent p_hat ~ Unif(0,1) shared.

    Enumerates the four label pairs, integrating the true and agent
    probabilities numerically.
    """
    total = 0.0
    for y in itertools.product((0, 1), repeat=2):
        heads = sum(y)
        def true_prob(p):
            return p**heads * (1 - p) ** (2 - heads)
        agent = integrate.quad(true_prob, 0, 1)[0]  # same integral, agent side
        # E_p[ P(y|p) log P(y|p) ] - E_p[P(y|p)] log agent
        ent = integrate.quad(lambda p: true_prob(p) * math.log(max(true_prob(p), 1e-300)), 0, 1)[0]
        total += ent - agent * math.log(agent)
    return total


def set_partitions(items):
    items = list(items)
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in set_partitions(rest):
        for i in range(len(part)):
            yield part[:i] + [[first] + part[i]] + part[i + 1:]
        yield [[first]] + part


def _block_expected_log_agent(n: int) -> float:
    """E over p ~ U(0,1) and n tosses of log of the Beta(1,1) predictive, by quadrature."""
    def integrand(p):
        total = 0.0
        for k in range(n + 1):
            prob = math.comb(n, k) * p**k * (1 - p) ** (n - k)
            log_agent = math.lgamma(k + 1) + math.lgamma(n - k + 1) - math.lgamma(n + 2)
            total += prob * log_agent
        return total
    return integrate.quad(integrand, 0, 1)[0]


def coins_posterior_kl_partitions(num_coins: int, tau: int) -> float:
    """d_KL^tau of the no-data Beta posterior agent under iid coin inputs.

    Sums over set partitions of the tau positions: a partition with b blocks
    means b distinct coins, which happens with probability M^(b falling)/M^tau.
    """
    expected_log_true = -tau / 2  # E[p log p + (1-p) log(1-p)] = -1/2 per toss
    expected_log_agent = 0.0
    for part in set_partitions(range(tau)):
        b = len(part)
        prob = math.perm(num_coins, b) / num_coins**tau
        expected_log_agent += prob * sum(_block_expected_log_agent(len(block)) for block in part)
    return expected_log_true - expected_log_agent


def naive_agent_likelihood(per_sample_probs: np.ndarray, labels: np.ndarray) -> float:
    """log of the plain average over samples of the product of picked probabilities."""
    picked = per_sample_probs[:, np.arange(len(labels)), labels]
    return math.log(np.mean(np.prod(picked, axis=1)))


def dyadic_both_anchor_probability(tau: int) -> float:
    return 1 - 2 * 0.5**tau


def all_distinct_probability(num_coins: int, tau: int) -> float:
    return math.prod((num_coins - k) / num_coins for k in range(tau))
