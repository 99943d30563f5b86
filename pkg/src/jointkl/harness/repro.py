"""Desk-scale reproductions with pass/fail checks.

Each id maps to a packaged config and a checker over its result rows.
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.stats import binom

from jointkl.core import KlEstimate
from jointkl.estimator import RatioUndefined, estimate_ratio
from jointkl.harness.config import ExperimentConfig, load_config
from jointkl.harness.report import bands_overlap, make_report
from jointkl.harness.runner import ResultRow, run_experiment

REPRO_IDS = ("fig1", "fig2", "fig4", "fig5", "prop1", "prop2")


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.detail}"


def config_path(name: str) -> Path:
    return Path(str(resources.files("jointkl.harness") / "configs" / f"{name}.ini"))


def repro_config(figure: str) -> ExperimentConfig:
    if figure not in REPRO_IDS:
        raise ValueError(f"unknown reproduction {figure!r}; choose from {', '.join(REPRO_IDS)}")
    return load_config(config_path(figure))


# exact values for the bag of coins with no training data


def shared_p_monadic_kl() -> float:
    """Two tosses of one uniformly random coin, scored by a Unif(0,1) shared-p agent."""
    return -1.0 - (2 / 3) * math.log(1 / 3) - (1 / 3) * math.log(1 / 6)


def coins_uniform_kl(tau: int) -> float:
    """Each toss contributes E[log Ber(p)] = -1/2 against log(1/2)."""
    return tau * (math.log(2) - 0.5)


def coins_posterior_kl(num_coins: int, tau: int) -> float:
    """Exact d_KL^tau of the Beta(1,1) posterior agent under iid inputs.

    Each coin's toss count is Binomial(tau, 1/M); a coin tossed n times shows
    k heads with probability 1/(n+1) for every k, and the agent assigns that
    sequence k!(n-k)!/(n+1)!.
    """
    def block(n: int) -> float:
        return sum(
            math.lgamma(k + 1) + math.lgamma(n - k + 1) - math.lgamma(n + 2) for k in range(n + 1)
        ) / (n + 1)

    counts = np.arange(1, tau + 1)
    pmf = binom.pmf(counts, tau, 1 / num_coins)
    expected_log_agent = num_coins * math.fsum(p * block(int(n)) for n, p in zip(counts, pmf))
    return -tau / 2 - expected_log_agent


def collision_probability(num_coins: int, tau: int) -> float:
    """P(some coin appears twice among tau iid draws)."""
    return 1.0 - math.prod(1 - k / num_coins for k in range(1, tau))


# row helpers


def _estimate(rows, agent: str, metric: str, D=None) -> KlEstimate:
    picked = [r for r in rows if r.ok and r.agent == agent and r.metric == metric and (D is None or r.D == D)]
    if len(picked) != 1:
        raise LookupError(f"expected one row for {agent} {metric} D={D}, found {len(picked)}")
    r = picked[0]
    return KlEstimate(r.kl_mean, r.kl_stderr, r.n_terms)


def _ratio(rows, num: str, den: str, metric: str, D=None) -> float:
    try:
        return estimate_ratio(_estimate(rows, num, metric, D), _estimate(rows, den, metric, D))[0]
    except RatioUndefined:
        return math.nan


def check_prop2(rows: list[ResultRow]) -> list[Check]:
    exact = shared_p_monadic_kl()
    sp, post, uni = (_estimate(rows, a, "2@monadic") for a in ("shared_p", "posterior", "uniform"))
    se_pair = math.hypot(sp.stderr, post.stderr)
    agree = abs(sp.mean - post.mean) <= 2 * se_pair
    near = all(abs(e.mean - exact) <= 2 * e.stderr for e in (sp, post))
    gap = min(uni.mean - sp.mean - 3 * math.hypot(uni.stderr, sp.stderr),
              uni.mean - post.mean - 3 * math.hypot(uni.stderr, post.stderr))
    return [
        Check("prop2 shared_p matches posterior and oracle", agree and near,
              f"shared_p={sp.mean:.4f}±{sp.stderr:.4f} posterior={post.mean:.4f}±{post.stderr:.4f} "
              f"exact={exact:.4f}"),
        Check("prop2 uniform is worse", gap > 0,
              f"uniform={uni.mean:.4f}±{uni.stderr:.4f} exact={coins_uniform_kl(2):.4f}"),
    ]


def check_prop1(rows: list[ResultRow]) -> list[Check]:
    M, tau = 100, 5
    exact = coins_posterior_kl(M, tau)
    uni = _estimate(rows, "uniform", f"{tau}@iid")
    post = _estimate(rows, "posterior", f"{tau}@iid")
    gap = uni.mean - exact
    upper = tau * math.log(2) * collision_probability(M, tau)
    return [
        Check("prop1 uniform within the marginal band", -3 * uni.stderr <= gap <= upper + 3 * uni.stderr,
              f"uniform - exact posterior = {gap:.4f}, band [{-3 * uni.stderr:.4f}, "
              f"{upper + 3 * uni.stderr:.4f}]"),
        Check("prop1 posterior matches its exact value", abs(post.mean - exact) <= 3 * post.stderr,
              f"posterior={post.mean:.4f}±{post.stderr:.4f} exact={exact:.4f}"),
    ]


def check_fig2(rows: list[ResultRow]) -> list[Check]:
    dims = sorted({r.D for r in rows})
    dyadic_pu = {D: _ratio(rows, "prior", "uniform", "10@dyadic", D) for D in dims}
    dyadic_pm = {D: _ratio(rows, "prior", "marginal", "10@dyadic", D) for D in dims}
    monadic_pm = {D: _ratio(rows, "prior", "marginal", "10@monadic", D) for D in dims}
    iid_pu = _ratio(rows, "prior", "uniform", "10@iid", max(dims))
    fmt = lambda d: " ".join(f"D={k}:{v:.3f}" for k, v in d.items())  # noqa: E731
    return [
        Check("fig2a dyadic prior/uniform <= 0.5", all(v <= 0.5 for v in dyadic_pu.values()), fmt(dyadic_pu)),
        Check("fig2b iid prior/uniform >= 0.8 at largest D", iid_pu >= 0.8, f"D={max(dims)}:{iid_pu:.3f}"),
        Check("fig2c monadic prior/marginal in [0.8, 1.25]",
              all(0.8 <= v <= 1.25 for v in monadic_pm.values()), fmt(monadic_pm)),
        Check("fig2c dyadic prior/marginal <= 0.5", all(v <= 0.5 for v in dyadic_pm.values()), fmt(dyadic_pm)),
    ]


def check_fig1(rows: list[ResultRow]) -> list[Check]:
    iid = _ratio(rows, "prior", "uniform", "1000@iid")
    dyadic = _ratio(rows, "prior", "uniform", "10@dyadic")
    return [
        Check("fig1 iid tau=1000 prior/uniform >= 0.5", iid >= 0.5, f"{iid:.3f}"),
        Check("fig1 dyadic tau=10 prior/uniform <= 0.5", dyadic <= 0.5, f"{dyadic:.3f}"),
    ]


def check_fig4(rows: list[ResultRow]) -> list[Check]:
    report = make_report(rows, baseline="mlp")
    ens, plus = report.get("ensemble", "10@dyadic"), report.get("ensemble+", "10@dyadic")
    ens1, plus1 = report.get("ensemble", "1@iid"), report.get("ensemble+", "1@iid")
    return [
        Check("fig4 ensemble+ joint <= 0.9 x ensemble, bands apart",
              plus.mean <= 0.9 * ens.mean and not bands_overlap(plus, ens),
              f"ensemble+={plus.mean:.3f} [{plus.lo:.3f}, {plus.hi:.3f}] "
              f"ensemble={ens.mean:.3f} [{ens.lo:.3f}, {ens.hi:.3f}] ratio={plus.mean / ens.mean:.3f}"),
        Check("fig4 marginal bands overlap", bands_overlap(plus1, ens1),
              f"ensemble+={plus1.mean:.3f} [{plus1.lo:.3f}, {plus1.hi:.3f}] "
              f"ensemble={ens1.mean:.3f} [{ens1.lo:.3f}, {ens1.hi:.3f}] "
              f"({len(report.report_seeds)} report seeds)"),
    ]


def largest_separated_lambda(rows: list[ResultRow], D: int) -> float:
    """Largest lambda = T/D where ensemble+ beats ensemble on d_KL^{10,2} with separated bands."""
    best = 0.0
    for T in sorted({r.T for r in rows if r.D == D}):
        subset = [r for r in rows if r.D == D and r.T == T]
        report = make_report(subset, baseline="mlp")
        ens, plus = report.get("ensemble", "10@dyadic"), report.get("ensemble+", "10@dyadic")
        if plus.hi < ens.lo:
            best = max(best, T / D)
    return best


def check_fig5(rows: list[ResultRow]) -> list[Check]:
    dims = sorted({r.D for r in rows})
    reach = [largest_separated_lambda(rows, D) for D in dims]
    return [
        # a run where nothing separates would pass the ordering vacuously
        Check("fig5 low-data regime grows with D",
              reach[-1] > 0 and all(a <= b for a, b in zip(reach, reach[1:])),
              " ".join(f"D={D}:lambda*={v:g}" for D, v in zip(dims, reach))),
    ]


CHECKS = {
    "prop1": check_prop1,
    "prop2": check_prop2,
    "fig1": check_fig1,
    "fig2": check_fig2,
    "fig4": check_fig4,
    "fig5": check_fig5,
}


def repro(figure: str, out_dir: str | Path = ".", jobs: int = 1, m_enn: int | None = None,
          base_seed: int | None = None, stream=sys.stdout) -> list[Check]:
    """Run one reproduction, print a PASS/FAIL line per check, return the checks."""
    cfg = repro_config(figure).with_overrides(m_enn=m_enn, base_seed=base_seed)
    out = Path(out_dir) / f"{cfg.name}.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    rows, failures = run_experiment(cfg, jobs=jobs, out=out)
    if failures:
        checks = [Check(f"{figure} run", False, f"{failures} cells failed")]
    else:
        checks = CHECKS[figure](rows)
    for c in checks:
        print(c.line(), file=stream, flush=True)
    return checks
