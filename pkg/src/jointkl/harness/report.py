"""Tuned, baseline-normalized summaries of result rows.

Hyperparameters are picked per (agent, setting, metric) on the tuning seeds
and scored on the disjoint report seeds.  Bands are percentile bootstrap
intervals over report seeds, shared across agents within a resample.
"""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from jointkl.core import exact_mean

N_BOOT = 1000


class ReportError(ValueError):
    """The rows cannot be summarised as asked."""


@dataclass(frozen=True)
class ReportEntry:
    agent: str
    metric: str
    mean: float
    lo: float
    hi: float
    normalized: float
    norm_lo: float
    norm_hi: float
    normalized_per_setting: float
    n_settings: int
    n_seeds: int
    chosen: str


@dataclass(frozen=True)
class NormalizedReport:
    baseline: str
    entries: tuple[ReportEntry, ...]
    tune_seeds: tuple[int, ...]
    report_seeds: tuple[int, ...]

    def get(self, agent: str, metric: str) -> ReportEntry:
        for e in self.entries:
            if e.agent == agent and e.metric == metric:
                return e
        raise KeyError((agent, metric))

    @property
    def metrics(self) -> list[str]:
        return sorted({e.metric for e in self.entries}, key=_metric_order)

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(f"# baseline={self.baseline}; bands: bootstrap 95% percentile over report seeds "
                     f"({N_BOOT} resamples); tune seeds={','.join(map(str, self.tune_seeds))}\n")
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow([f.name for f in fields(ReportEntry)])
            for e in self.entries:
                writer.writerow([repr(v) if isinstance(v, float) else v for v in
                                 (getattr(e, f.name) for f in fields(ReportEntry))])

    def table(self) -> str:
        lines = [f"{'agent':<14}{'metric':<14}{'mean':>10}{'95% band':>22}{'normalized':>12}{'per-setting':>13}"]
        for e in self.entries:
            band = f"[{e.lo:.4g}, {e.hi:.4g}]"
            lines.append(f"{e.agent:<14}{e.metric:<14}{e.mean:>10.4g}{band:>22}{e.normalized:>12.4g}"
                         f"{e.normalized_per_setting:>13.4g}")
        return "\n".join(lines)


def _metric_order(metric: str):
    tau, _, sampler = metric.partition("@")
    return (int(tau), sampler)


def split_seeds(seeds) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """Even seeds tune, odd seeds report; with only one parity both use all seeds."""
    seeds = sorted(set(seeds))
    tune = tuple(s for s in seeds if s % 2 == 0)
    report = tuple(s for s in seeds if s % 2 == 1)
    if not tune or not report:
        return tuple(seeds), tuple(seeds)
    return tune, report


def _mean(values) -> float:
    return exact_mean(list(values))


def make_report(rows, baseline: str = "mlp", n_boot: int = N_BOOT, seed: int = 0) -> NormalizedReport:
    """Normalize best-tuned agent scores by the baseline's.

    The headline ``normalized`` column divides aggregated means; the
    ``normalized_per_setting`` column averages per-setting ratios instead.
    """
    rows = [r for r in rows if r.ok]
    if not rows:
        raise ReportError("no completed rows")
    agents = sorted({r.agent for r in rows})
    if baseline not in agents:
        raise ReportError(f"baseline agent {baseline!r} is not in the results")
    tune_seeds, report_seeds = split_seeds(r.seed for r in rows)
    tune_set = set(tune_seeds)

    # score[(agent, metric)][setting][seed] for the tuned hyperparameter choice
    by_cell: dict[tuple, dict[str, dict[int, float]]] = defaultdict(lambda: defaultdict(dict))
    for r in rows:
        by_cell[(r.agent, r.metric, r.setting)][r.hp_id][r.seed] = r.kl_mean
    scores: dict[tuple, dict[tuple, dict[int, float]]] = defaultdict(dict)
    chosen: dict[tuple, dict[tuple, str]] = defaultdict(dict)
    for (agent, metric, setting), per_hp in by_cell.items():
        def tuning_score(hp):
            vals = [v for s, v in per_hp[hp].items() if s in tune_set]
            return (_mean(vals) if vals else math.inf, hp)
        best = min(sorted(per_hp), key=tuning_score)
        scores[(agent, metric)][setting] = {s: v for s, v in per_hp[best].items() if s in report_seeds}
        chosen[(agent, metric)][setting] = best

    seeds = np.array(report_seeds)
    rng = np.random.default_rng(seed)
    resamples = seeds[rng.integers(0, len(seeds), size=(n_boot, len(seeds)))]

    def aggregate(table: dict[tuple, dict[int, float]], pick) -> float:
        vals = [table[st][s] for st in sorted(table, key=repr) for s in pick if s in table[st]]
        return _mean(vals) if vals else math.nan

    entries = []
    metrics = sorted({m for _, m in scores}, key=_metric_order)
    for metric in metrics:
        base = scores.get((baseline, metric))
        if base is None:
            raise ReportError(f"baseline {baseline!r} has no rows for metric {metric}")
        base_mean = aggregate(base, seeds)
        base_boot = np.array([aggregate(base, pick) for pick in resamples])
        if not base_mean > 0:
            raise ReportError(f"baseline score for {metric} is {base_mean}; cannot normalize")
        for agent in agents:
            table = scores.get((agent, metric))
            if table is None:
                continue
            mean = aggregate(table, seeds)
            boot = np.array([aggregate(table, pick) for pick in resamples])
            ratios = boot / base_boot
            per_setting = _per_setting(table, base, seeds)
            lo, hi = np.nanpercentile(boot, [2.5, 97.5])
            nlo, nhi = np.nanpercentile(ratios, [2.5, 97.5])
            picks = sorted(set(chosen[(agent, metric)].values()))
            entries.append(ReportEntry(
                agent=agent, metric=metric, mean=mean, lo=float(lo), hi=float(hi),
                normalized=mean / base_mean, norm_lo=float(nlo), norm_hi=float(nhi),
                normalized_per_setting=per_setting, n_settings=len(table),
                n_seeds=len({s for v in table.values() for s in v}), chosen="|".join(picks),
            ))
    return NormalizedReport(baseline, tuple(entries), tune_seeds, report_seeds)


def _per_setting(table, base, seeds) -> float:
    ratios = []
    for st in sorted(table, key=repr):
        num = [table[st][s] for s in seeds if s in table[st]]
        den = [base.get(st, {})[s] for s in seeds if s in base.get(st, {})]
        if num and den and _mean(den) > 0:
            ratios.append(_mean(num) / _mean(den))
    return _mean(ratios) if ratios else math.nan


def bands_overlap(a: ReportEntry, b: ReportEntry) -> bool:
    return a.lo <= b.hi and b.lo <= a.hi
