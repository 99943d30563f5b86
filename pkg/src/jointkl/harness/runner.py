"""Grid execution and the results CSV.

Each cell (setting, agent variant, seed) runs one shared-environment estimate
for every configured metric.  Cells fan out over a process pool; rows are
written in grid order as soon as every earlier cell is done, so the CSV is
byte-identical for any ``jobs``.  Wall times go to a ``.timing.csv`` sidecar.
"""

from __future__ import annotations

import csv
import hashlib
import io
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields
from pathlib import Path

from jointkl import __version__
from jointkl.core import InvariantViolation
from jointkl.estimator import EstimationError, EstimatorConfig, estimate_kl_many
from jointkl.harness.config import AgentVariant, ExperimentConfig, Setting, build_factory, build_prior
from jointkl.sampling import sampler_kappa

MANIFEST_PREFIX = "# manifest"


@dataclass(frozen=True)
class ResultRow:
    experiment: str
    agent: str
    hp_id: str
    hparams: str
    D: int | None
    T: int
    rho: float | None
    tau: int
    kappa: str
    seed: int
    kl_mean: float | None
    kl_stderr: float | None
    n_terms: int
    status: str

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    @property
    def metric(self) -> str:
        return f"{self.tau}@{_sampler_name(self.kappa)}"

    @property
    def setting(self) -> tuple:
        return (self.D, self.T, self.rho)

    @property
    def key(self) -> tuple:
        return (self.experiment, self.agent, self.hp_id, self.D, self.T, self.rho, self.tau, self.kappa,
                self.seed)

    def to_record(self) -> list[str]:
        return [_fmt(getattr(self, f.name)) for f in fields(self)]

    @classmethod
    def from_record(cls, record: list[str]) -> "ResultRow":
        if len(record) != len(COLUMNS):
            raise ValueError(f"expected {len(COLUMNS)} columns, got {len(record)}")
        raw = dict(zip(COLUMNS, record))
        return cls(
            experiment=raw["experiment"],
            agent=raw["agent"],
            hp_id=raw["hp_id"],
            hparams=raw["hparams"],
            D=_opt(int, raw["D"]),
            T=int(raw["T"]),
            rho=_opt(float, raw["rho"]),
            tau=int(raw["tau"]),
            kappa=raw["kappa"],
            seed=int(raw["seed"]),
            kl_mean=_opt(float, raw["kl_mean"]),
            kl_stderr=_opt(float, raw["kl_stderr"]),
            n_terms=int(raw["n_terms"]),
            status=raw["status"],
        )


COLUMNS = [f.name for f in fields(ResultRow)]


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)  # shortest round-trip form
    return str(value)


def _opt(cast, text: str):
    return None if text == "" else cast(text)


def _sampler_name(kappa: str) -> str:
    return {"iid": "iid", "1": "monadic", "2": "dyadic"}.get(kappa, f"polyadic:{kappa}")


@dataclass(frozen=True)
class Cell:
    experiment: str
    setting: Setting
    variant: AgentVariant
    seed: int
    est_seed: int
    configs: tuple[EstimatorConfig, ...]


def estimator_seed(cfg: ExperimentConfig, setting: Setting, seed: int) -> int:
    """64-bit stream key for one (setting, seed); every agent in the cell shares it."""
    text = f"{cfg.base_seed}|{cfg.name}|{setting.D}|{setting.T}|{setting.rho}|{seed}"
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:8], "little")


def cells(cfg: ExperimentConfig) -> list[Cell]:
    out = []
    for setting in cfg.settings:
        for variant in cfg.variants():
            for seed in cfg.seeds:
                key = estimator_seed(cfg, setting, seed)
                configs = tuple(
                    EstimatorConfig(J=cfg.J, N=cfg.N, tau=m.tau, m_enn=cfg.m_enn, sampler=m.sampler, seed=key)
                    for m in cfg.metrics
                )
                out.append(Cell(cfg.name, setting, variant, seed, key, configs))
    return out


def _row(cell: Cell, est_cfg: EstimatorConfig, mean, stderr, n_terms, status) -> ResultRow:
    return ResultRow(
        experiment=cell.experiment,
        agent=cell.variant.name,
        hp_id=cell.variant.hp_id,
        hparams=cell.variant.hparams,
        D=cell.setting.D,
        T=cell.setting.T,
        rho=cell.setting.rho,
        tau=est_cfg.tau,
        kappa=str(sampler_kappa(est_cfg.sampler)),
        seed=cell.seed,
        kl_mean=mean,
        kl_stderr=stderr,
        n_terms=n_terms,
        status=status,
    )


def cell_keys(cell: Cell) -> list[tuple]:
    return [_row(cell, c, None, None, 0, "").key for c in cell.configs]


def run_cell(cell: Cell) -> tuple[list[ResultRow], float, str]:
    """Rows for one cell, its wall time, and an error message ('' on success)."""
    start = time.perf_counter()
    try:
        prior = build_prior(cell.setting)
        factory = build_factory(cell.variant, cell.setting)
        reports = estimate_kl_many(prior, factory, list(cell.configs))
        rows = [
            _row(cell, r.config, r.overall.mean, r.overall.stderr, r.overall.n_terms, "ok") for r in reports
        ]
        error = ""
    except (EstimationError, InvariantViolation) as exc:
        rows = [_row(cell, c, None, None, 0, "failed") for c in cell.configs]
        error = f"{type(exc).__name__}: {exc}"
    return rows, time.perf_counter() - start, error


def manifest_line(cfg: ExperimentConfig) -> str:
    seeds = ",".join(map(str, cfg.seeds))
    return (f"{MANIFEST_PREFIX} experiment={cfg.name} config_sha256={cfg.digest()} version={__version__} "
            f"base_seed={cfg.base_seed} seeds={seeds}")


def _csv_line(values: list[str]) -> str:
    buf = io.StringIO()
    # a "\r\n" terminator makes the writer quote fields holding a lone "\r"
    csv.writer(buf, lineterminator="\r\n").writerow(values)
    return buf.getvalue()[:-2] + "\n"


def read_results(path: str | Path) -> tuple[str | None, list[ResultRow]]:
    """Manifest line (or None) and the rows of a results CSV."""
    with open(path, newline="") as fh:
        text = fh.read()
    manifest = None
    if text.startswith(MANIFEST_PREFIX):
        manifest, _, text = text.partition("\n")
    reader = csv.reader(io.StringIO(text, newline=""))
    header = next(reader, None)
    if header != COLUMNS:
        raise ValueError(f"{path}: unexpected header {header}")
    return manifest, [ResultRow.from_record(r) for r in reader if r]


def default_out(cfg: ExperimentConfig) -> Path:
    return Path(cfg.out or f"{cfg.name}.csv")


def _existing(out: Path, cfg: ExperimentConfig) -> list[ResultRow]:
    if not out.exists() or out.stat().st_size == 0:
        return []
    manifest, rows = read_results(out)
    if manifest is None or f"config_sha256={cfg.digest()}" not in manifest.split():
        raise FileExistsError(f"{out} holds results of a different experiment config; choose another --out")
    return rows


def run_experiment(cfg: ExperimentConfig, jobs: int = 1, out: str | Path | None = None,
                   log=sys.stderr) -> tuple[list[ResultRow], int]:
    """Run every missing cell, append its rows, return (all rows, failed-cell count).

    Completed rows already in ``out`` are kept; failed rows are dropped and
    retried.  When nothing is missing the file is left untouched.
    """
    out = Path(out) if out is not None else default_out(cfg)
    all_cells = cells(cfg)
    existing = _existing(out, cfg)
    done = {r.key for r in existing if r.ok}
    todo = [c for c in all_cells if not all(k in done for k in cell_keys(c))]
    if not todo:
        return existing, 0

    kept = [r for r in existing if r.ok]
    if len(kept) != len(existing) or not existing:
        out.parent.mkdir(parents=True, exist_ok=True)
        with open(out, "w", newline="") as fh:
            fh.write(manifest_line(cfg) + "\n")
            fh.write(_csv_line(COLUMNS))
            for row in kept:
                fh.write(_csv_line(row.to_record()))

    timing = Path(f"{out}.timing.csv")
    new_timing = not timing.exists()
    rows = list(kept)
    failures = 0
    with open(out, "a", newline="") as fh, open(timing, "a", newline="") as tf:
        if new_timing:
            tf.write(_csv_line(["experiment", "agent", "hp_id", "D", "T", "rho", "seed", "wall_time"]))
        for cell, (cell_rows, wall, error) in zip(todo, _execute(todo, jobs)):
            for row in cell_rows:
                if row.key not in done:
                    fh.write(_csv_line(row.to_record()))
                    rows.append(row)
            fh.flush()
            tf.write(_csv_line([cell.experiment, cell.variant.name, cell.variant.hp_id,
                                _fmt(cell.setting.D), _fmt(cell.setting.T), _fmt(cell.setting.rho),
                                str(cell.seed), f"{wall:.3f}"]))
            tf.flush()
            if error:
                failures += 1
                print(f"cell failed: agent={cell.variant.name} {cell.variant.hp_id} D={cell.setting.D} "
                      f"T={cell.setting.T} seed={cell.seed}: {error}", file=log)
    return rows, failures


def _execute(todo: list[Cell], jobs: int):
    """Yield run_cell results in input order."""
    if jobs <= 1 or len(todo) == 1:
        for cell in todo:
            yield run_cell(cell)
        return
    with ProcessPoolExecutor(max_workers=min(jobs, len(todo))) as pool:
        # chunksize 1 lets idle workers take the next cell as soon as they finish
        yield from pool.map(run_cell, todo, chunksize=1)
