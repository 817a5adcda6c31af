"""Replicated simulation runs, bias/MSE aggregation and report files.

Each (scenario, replicate) draws its own seed from the master seed (see
:func:`ecbalance.simgen.replicate_seed`), so results do not depend on the
number of workers or the order in which scenarios finish.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .balancing import EstimandKind
from .errors import EmptyInput, IoError, MissingOracleEntry, ModelError
from .estimators import SUPPORTED, estimate
from .oracle import worker_count
from .psmodel import fit_propensity
from .simgen import ScenarioSpec, generate, replicate_seed

METRIC_COLUMNS = (
    "setting", "ec", "estimand", "true_value", "mean_estimate", "bias", "mse", "mc_se_bias", "b", "failures",
)
FIGURE_COLUMNS = ("setting", "estimand", "ec", "hte_level", "n2", "metric", "value")


@dataclass(frozen=True)
class MetricsRow:
    setting: int
    ec: int
    estimand: str
    true_value: float
    mean_estimate: float
    bias: float
    mse: float
    mc_se_bias: float
    b: int
    failures: int


@dataclass
class MetricsTable:
    rows: list[MetricsRow] = field(default_factory=list)
    specs: dict = field(default_factory=dict)
    estimates: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.rows)

    def get(self, setting, ec, estimand) -> MetricsRow:
        kind = EstimandKind.parse(estimand).value
        for r in self.rows:
            if (r.setting, r.ec, r.estimand) == (setting, ec, kind):
                return r
        raise KeyError((setting, ec, kind))


def run_scenario(spec: ScenarioSpec, b: int, master_seed: int) -> np.ndarray:
    """``(b, 3)`` array of ATI/ATT/ATO estimates; NaN marks a failed replicate."""
    out = np.full((b, len(SUPPORTED)), np.nan)
    for rep in range(b):
        data = generate(spec, replicate_seed(master_seed, spec.setting_id, spec.ec_id, rep))
        try:
            pi = fit_propensity(data).pi_hat
        except ModelError:
            continue
        for j, kind in enumerate(SUPPORTED):
            try:
                out[rep, j] = estimate(data, kind, pi).tau_hat
            except ModelError:
                pass
    return out


def _job(args):
    return run_scenario(*args)


def summarize(estimates: np.ndarray, true_value: float):
    """``(mean_estimate, bias, mse, mc_se_bias, n_ok, failures)`` over the finite entries."""
    ok = estimates[np.isfinite(estimates)]
    n = ok.size
    failures = estimates.size - n
    if n == 0:
        return math.nan, math.nan, math.nan, math.nan, 0, failures
    mean = float(np.mean(ok))
    bias = mean - true_value
    mse = float(np.mean((ok - true_value) ** 2))
    se = float(np.std(ok, ddof=1) / math.sqrt(n)) if n > 1 else math.nan
    return mean, bias, mse, se, n, failures


def run_replications(specs, b: int, master_seed: int, oracle_table: dict, workers: int | None = None) -> MetricsTable:
    specs = list(specs)
    if b < 1:
        raise ValueError("need at least one replicate")
    for s in specs:
        if (s.setting_id, s.ec_id) not in oracle_table:
            raise MissingOracleEntry(f"no true estimands for setting {s.setting_id}, EC{s.ec_id}")

    jobs = [(s, b, master_seed) for s in specs]
    n_workers = min(worker_count(workers), max(len(jobs), 1))
    if n_workers > 1:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            results = list(pool.map(_job, jobs))
    else:
        results = [_job(j) for j in jobs]

    table = MetricsTable()
    for spec, est in zip(specs, results):
        key = (spec.setting_id, spec.ec_id)
        truth = oracle_table[key]
        table.specs[key] = spec
        table.estimates[key] = est
        for j, kind in enumerate(SUPPORTED):
            tv = truth.value(kind)
            mean, bias, mse, se, n_ok, failures = summarize(est[:, j], tv)
            table.rows.append(MetricsRow(spec.setting_id, spec.ec_id, kind.value, tv, mean, bias, mse, se, n_ok, failures))
    return table


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def _write(path, columns, rows, metadata):
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            for key, value in (metadata or {}).items():
                fh.write(f"# {key}: {value}\n")
            w = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n")
            w.writeheader()
            for row in rows:
                w.writerow({k: _fmt(row[k]) for k in columns})
    except OSError as exc:
        raise IoError(str(exc)) from exc


def figure_rows(metrics: MetricsTable) -> list[dict]:
    """Long-format bias/MSE rows for panel plots (HTE level x EC size x EC law)."""
    rows = []
    for r in metrics.rows:
        spec = metrics.specs[(r.setting, r.ec)]
        for metric, value in (("bias", r.bias), ("mse", r.mse)):
            rows.append({
                "setting": r.setting, "estimand": r.estimand, "ec": r.ec, "hte_level": spec.phi1,
                "n2": spec.n2, "metric": metric, "value": value,
            })
    return rows


def emit_report(metrics: MetricsTable, path, figure_path=None, metadata: dict | None = None) -> None:
    """Write one CSV row per (setting, ec, estimand), plus optional long-format figure data."""
    if not metrics.rows:
        raise EmptyInput("metrics table is empty")
    _write(path, METRIC_COLUMNS, [asdict(r) for r in metrics.rows], metadata)
    if figure_path is not None:
        _write(figure_path, FIGURE_COLUMNS, figure_rows(metrics), metadata)


def read_metrics_csv(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(line for line in fh if not line.startswith("#")))
