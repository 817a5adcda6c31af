"""True source propensity scores and true estimand values for simulation scenarios.

This module is deliberately independent of the estimation path: it never
fits a model or touches :mod:`ecbalance.estimators`. True estimands are
computed by Monte Carlo integration over the integrated population

    tau_k ~= sum_i h_k(x_i) tau(x_i) / sum_i h_k(x_i),

drawing ``n_mc`` RCT covariates and ``round((1 - lam) / lam * n_mc)`` EC
covariates so the pooled draw has RCT share ``lam``. The CATE is the
linear one used by the simulation design, tau(x) = beta_trt + phi1 x1 + phi2 x2.
"""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .balancing import EstimandKind, tilting
from .errors import InvalidLambda, IoError, MissingColumn
from .estimators import PopulationDraw
from .simgen import ScenarioSpec, scenario

DEFAULT_N_MC = 10**6
CHUNK = 1 << 18
KINDS = (EstimandKind.ATI, EstimandKind.ATT, EstimandKind.ATO, EstimandKind.ATEC)
CSV_COLUMNS = ("setting", "ec", "ati", "att", "ato", "atec", "se_ati", "se_att", "se_ato", "se_atec")


def _log_density_ratio(spec: ScenarioSpec, x2):
    """log f1(x) - log f2(x). The X1 factors are both Bernoulli(0.5) and cancel."""
    mu, sd = spec.ec_x2_mean, spec.ec_x2_sd
    return -0.5 * x2 * x2 + 0.5 * ((x2 - mu) / sd) ** 2 + math.log(sd)


def true_pi(spec: ScenarioSpec, x, lam: float | None = None):
    """Pr(Z=1 | X=x) = f1 lam / (f1 lam + f2 (1 - lam)) for one ``(x1, x2)`` or an ``(n, 2)`` array."""
    lam = spec.lam if lam is None else lam
    x = np.asarray(x, dtype=float)
    x2 = x[..., 1]
    log_odds = math.log(lam) - math.log1p(-lam) + _log_density_ratio(spec, x2)
    out = expit(log_odds)
    return float(out) if np.ndim(out) == 0 else out


def cate(spec: ScenarioSpec, x1, x2):
    return spec.beta_trt + spec.phi1 * x1 + spec.phi2 * x2


@dataclass(frozen=True)
class TrueEstimands:
    spec: ScenarioSpec
    n_mc: int
    tau_ati: float
    tau_att: float
    tau_ato: float
    tau_atec: float
    mc_standard_errors: dict = field(default_factory=dict)
    lam: float = float("nan")

    def value(self, kind) -> float:
        kind = EstimandKind.parse(kind)
        return getattr(self, f"tau_{kind.value.lower()}")

    def se(self, kind) -> float:
        return self.mc_standard_errors[EstimandKind.parse(kind).value]

    def csv_row(self) -> dict:
        row = {"setting": self.spec.setting_id, "ec": self.spec.ec_id}
        for k in KINDS:
            row[k.value.lower()] = self.value(k)
        for k in KINDS:
            row[f"se_{k.value.lower()}"] = self.se(k)
        return row


def _substream(seed, spec, source, chunk):
    ss = np.random.SeedSequence(int(seed), spawn_key=(spec.setting_id, spec.ec_id, source, chunk))
    return np.random.Generator(np.random.PCG64(ss))


def true_estimand_custom_lambda(spec: ScenarioSpec, lambda_override: float, n_mc: int = DEFAULT_N_MC,
                                seed: int = 0) -> TrueEstimands:
    """True estimands with the integrated population mixed at ``lambda_override``."""
    lam = float(lambda_override)
    if not 0.0 < lam < 1.0:
        raise InvalidLambda(f"lambda must lie in (0, 1), got {lambda_override!r}")
    n_mc = int(n_mc)

    if spec.phi1 == 0 and spec.phi2 == 0:
        # constant CATE: every tilted average equals beta_trt with no MC error
        c = float(spec.beta_trt)
        return TrueEstimands(spec, n_mc, c, c, c, c, {k.value: 0.0 for k in KINDS}, lam)

    n_ec = int(round((1.0 - lam) / lam * n_mc))
    # per kind: sum h, sum h tau, sum h^2, sum h^2 tau, sum h^2 tau^2
    acc = np.zeros((len(KINDS), 5))
    for source, total, mu, sd in ((0, n_mc, 0.0, 1.0), (1, n_ec, spec.ec_x2_mean, spec.ec_x2_sd)):
        for chunk, start in enumerate(range(0, total, CHUNK)):
            m = min(CHUNK, total - start)
            rng = _substream(seed, spec, source, chunk)
            x1 = rng.integers(0, 2, m).astype(float)
            x2 = rng.normal(mu, sd, m)
            pi = expit(math.log(lam) - math.log1p(-lam) + _log_density_ratio(spec, x2))
            tau = cate(spec, x1, x2)
            for i, k in enumerate(KINDS):
                h = tilting(k, pi)
                h2 = h * h
                acc[i] += (h.sum(), (h * tau).sum(), h2.sum(), (h2 * tau).sum(), (h2 * tau * tau).sum())

    values, ses = {}, {}
    for i, k in enumerate(KINDS):
        sh, sht, sh2, sh2t, sh2t2 = acc[i]
        r = sht / sh
        var = max(sh2t2 - 2.0 * r * sh2t + r * r * sh2, 0.0)
        values[k.value] = float(r)
        ses[k.value] = float(math.sqrt(var) / sh)
    return TrueEstimands(spec, n_mc, values["ATI"], values["ATT"], values["ATO"], values["ATEC"], ses, lam)


def true_estimands(spec: ScenarioSpec, n_mc: int = DEFAULT_N_MC, seed: int = 0) -> TrueEstimands:
    return true_estimand_custom_lambda(spec, spec.lam, n_mc, seed)


def _oracle_job(args):
    spec, n_mc, seed = args
    return true_estimands(spec, n_mc, seed)


def worker_count(requested: int | None = None) -> int:
    """Requested workers (default: all CPUs), capped by ``ECBALANCE_THREADS``."""
    n = requested if requested else (os.cpu_count() or 1)
    cap = os.environ.get("ECBALANCE_THREADS")
    if cap:
        n = min(n, max(1, int(cap)))
    return max(1, int(n))


def oracle_table(specs, n_mc: int = DEFAULT_N_MC, seed: int = 0, workers: int | None = None) -> dict:
    """``{(setting, ec): TrueEstimands}`` for every spec, in input order."""
    specs = list(specs)
    jobs = [(s, n_mc, seed) for s in specs]
    workers = min(worker_count(workers), len(jobs))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_oracle_job, jobs))
    else:
        results = [_oracle_job(j) for j in jobs]
    return {(s.setting_id, s.ec_id): r for s, r in zip(specs, results)}


def write_oracle_csv(table: dict, path, metadata: dict | None = None) -> None:
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            for key, value in (metadata or {}).items():
                fh.write(f"# {key}: {value}\n")
            w = csv.DictWriter(fh, fieldnames=CSV_COLUMNS, lineterminator="\n")
            w.writeheader()
            for key in sorted(table):
                row = table[key].csv_row()
                w.writerow({k: (repr(float(v)) if k not in ("setting", "ec") else v) for k, v in row.items()})
    except OSError as exc:
        raise IoError(str(exc)) from exc


def read_oracle_csv(path, scale_reading: str = "variance") -> dict:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(line for line in fh if not line.startswith("#")))
    except OSError as exc:
        raise IoError(str(exc)) from exc
    table = {}
    for row in rows:
        missing = [c for c in CSV_COLUMNS if c not in row]
        if missing:
            raise MissingColumn(f"oracle CSV lacks columns {missing}")
        spec = scenario(int(row["setting"]), int(row["ec"]), scale_reading)
        ses = {k.value: float(row[f"se_{k.value.lower()}"]) for k in KINDS}
        table[(spec.setting_id, spec.ec_id)] = TrueEstimands(
            spec, 0, float(row["ati"]), float(row["att"]), float(row["ato"]), float(row["atec"]), ses, spec.lam
        )
    return table


class ScenarioPopulation:
    """Draws from the integrated population of a scenario, with the true propensity score.

    Source and treatment counts are fixed (proportional allocation), covariates iid.
    """

    def __init__(self, spec: ScenarioSpec, lam: float | None = None):
        self.spec = spec
        self.lam = spec.lam if lam is None else float(lam)
        self.p_treat = spec.n11 / spec.n1

    def draw(self, n: int, rng: np.random.Generator) -> PopulationDraw:
        n_rct = int(round(self.lam * n))
        n_ec = n - n_rct
        n_t = int(round(self.p_treat * n_rct))
        x1 = rng.integers(0, 2, n).astype(float)
        x2 = np.concatenate([rng.normal(0.0, 1.0, n_rct),
                             rng.normal(self.spec.ec_x2_mean, self.spec.ec_x2_sd, n_ec)])
        z = np.concatenate([np.ones(n_rct, dtype=np.int8), np.zeros(n_ec, dtype=np.int8)])
        a = np.zeros(n, dtype=np.int8)
        a[:n_t] = 1
        X = np.column_stack([x1, x2])
        return PopulationDraw(a=a, z=z, X=X, pi=true_pi(self.spec, X, self.lam))


def population_sampler(spec: ScenarioSpec, lam: float | None = None) -> ScenarioPopulation:
    return ScenarioPopulation(spec, lam)


def closed_form_att(spec: ScenarioSpec) -> float:
    """CATE averaged over the RCT covariate law (E[X1] = 0.5, E[X2] = 0)."""
    return spec.beta_trt + 0.5 * spec.phi1


def closed_form_ati(spec: ScenarioSpec, lam: float | None = None) -> float:
    """CATE at the mixture covariate means (valid because the CATE is linear)."""
    lam = spec.lam if lam is None else lam
    return spec.beta_trt + 0.5 * spec.phi1 + spec.phi2 * (1.0 - lam) * spec.ec_x2_mean

