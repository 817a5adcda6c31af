"""Command-line interface: ``ecbalance {estimate,diagnose,simulate,oracle,generate}``.

Exit codes: 0 ok, 2 data error, 3 model error, 4 I/O error.

Every CSV output starts with ``#`` metadata lines (tool version, the
output-determining configuration, master seed, RNG algorithm). Settings
that cannot change the numbers, such as worker count, output paths and
wall-clock time, go to a ``<output>.meta.json`` sidecar instead so repeated
runs produce byte-identical CSVs.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .balancing import EstimandKind, weighted_density_export, weighted_mean_sd, weights_for
from .core import ingest_csv, read_numeric_column, write_csv
from .errors import DataError, EcBalanceError, EmptyGroup, IoError
from .estimators import SUPPORTED, estimate
from .harness import emit_report, run_replications
from .oracle import DEFAULT_N_MC, oracle_table, read_oracle_csv, worker_count, write_oracle_csv
from .psmodel import fit_propensity
from .simgen import RNG_ALGORITHM, enumerate_scenarios, generate, parse_id_list, replicate_seed

PI_HIST_BINS = 20


def _jsonable(obj):
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return _jsonable(obj.item())
    return obj


def _write_json(path, payload):
    try:
        Path(path).write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=False) + "\n", encoding="utf-8")
    except OSError as exc:
        raise IoError(str(exc)) from exc


def _write_rows(path, columns, rows, metadata):
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            for key, value in metadata.items():
                fh.write(f"# {key}: {value}\n")
            w = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n")
            w.writeheader()
            for row in rows:
                w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
    except OSError as exc:
        raise IoError(str(exc)) from exc


def _metadata(command, config, seed=None):
    meta = {"tool": f"ecbalance {__version__}", "command": command,
            "config": json.dumps(_jsonable(config), sort_keys=True)}
    if seed is not None:
        meta["master_seed"] = seed
        meta["rng"] = RNG_ALGORITHM
    return meta


def _sidecar(path, meta, args, started):
    _write_json(f"{path}.meta.json", {
        **meta,
        "config": json.loads(meta["config"]),
        "invocation": {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items() if k != "func"},
        "workers": worker_count(getattr(args, "workers", None)),
        "started_unix": started,
        "elapsed_seconds": time.time() - started,
    })


def _kinds(values, default=SUPPORTED):
    if not values:
        return list(default)
    out = []
    for v in values:
        for part in v.split(","):
            if part.strip().lower() == "all":
                out.extend(k for k in default if k not in out)
                continue
            k = EstimandKind.parse(part.strip())
            if k not in out:
                out.append(k)
    return out


def _read(args):
    mapping = {"y": args.y_col, "a": args.a_col, "z": args.z_col}
    covs = [c.strip() for c in args.covariates.split(",")] if args.covariates else None
    exclude = [args.pi_column] if args.pi_column else []
    return ingest_csv(args.data, mapping, covs, exclude)


def _propensity(args, data):
    if args.pi_column:
        pi = read_numeric_column(args.data, args.pi_column)
        return pi, {"source": f"column {args.pi_column}"}
    terms = [t.strip() for t in args.terms.split(",") if t.strip()] if args.terms else []
    fit = fit_propensity(data, extra_terms=terms, ridge=args.ridge)
    return fit.pi_hat, {"source": "logistic regression", **fit.to_dict()}


def _data_config(args):
    return {
        "data": str(args.data), "y_col": args.y_col, "a_col": args.a_col, "z_col": args.z_col,
        "covariates": args.covariates, "pi_column": args.pi_column, "terms": args.terms, "ridge": args.ridge,
    }


def _pi_histogram(pi, z, bins=PI_HIST_BINS):
    edges = np.linspace(0.0, 1.0, bins + 1)
    rct, _ = np.histogram(pi[z == 1], bins=edges)
    ec, _ = np.histogram(pi[z == 0], bins=edges)
    return [
        {"bin_lo": float(edges[i]), "bin_hi": float(edges[i + 1]), "count_rct": int(rct[i]), "count_ec": int(ec[i])}
        for i in range(bins)
    ]


def cmd_estimate(args):
    started = time.time()
    data = _read(args)
    pi, fit_info = _propensity(args, data)
    kinds = _kinds(args.estimand)
    for k in kinds:
        if k not in SUPPORTED:
            raise DataError(f"no estimator for {k.value}")
    results = [estimate(data, k, pi) for k in kinds]
    config = {**_data_config(args), "estimands": [k.value for k in kinds]}
    meta = _metadata("estimate", config)
    out = Path(args.out)
    rows = [r.to_dict() for r in results]
    columns = list(rows[0])
    _write_rows(f"{out}.csv", columns, rows, meta)
    hist = _pi_histogram(pi, data.z)
    _write_rows(f"{out}_pi_hist.csv", list(hist[0]), hist, meta)
    _write_json(f"{out}.json", {
        **meta,
        "config": config,
        "dataset": {"n11": data.n11, "n10": data.n10, "n2": data.n2, "p": data.p, "lambda": data.lam,
                    "covariates": list(data.covariate_names)},
        "propensity": fit_info,
        "estimates": rows,
        "pi_histogram": hist,
        "elapsed_seconds": time.time() - started,
    })
    for r in results:
        print(f"{r.kind.value}\t{r.tau_hat:.6g}")
    return 0


def balance_rows(data, pi, kinds):
    """Weighted and unweighted covariate summaries per estimand.

    The standardized mean difference uses the *unweighted* pooled SD in the
    denominator so it is on the same scale before and after weighting.
    """
    rct = data.z == 1
    rows = []
    for j, name in enumerate(data.covariate_names):
        x = data.X[:, j]
        sd_pool = math.sqrt(0.5 * (np.var(x[rct], ddof=1) + np.var(x[~rct], ddof=1)))
        plans = [("unweighted", np.ones(rct.sum()), np.ones((~rct).sum()))]
        for k in kinds:
            ws = weights_for(k, pi, data)
            plans.append((k.value, ws.w1[rct], ws.w0[~rct]))
        for label, w_rct, w_ec in plans:
            m1, s1 = weighted_mean_sd(x[rct], w_rct)
            m0, s0 = weighted_mean_sd(x[~rct], w_ec)
            smd = (m1 - m0) / sd_pool if sd_pool > 0 else (0.0 if m1 == m0 else math.inf)
            rows.append({"covariate": name, "weighting": label, "mean_rct": m1, "mean_ec": m0,
                         "sd_rct": s1, "sd_ec": s0, "smd": smd})
    return rows


def cmd_diagnose(args):
    started = time.time()
    kinds = _kinds(args.estimand)
    data = _read(args)
    if data.n2 == 0:
        raise EmptyGroup("no external-control subjects (z = 0); nothing to balance against")
    if data.n2 < 2:
        raise EmptyGroup("the external-control group needs at least two subjects")
    pi, fit_info = _propensity(args, data)
    config = {**_data_config(args), "estimands": [k.value for k in kinds], "bins": args.bins,
              "grid_points": args.grid_points}
    meta = _metadata("diagnose", config)
    out = Path(args.out)

    bal = balance_rows(data, pi, kinds)
    _write_rows(f"{out}_balance.csv", list(bal[0]), bal, meta)
    dens = []
    for k in kinds:
        ws = weights_for(k, pi, data)
        for j in range(data.p):
            dens += weighted_density_export(data, ws, j, bins=args.bins, n_points=args.grid_points)
    _write_rows(f"{out}_density.csv",
                ["covariate", "group", "estimand", "value", "density_raw", "density_weighted"], dens, meta)
    diag = []
    for k in kinds:
        ws = weights_for(k, pi, data)
        diag.append({"estimand": k.value, "n_extreme": ws.n_extreme, **{f"ess_{g}": v for g, v in ws.ess_by_group.items()}})
    _write_json(f"{out}.json", {**meta, "config": config, "propensity": fit_info, "weights": diag,
                                "balance": bal, "elapsed_seconds": time.time() - started})
    for r in bal:
        print(f"{r['covariate']}\t{r['weighting']}\tsmd={r['smd']:.4f}")
    return 0


def _scenarios(args):
    return enumerate_scenarios(parse_id_list(args.settings), parse_id_list(args.ecs), args.scale_reading)


def cmd_oracle(args):
    started = time.time()
    specs = _scenarios(args)
    table = oracle_table(specs, args.n_mc, args.seed, args.workers)
    config = {"settings": args.settings, "ecs": args.ecs, "n_mc": args.n_mc, "scale_reading": args.scale_reading}
    meta = _metadata("oracle", config, args.seed)
    write_oracle_csv(table, args.out, meta)
    _sidecar(args.out, meta, args, started)
    print(f"wrote {len(table)} scenarios to {args.out}")
    return 0


def cmd_simulate(args):
    started = time.time()
    specs = _scenarios(args)
    if args.oracle:
        truth = read_oracle_csv(args.oracle, args.scale_reading)
        oracle_src = f"file {args.oracle}"
    else:
        truth = oracle_table(specs, args.n_mc, args.seed, args.workers)
        oracle_src = f"computed n_mc={args.n_mc}"
    metrics = run_replications(specs, args.b, args.seed, truth, args.workers)
    config = {"settings": args.settings, "ecs": args.ecs, "b": args.b, "scale_reading": args.scale_reading,
              "oracle": oracle_src}
    meta = _metadata("simulate", config, args.seed)
    emit_report(metrics, args.out, args.figure_data, meta)
    _sidecar(args.out, meta, args, started)
    print(f"wrote {len(metrics)} metric rows to {args.out}")
    return 0


def cmd_generate(args):
    specs = _scenarios(args)
    outdir = Path(args.out_dir)
    try:
        outdir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoError(str(exc)) from exc
    for spec in specs:
        for rep in range(args.replicates):
            seed = replicate_seed(args.seed, spec.setting_id, spec.ec_id, rep)
            data = generate(spec, seed)
            meta = _metadata("generate", {"setting": spec.setting_id, "ec": spec.ec_id, "replicate": rep,
                                          "scale_reading": args.scale_reading, "replicate_seed": seed}, args.seed)
            write_csv(data, outdir / f"setting{spec.setting_id:02d}_ec{spec.ec_id}_rep{rep:04d}.csv", metadata=meta)
    print(f"wrote {len(specs) * args.replicates} datasets to {outdir}")
    return 0


def _add_data_args(p):
    p.add_argument("data", type=Path, help="input CSV")
    p.add_argument("--out", required=True, help="output path prefix")
    p.add_argument("--y-col", default="y")
    p.add_argument("--a-col", default="a")
    p.add_argument("--z-col", default="z")
    p.add_argument("--covariates", help="comma-separated covariate columns (default: all others)")
    p.add_argument("--pi-column", help="use this column as the propensity score instead of fitting")
    p.add_argument("--estimand", action="append", help="ati, att, ato (repeatable or comma-separated; default all)")
    p.add_argument("--terms", help="extra propensity terms, e.g. 'x2^2,x1:x2'")
    p.add_argument("--ridge", type=float, default=0.0, help="ridge penalty on standardized slopes (default off)")


def _add_grid_args(p, out_required=True):
    p.add_argument("--settings", default="1-18")
    p.add_argument("--ecs", default="1-8")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--scale-reading", choices=("variance", "sd"), default="variance",
                   help="how to read the 1.5 in N(mu, 1.5) for EC5-EC8")
    p.add_argument("--workers", type=int, default=None, help="worker processes (capped by ECBALANCE_THREADS)")


def build_parser():
    parser = argparse.ArgumentParser(prog="ecbalance", description="Balancing-weight estimators for RCTs augmented with external controls.")
    parser.add_argument("--version", action="version", version=f"ecbalance {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("estimate", help="fit the source propensity score and estimate ATI/ATT/ATO")
    _add_data_args(p)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("diagnose", help="covariate balance, ESS and weighted densities")
    _add_data_args(p)
    p.add_argument("--bins", type=int, default=None, help="histogram bins instead of a KDE")
    p.add_argument("--grid-points", type=int, default=200)
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("simulate", help="replicated simulation: bias and MSE per scenario")
    _add_grid_args(p)
    p.add_argument("--b", type=int, default=200, help="replicates per scenario")
    p.add_argument("--out", required=True)
    p.add_argument("--oracle", help="true-estimand CSV from the oracle subcommand")
    p.add_argument("--n-mc", type=int, default=DEFAULT_N_MC, help="oracle draws when --oracle is absent")
    p.add_argument("--figure-data", help="long-format bias/MSE CSV for plotting")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("oracle", help="true estimands by Monte Carlo integration")
    _add_grid_args(p)
    p.add_argument("--n-mc", type=int, default=DEFAULT_N_MC)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("generate", help="dump simulated datasets to CSV")
    _add_grid_args(p)
    p.add_argument("--replicates", type=int, default=1)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_generate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except EcBalanceError as exc:
        print(f"ecbalance: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"ecbalance: {exc}", file=sys.stderr)
        return IoError.exit_code


if __name__ == "__main__":
    sys.exit(main())
