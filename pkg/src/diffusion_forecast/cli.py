"""Command-line surface: simulate, build-basis, train, forecast, baseline,
evaluate, and the three packaged experiments."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import GaussianState, ensemble_forecast, iterated_local_linear_forecast, local_linear_forecast
from .basis import load_basis, save_basis
from .dataset import delay_embed, load_series, read_series_csv, write_series_csv
from .evaluation import ExperimentConfig, load_config, rmse_and_correlation
from .experiments import (
    lorenz_config,
    nino_config,
    run_lorenz_experiment,
    run_nino_experiment,
    run_torus_experiment,
    torus_config,
)
from .forecast import (
    DensityCoefficients,
    estimate_shift_operator,
    forecast_moments,
    load_operator,
    project_density,
    reconstruct_density,
    save_operator,
    evolve_coefficients,
    gaussian_density_values,
)
from .pipeline import fit_forecaster
from .simulators import lorenz_model, simulate_lorenz63, simulate_torus, torus_model


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except (ValueError, FileNotFoundError, RuntimeError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="diffusion-forecast",
        description="Nonparametric density forecasting on a data-adapted diffusion basis.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate training data from a built-in system")
    p.add_argument("system", choices=["torus", "lorenz63"])
    p.add_argument("--n-samples", type=int, default=8000)
    p.add_argument("--dt", type=float, default=0.1)
    p.add_argument("--substeps", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", default="runs/simulate")
    p.set_defaults(handler=_cmd_simulate)

    p = sub.add_parser("build-basis", help="tune kernels and build the diffusion basis")
    p.add_argument("--series", required=True, help="series CSV (written by simulate) or text file")
    p.add_argument("--format", default="csv",
                   choices=["csv", "single-column", "two-column-dated", "noaa-monthly-grid"])
    p.add_argument("--tau", type=float, default=1.0)
    p.add_argument("--lags", type=int, default=1)
    p.add_argument("--m", type=int, required=True, help="number of basis functions")
    p.add_argument("--k0", type=int, default=8)
    p.add_argument("--neighbor-cap", type=int, default=1024)
    p.add_argument("--stride", type=int, default=1)
    p.add_argument("--out-prefix", required=True)
    p.add_argument("--dump-tuning", action="store_true",
                   help="also write the (log eps, log T) sweep curves as CSV")
    p.set_defaults(handler=_cmd_build_basis)

    p = sub.add_parser("train", help="estimate the shift operator from a saved basis")
    p.add_argument("--basis-prefix", required=True)
    p.add_argument("--tau", type=float, default=None,
                   help="override the sampling interval stored with the basis")
    p.add_argument("--stride", type=int, default=1)
    p.add_argument("--out-prefix", required=True)
    p.set_defaults(handler=_cmd_train)

    p = sub.add_parser("forecast", help="evolve a Gaussian initial density and report moments")
    p.add_argument("--basis-prefix", required=True)
    p.add_argument("--operator-prefix", required=True)
    p.add_argument("--points", default=None,
                   help="training-points CSV (defaults to <basis-prefix>_points.csv)")
    p.add_argument("--mean", required=True, help="comma-separated initial mean")
    p.add_argument("--var", required=True,
                   help="initial variance (scalar or comma-separated diagonal)")
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--dump-density", action="store_true",
                   help="append the full density vector at each lead")
    p.set_defaults(handler=_cmd_forecast)

    p = sub.add_parser("baseline", help="reference forecasts from the training series")
    p.add_argument("--series", required=True)
    p.add_argument("--tau", type=float, default=1.0)
    p.add_argument("--method", required=True, choices=["local-linear", "iterated", "ensemble"])
    p.add_argument("--mean", required=True)
    p.add_argument("--var", required=True)
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--k", type=int, default=15)
    p.add_argument("--system", choices=["torus", "lorenz63"],
                   help="true model for the ensemble method")
    p.add_argument("--n-ens", type=int, default=10000)
    p.add_argument("--substeps", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=_cmd_baseline)

    p = sub.add_parser("evaluate", help="skill metrics from (lead, truth, forecast) rows")
    p.add_argument("--input", required=True,
                   help="CSV with columns lead,truth,forecast[,stdev]")
    p.add_argument("--out", required=True)
    p.set_defaults(handler=_cmd_evaluate)

    p = sub.add_parser("experiment", help="run a packaged experiment end to end")
    p.add_argument("name", choices=["torus", "lorenz63", "nino34"])
    p.add_argument("--config", default=None, help="flat key = value config file")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out-dir", default=None)
    p.add_argument("--paper-scale", action="store_true")
    p.add_argument("--data", default=None, help="Nino-3.4 data file")
    p.set_defaults(handler=_cmd_experiment)

    return parser


def _cmd_simulate(args) -> int:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {
        "system": args.system, "n_samples": args.n_samples, "dt": args.dt,
        "substeps": args.substeps, "seed": args.seed, "tau": args.dt,
    }
    if args.system == "torus":
        intrinsic, embedded = simulate_torus(args.n_samples, args.dt, args.substeps, args.seed)
        write_series_csv(intrinsic, out / "torus_intrinsic.csv")
        write_series_csv(embedded, out / "torus_embedded.csv")
        manifest["files"] = ["torus_intrinsic.csv", "torus_embedded.csv"]
    else:
        ts = simulate_lorenz63(args.n_samples, args.dt, args.seed)
        write_series_csv(ts, out / "lorenz63.csv")
        manifest["files"] = ["lorenz63.csv"]
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    print(f"wrote {', '.join(manifest['files'])} to {out}")
    return 0


def _load_series_arg(path: str, fmt: str, tau: float):
    if fmt == "csv":
        return read_series_csv(path, tau=tau)
    return load_series(path, fmt, tau=tau)


def _cmd_build_basis(args) -> int:
    ts = _load_series_arg(args.series, args.format, args.tau)
    if args.lags > 1:
        ts = delay_embed(ts, args.lags)
    fit = fit_forecaster(ts, args.m, k0=args.k0, neighbor_cap=args.neighbor_cap,
                         stride=args.stride)
    prefix = Path(args.out_prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    metadata = {
        "tau": ts.tau,
        "source": str(args.series),
        "lags": args.lags,
        "kde": {"eps": fit.kde_tuning.eps_star, "d": fit.kde_tuning.d_est,
                "boundary_warning": fit.kde_tuning.boundary_warning},
        "vb": {"eps": fit.vb_tuning.eps_star, "d": fit.vb_tuning.d_est,
               "boundary_warning": fit.vb_tuning.boundary_warning},
    }
    bin_path, json_path = save_basis(fit.basis, prefix, metadata=metadata)
    # the binary container holds only basis data; keep the (possibly embedded)
    # training points next to it so `forecast` can evaluate initial densities
    points_path = prefix.parent / f"{prefix.name}_points.csv"
    write_series_csv(ts, points_path)
    if args.dump_tuning:
        for name, tuning in (("kde", fit.kde_tuning), ("vb", fit.vb_tuning)):
            curve_path = prefix.parent / f"{prefix.name}_tuning_{name}.csv"
            with curve_path.open("w") as fh:
                fh.write("log_eps,log_t\n")
                for log_eps, log_t in tuning.curve:
                    fh.write(f"{log_eps!r},{log_t!r}\n")
    print(f"wrote {bin_path} and {json_path}")
    return 0


def _cmd_train(args) -> int:
    basis = load_basis(args.basis_prefix)
    tau = args.tau
    if tau is None:
        sidecar = json.loads(Path(args.basis_prefix).with_suffix(".json").read_text())
        tau = float(sidecar.get("tuning", {}).get("tau", 1.0))
    op = estimate_shift_operator(basis, tau, stride=args.stride)
    prefix = Path(args.out_prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    mat_path, meta_path = save_operator(op, prefix)
    print(f"wrote {mat_path} and {meta_path}")
    return 0


def _parse_vector(text: str) -> np.ndarray:
    return np.array([float(tok) for tok in text.split(",")])


def _cmd_forecast(args) -> int:
    basis = load_basis(args.basis_prefix)
    op = load_operator(args.operator_prefix)
    mean = _parse_vector(args.mean)
    var = _parse_vector(args.var)
    if var.size == 1:
        var = np.full(mean.size, var[0])
    points_path = args.points or (
        Path(args.basis_prefix).parent / f"{Path(args.basis_prefix).name}_points.csv"
    )
    observables = read_series_csv(points_path, tau=op.tau).points
    if observables.shape[0] != basis.n_points:
        raise ValueError("training-points file does not match the basis size")
    if observables.shape[1] != mean.size:
        raise ValueError("initial mean dimension does not match the training points")
    p0 = gaussian_density_values(observables, mean, var)
    coeffs = project_density(p0, basis)
    rows = []
    vec = coeffs.c
    density_cols = []
    for lead in range(args.steps + 1):
        if lead > 0:
            vec = evolve_coefficients(vec, op, 1)
        m, v = forecast_moments(vec, basis, observables)
        row = [lead * op.tau, *m.tolist(), *np.sqrt(v).tolist()]
        rows.append(row)
        if args.dump_density:
            density_cols.append(reconstruct_density(DensityCoefficients(vec), basis))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    dim = mean.size
    header = ["lead_time"] + [f"mean_x{j}" for j in range(dim)] + [f"stdev_x{j}" for j in range(dim)]
    with out.open("w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(repr(float(x)) for x in row) + "\n")
    if args.dump_density:
        dens_path = out.with_suffix(".density.csv")
        with dens_path.open("w") as fh:
            fh.write(",".join(f"lead{j}" for j in range(len(density_cols))) + "\n")
            for i in range(density_cols[0].shape[0]):
                fh.write(",".join(repr(float(col[i])) for col in density_cols) + "\n")
    print(f"wrote {out}")
    return 0


def _cmd_baseline(args) -> int:
    ts = read_series_csv(args.series, tau=args.tau)
    mean = _parse_vector(args.mean)
    var = _parse_vector(args.var)
    if var.size == 1:
        var = np.full(mean.size, var[0])
    init = GaussianState(mean=mean, cov=np.diag(var))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    header = ["lead_time"] + [f"mean_x{j}" for j in range(mean.size)] \
        + [f"stdev_x{j}" for j in range(mean.size)]
    rows = []
    if args.method == "ensemble":
        if not args.system:
            raise ValueError("--system is required for the ensemble method")
        model = torus_model() if args.system == "torus" else lorenz_model()
        mf = ensemble_forecast(model, init, args.n_ens, args.steps, args.seed,
                               dt_sample=args.tau, substeps=args.substeps)
        for i, t in enumerate(mf.lead_times):
            rows.append([t, *mf.mean[i].tolist(), *np.sqrt(mf.variance[i]).tolist()])
    else:
        fn = local_linear_forecast if args.method == "local-linear" else iterated_local_linear_forecast
        for lead in range(args.steps + 1):
            state = fn(ts, init, lead, k=args.k)
            rows.append([lead * args.tau, *state.mean.tolist(),
                         *np.sqrt(np.diag(state.cov)).tolist()])
    with out.open("w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(repr(float(x)) for x in row) + "\n")
    print(f"wrote {out}")
    return 0


def _cmd_evaluate(args) -> int:
    data = {}
    with Path(args.input).open() as fh:
        header = fh.readline().strip().split(",")
        if header[:3] != ["lead", "truth", "forecast"]:
            raise ValueError("expected header lead,truth,forecast[,stdev]")
        has_stdev = len(header) > 3 and header[3] == "stdev"
        for line in fh:
            line = line.strip()
            if not line:
                continue
            parts = [float(tok) for tok in line.split(",")]
            entry = data.setdefault(parts[0], ([], [], []))
            entry[0].append(parts[1])
            entry[1].append(parts[2])
            if has_stdev:
                entry[2].append(parts[3])
    leads = sorted(data)
    truth = [np.array(data[ld][0]) for ld in leads]
    fc = [np.array(data[ld][1]) for ld in leads]
    stdev = [np.array(data[ld][2]) for ld in leads] if has_stdev else None
    report = rmse_and_correlation(truth, fc, np.array(leads), forecast_stdevs_per_lead=stdev)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w") as fh:
        fh.write("lead,rmse,correlation,mean_forecast_stdev,climatological_stdev,degenerate\n")
        for i, ld in enumerate(leads):
            fh.write(",".join([
                repr(float(ld)), repr(float(report.rmse[i])), repr(float(report.correlation[i])),
                repr(float(report.mean_forecast_stdev[i])), repr(report.climatological_stdev),
                str(int(report.degenerate[i])),
            ]) + "\n")
    print(f"wrote {out}")
    return 0


def _cmd_experiment(args) -> int:
    factories = {"torus": torus_config, "lorenz63": lorenz_config, "nino34": nino_config}
    if args.name == "nino34":
        config = nino_config(data_path=args.data or "", paper_scale=args.paper_scale)
    else:
        config = factories[args.name](paper_scale=args.paper_scale)
    if args.config:
        config = load_config(args.config, base=config)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out_dir is not None:
        overrides["out_dir"] = args.out_dir
    if args.data is not None:
        overrides["data_path"] = args.data
    if overrides:
        config = replace(config, **overrides)
    if args.name == "torus":
        result = run_torus_experiment(config)
        print(f"wrote {result.csv_path}")
    elif args.name == "lorenz63":
        result = run_lorenz_experiment(config)
        for run in result.runs.values():
            print(f"wrote {run.csv_path}")
    else:
        result = run_nino_experiment(config)
        print(f"wrote {result.skill_csv_path} and {result.lead14_csv_path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
