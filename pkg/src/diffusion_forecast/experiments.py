"""Drivers for the three reference experiments: the torus SDE moment
validation, the Lorenz-63 forecast-skill comparison, and the Nino-3.4 index
forecast."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np
from scipy.spatial.distance import cdist

from .baselines import GaussianState, _affine_least_squares, ensemble_forecast
from .dataset import TimeSeries, delay_embed, load_monthly_series, split, _smallest_k
from .evaluation import ExperimentConfig, SkillReport, rmse_and_correlation
from .forecast import (
    MomentForecast,
    evolve_coefficients,
    forecast_moments,
    gaussian_density_values,
    project_density,
)
from .pipeline import FitResult, fit_forecaster
from .simulators import TWO_PI, lorenz_model, simulate_lorenz63, simulate_torus, torus_embed, torus_model


def torus_config(paper_scale: bool = False, seed: int = 0) -> ExperimentConfig:
    cfg = ExperimentConfig(experiment="torus", seed=seed, paper_scale=paper_scale)
    if paper_scale:
        cfg = replace(cfg, n_samples=20000, n_basis=1000, n_ens=50000)
    return cfg


def lorenz_config(paper_scale: bool = False, seed: int = 0) -> ExperimentConfig:
    cfg = ExperimentConfig(
        experiment="lorenz63", seed=seed, paper_scale=paper_scale,
        n_samples=6000, n_basis=1000, n_verify=500, lead_steps=80,
        init_variance=0.01, n_ens=200,
    )
    if paper_scale:
        cfg = replace(cfg, n_samples=10000, n_basis=4500, n_verify=5000,
                      lead_steps=100, n_ens=50000)
    return cfg


def nino_config(data_path: str = "", paper_scale: bool = False, seed: int = 0) -> ExperimentConfig:
    # The published configuration is already desk sized; paper_scale is a no-op.
    return ExperimentConfig(
        experiment="nino34", seed=seed, paper_scale=paper_scale,
        n_samples=600, n_basis=80, n_verify=2, lead_steps=24, lags=5,
        init_variance=0.01, neighbor_cap=600, data_path=data_path,
        with_ensemble=False,
    )


@dataclass(frozen=True)
class TorusExperimentResult:
    lead_times: np.ndarray
    diffusion: MomentForecast
    ensemble: MomentForecast
    clim_stdev: np.ndarray
    fit: FitResult
    csv_path: Path
    manifest_path: Path


@dataclass(frozen=True)
class LorenzRun:
    dt: float
    lead_times: np.ndarray
    rmse: dict
    spread: dict
    clim_stdev: float
    fit: FitResult
    csv_path: Path


@dataclass(frozen=True)
class LorenzExperimentResult:
    runs: dict
    manifest_path: Path


@dataclass(frozen=True)
class NinoExperimentResult:
    skill: SkillReport
    lead14_truth: np.ndarray
    lead14_mean: np.ndarray
    lead14_stdev: np.ndarray
    fit: FitResult
    skill_csv_path: Path
    lead14_csv_path: Path
    manifest_path: Path


def run_torus_experiment(config: ExperimentConfig, out_dir=None) -> TorusExperimentResult:
    """Validate the first two forecast moments of the embedded fast (x) and
    slow (z) coordinates against a true-model ensemble."""
    if config.experiment != "torus":
        raise ValueError("config.experiment must be 'torus'")
    out = _prepare_out_dir(out_dir or config.out_dir, "torus")
    seeds = np.random.SeedSequence(config.seed).spawn(3)  # sim, p0 mean, ensemble

    intrinsic, embedded = simulate_torus(
        n_samples=config.n_samples, dt_sample=config.dt,
        substeps=config.substeps, seed=seeds[0],
    )
    fit = fit_forecaster(embedded, config.n_basis, k0=config.k0,
                         neighbor_cap=config.neighbor_cap, stride=config.stride)

    p0_mean = np.random.default_rng(seeds[1]).uniform(0.0, TWO_PI, size=2)
    wrap = np.array([TWO_PI, TWO_PI])
    p0_angles = gaussian_density_values(intrinsic.points, p0_mean,
                                        config.init_variance, wrap=wrap)
    # the basis lives on the embedded manifold, so express the initial
    # density against its volume form: dV = (2 + sin(theta)) dtheta dphi
    p0_vals = p0_angles / (2.0 + np.sin(intrinsic.points[:, 0]))
    coeffs = project_density(p0_vals, fit.basis)

    observables = embedded.points[:, [0, 2]]
    n_leads = config.lead_steps + 1
    diff_mean = np.empty((n_leads, 2))
    diff_var = np.empty((n_leads, 2))
    vec = coeffs.c
    for lead in range(n_leads):
        if lead > 0:
            vec = evolve_coefficients(vec, fit.operator, 1)
        diff_mean[lead], diff_var[lead] = forecast_moments(vec, fit.basis, observables)
    lead_times = np.arange(n_leads) * config.dt
    diffusion = MomentForecast(mean=diff_mean, variance=diff_var, lead_times=lead_times)

    ens = ensemble_forecast(
        torus_model(),
        GaussianState.isotropic(p0_mean, config.init_variance),
        n_ens=config.n_ens, lead_steps=config.lead_steps,
        rng_seed=seeds[2], dt_sample=config.dt, substeps=config.substeps,
        observable=lambda s: torus_embed(s)[:, [0, 2]],
    )

    clim = observables.std(axis=0)
    csv_path = out / "torus_moments.csv"
    header = ["lead_time",
              "diff_mean_x", "diff_stdev_x", "diff_mean_z", "diff_stdev_z",
              "ens_mean_x", "ens_stdev_x", "ens_mean_z", "ens_stdev_z"]
    rows = np.column_stack([
        lead_times,
        diff_mean[:, 0], np.sqrt(diff_var[:, 0]), diff_mean[:, 1], np.sqrt(diff_var[:, 1]),
        ens.mean[:, 0], np.sqrt(ens.variance[:, 0]), ens.mean[:, 1], np.sqrt(ens.variance[:, 1]),
    ])
    _write_csv(csv_path, header, rows)
    manifest_path = _write_manifest(out, config, {
        "p0_mean": list(p0_mean),
        "clim_stdev": list(clim),
        "kde_eps": fit.kde_tuning.eps_star, "kde_d": fit.kde_tuning.d_est,
        "vb_eps": fit.vb_tuning.eps_star, "vb_d": fit.vb_tuning.d_est,
    })
    return TorusExperimentResult(
        lead_times=lead_times, diffusion=diffusion, ensemble=ens,
        clim_stdev=clim, fit=fit, csv_path=csv_path, manifest_path=manifest_path,
    )


def run_lorenz_experiment(config: ExperimentConfig, out_dir=None) -> LorenzExperimentResult:
    """Compare diffusion, local-linear, iterated local-linear, and (optionally)
    true-model ensemble forecasts on Lorenz-63 over a ladder of leads."""
    if config.experiment != "lorenz63":
        raise ValueError("config.experiment must be 'lorenz63'")
    out = _prepare_out_dir(out_dir or config.out_dir, "lorenz63")
    dts = (0.1, 0.5) if config.paper_scale else (config.dt,)
    runs = {}
    for dt in dts:
        runs[dt] = _lorenz_single_dt(replace(config, dt=dt), out)
    manifest_path = _write_manifest(out, config, {
        "dts": list(dts),
        "clim_stdev": {repr(dt): runs[dt].clim_stdev for dt in dts},
    })
    return LorenzExperimentResult(runs=runs, manifest_path=manifest_path)


def _lorenz_single_dt(config: ExperimentConfig, out: Path) -> LorenzRun:
    seeds = np.random.SeedSequence(config.seed).spawn(3)  # sim, perturb, ensemble
    ts = simulate_lorenz63(n_samples=config.n_samples, dt_sample=config.dt, seed=seeds[0])
    n_train = config.n_samples - config.n_verify
    train, verify = split(ts, n_train)
    fit = fit_forecaster(train, config.n_basis, k0=config.k0,
                         neighbor_cap=config.neighbor_cap, stride=config.stride)

    n_lead = config.lead_steps
    v_count = config.n_verify - n_lead
    if v_count < 2:
        raise ValueError("verification block is shorter than the forecast horizon")
    v_idx = np.arange(v_count)
    rng = np.random.default_rng(seeds[1])
    x0_true = verify.points[v_idx]
    x_hat = x0_true + rng.normal(0.0, np.sqrt(config.perturbation_variance), size=x0_true.shape)

    truth = np.stack([verify.points[v_idx + lead] for lead in range(n_lead + 1)])

    diff_mean, diff_var = _diffusion_moment_forecasts(
        fit, x_hat, config.init_variance, n_lead, train.points
    )
    rmse = {"diffusion": _agg_rmse(diff_mean - truth)}
    spread = {"diffusion": np.sqrt(np.mean(diff_var, axis=(1, 2)))}

    ll_mean, ll_sq = _direct_local_linear(train.points, x_hat, n_lead,
                                          config.init_variance, k=15)
    rmse["local_linear"] = _agg_rmse(ll_mean - truth)
    spread["local_linear"] = np.sqrt(ll_sq)

    it_mean, it_sq = _iterated_local_linear(train.points, x_hat, n_lead,
                                            config.init_variance, k=15)
    rmse["iterated"] = _agg_rmse(it_mean - truth)
    spread["iterated"] = np.sqrt(it_sq)

    if config.with_ensemble:
        ens_mean, ens_sq = _lorenz_ensemble(x_hat, config, seeds[2], n_lead)
        rmse["ensemble"] = _agg_rmse(ens_mean - truth)
        spread["ensemble"] = np.sqrt(ens_sq)

    clim = float(np.sqrt(np.mean(verify.points.var(axis=0))))
    lead_times = np.arange(n_lead + 1) * config.dt
    csv_path = out / f"lorenz_skill_dt{config.dt:g}.csv"
    header = ["lead_time"]
    cols = [lead_times]
    for name in rmse:
        header += [f"rmse_{name}", f"stdev_{name}"]
        cols += [rmse[name], spread[name]]
    _write_csv(csv_path, header, np.column_stack(cols))
    return LorenzRun(dt=config.dt, lead_times=lead_times, rmse=rmse, spread=spread,
                     clim_stdev=clim, fit=fit, csv_path=csv_path)


def _diffusion_moment_forecasts(fit: FitResult, centers: np.ndarray, variance: float,
                                n_lead: int, train_pts: np.ndarray):
    """Per-lead first two moments of the state coordinates for a batch of
    Gaussian initial densities centered at ``centers``."""
    coeffs = _project_gaussian_batch(fit, train_pts, centers, variance)
    v_count = centers.shape[0]
    dim = train_pts.shape[1]
    mean = np.empty((n_lead + 1, v_count, dim))
    var = np.empty((n_lead + 1, v_count, dim))
    vec = coeffs
    for lead in range(n_lead + 1):
        if lead > 0:
            vec = evolve_coefficients(vec, fit.operator, 1)
        m, v = forecast_moments(vec, fit.basis, train_pts)
        mean[lead] = m.T
        var[lead] = v.T
    return mean, var


def _project_gaussian_batch(fit: FitResult, train_pts: np.ndarray,
                            centers: np.ndarray, variance: float) -> np.ndarray:
    """Coefficients of isotropic Gaussians at each center, evaluated at the
    training points. Densities are scaled per column before projecting (the
    scale cancels in the mass pinning), so narrow bumps far from the data
    cannot underflow to an all-zero column."""
    d2 = cdist(train_pts, centers, metric="sqeuclidean")
    log_p = -d2 / (2.0 * variance)
    log_p -= log_p.max(axis=0, keepdims=True)
    p0 = np.exp(log_p)
    ratio = p0 / fit.basis.peq[:, None]
    c = fit.basis.phi.T @ ratio / fit.basis.n_points
    mass = c[0]
    if np.any(mass <= 0):
        bad = int(np.nonzero(mass <= 0)[0][0])
        raise ValueError(f"initial density {bad} is not representable on the basis")
    return c / mass


def _agg_rmse(err: np.ndarray) -> np.ndarray:
    return np.sqrt(np.mean(err * err, axis=(1, 2)))


def _direct_local_linear(train_pts: np.ndarray, x_hat: np.ndarray, n_lead: int,
                         init_variance: float, k: int):
    """Direct local-linear forecasts for every verification point and lead.

    Returns per-lead means and the per-lead average of the conjugated
    covariance's mean diagonal (aggregated forecast variance).
    """
    v_count, dim = x_hat.shape
    mean = np.empty((n_lead + 1, v_count, dim))
    var_agg = np.empty(n_lead + 1)
    mean[0] = x_hat
    var_agg[0] = init_variance
    n = train_pts.shape[0]
    for lead in range(1, n_lead + 1):
        eligible = train_pts[: n - lead]
        d2 = cdist(x_hat, eligible, metric="sqeuclidean")
        idx, _ = _smallest_k(d2, k)
        frob = np.empty(v_count)
        for v in range(v_count):
            model = _affine_least_squares(train_pts[idx[v]], train_pts[idx[v] + lead])
            mean[lead, v] = model(x_hat[v])
            frob[v] = np.sum(model.linear * model.linear)
        # cov = V L L^T with V = init_variance * I, so mean diagonal is
        # V * ||L||_F^2 / dim
        var_agg[lead] = init_variance * np.mean(frob) / dim
    return mean, var_agg


def _iterated_local_linear(train_pts: np.ndarray, x_hat: np.ndarray, n_lead: int,
                           init_variance: float, k: int):
    """Iterated 1-step local-linear forecasts with chained linear parts."""
    v_count, dim = x_hat.shape
    mean = np.empty((n_lead + 1, v_count, dim))
    var_agg = np.empty(n_lead + 1)
    mean[0] = x_hat
    var_agg[0] = init_variance
    current = x_hat.copy()
    totals = np.broadcast_to(np.eye(dim), (v_count, dim, dim)).copy()
    eligible = train_pts[:-1]
    for lead in range(1, n_lead + 1):
        d2 = cdist(current, eligible, metric="sqeuclidean")
        idx, _ = _smallest_k(d2, k)
        for v in range(v_count):
            model = _affine_least_squares(train_pts[idx[v]], train_pts[idx[v] + 1])
            current[v] = model(current[v])
            totals[v] = model.linear @ totals[v]
        mean[lead] = current
        var_agg[lead] = init_variance * np.mean(np.sum(totals * totals, axis=(1, 2))) / dim
    return mean, var_agg


def _lorenz_ensemble(x_hat: np.ndarray, config: ExperimentConfig, seed, n_lead: int):
    """True-model ensemble around every verification point, batched across
    points and members (deterministic dynamics, so members only differ in
    their initial draw)."""
    v_count, dim = x_hat.shape
    n_ens = config.n_ens
    rng = np.random.default_rng(seed)
    ics = (x_hat[:, None, :]
           + np.sqrt(config.init_variance) * rng.standard_normal((v_count, n_ens, dim)))
    states = ics.reshape(v_count * n_ens, dim)
    model = lorenz_model()
    substeps = max(1, int(np.ceil(config.dt / 0.01)))
    mean = np.empty((n_lead + 1, v_count, dim))
    var_agg = np.empty(n_lead + 1)
    from .simulators import rk4_step_batch

    for lead in range(n_lead + 1):
        if lead > 0:
            states = rk4_step_batch(model, states, config.dt, substeps)
        grid = states.reshape(v_count, n_ens, dim)
        mean[lead] = grid.mean(axis=1)
        var_agg[lead] = float(np.mean(grid.var(axis=1)))
    return mean, var_agg


def run_nino_experiment(config: ExperimentConfig, out_dir=None) -> NinoExperimentResult:
    """Forecast the Nino-3.4 monthly index: train on Jan 1950 - Dec 1999,
    verify on Jan 2000 - Sep 2013, with a 5-lag delay embedding."""
    if config.experiment != "nino34":
        raise ValueError("config.experiment must be 'nino34'")
    if not config.data_path or not Path(config.data_path).exists():
        raise FileNotFoundError(
            "Nino-3.4 data file not found. Download the monthly index "
            "(e.g. the 'NINO3.4' anomaly column of the NOAA CPC sstoi.indices "
            "or ersst5.nino.mth ASCII products, or any 'year v1 ... v12' grid) "
            "and pass its path via --data / config data_path. "
            "No automatic download is attempted."
        )
    out = _prepare_out_dir(out_dir or config.out_dir, "nino34")
    raw, start = load_monthly_series(config.data_path, config.data_format)

    offset = (1950 - start[0]) * 12 + (1 - start[1])
    if offset < 0:
        raise ValueError(f"data starts {start[0]}-{start[1]:02d}, after Jan 1950")
    total_needed = offset + 600 + 2  # training window plus at least two verification months
    if raw.n_points < total_needed:
        raise ValueError("data file does not cover Jan 1950 - Dec 1999 plus verification")
    end = min(raw.n_points, offset + 765)  # cap at Sep 2013 when available
    values = raw.points[offset:end, 0]
    series = TimeSeries(values[:, None], tau=raw.tau, origin_label=raw.origin_label)

    lags = config.lags
    embedded = delay_embed(series, lags)
    n_train_raw = 600
    train_rows = n_train_raw - lags + 1  # newest coordinate stays inside the training window
    train_embedded = TimeSeries(embedded.points[:train_rows].copy(), series.tau,
                                origin_label=f"{series.origin_label}|train-embedded")

    fit = fit_forecaster(train_embedded, config.n_basis, k0=config.k0,
                         neighbor_cap=min(config.neighbor_cap, train_rows),
                         stride=config.stride)

    n_lead = config.lead_steps
    t = values.shape[0]
    init_times = np.arange(n_train_raw, t - n_lead)  # raw index of the newest coordinate
    if init_times.size < 2:
        raise ValueError("verification window is too short for the lead ladder")
    states = embedded.points[init_times - (lags - 1)]
    rng = np.random.default_rng(np.random.SeedSequence(config.seed).spawn(1)[0])
    x_hat = states + rng.normal(0.0, np.sqrt(config.perturbation_variance), size=states.shape)

    coeffs = _project_gaussian_batch(fit, train_embedded.points, x_hat,
                                     config.init_variance)
    observable = train_embedded.points[:, 0]  # newest raw value at each training row

    v_count = init_times.size
    means = np.empty((n_lead + 1, v_count))
    stdevs = np.empty((n_lead + 1, v_count))
    vec = coeffs
    for lead in range(n_lead + 1):
        if lead > 0:
            vec = evolve_coefficients(vec, fit.operator, 1)
        m, v = forecast_moments(vec, fit.basis, observable)
        means[lead] = m[0]
        stdevs[lead] = np.sqrt(v[0])

    leads = np.arange(1, n_lead + 1)
    truth_per_lead = [values[init_times + lead] for lead in leads]
    mean_per_lead = [means[lead] for lead in leads]
    stdev_per_lead = [stdevs[lead] for lead in leads]
    skill = rmse_and_correlation(
        truth_per_lead, mean_per_lead, leads.astype(float),
        forecast_stdevs_per_lead=stdev_per_lead,
        climatology=values[n_train_raw:],
    )

    skill_csv = out / "nino_skill.csv"
    _write_csv(
        skill_csv,
        ["lead_months", "rmse", "correlation", "mean_forecast_stdev", "climatological_stdev"],
        np.column_stack([
            skill.lead_times, skill.rmse, skill.correlation, skill.mean_forecast_stdev,
            np.full(n_lead, skill.climatological_stdev),
        ]),
    )
    lead14 = 14 if n_lead >= 14 else n_lead
    lead14_csv = out / "nino_lead14.csv"
    _write_csv(
        lead14_csv,
        ["target_month_index", "truth", "forecast_mean", "forecast_stdev"],
        np.column_stack([
            (init_times + lead14).astype(float),
            values[init_times + lead14],
            means[lead14],
            stdevs[lead14],
        ]),
    )
    manifest_path = _write_manifest(out, config, {
        "start": list(start),
        "n_points_used": int(t),
        "train_rows": int(train_rows),
        "verification_count": int(v_count),
        "kde_eps": fit.kde_tuning.eps_star, "kde_d": fit.kde_tuning.d_est,
        "vb_eps": fit.vb_tuning.eps_star, "vb_d": fit.vb_tuning.d_est,
    })
    return NinoExperimentResult(
        skill=skill,
        lead14_truth=values[init_times + lead14],
        lead14_mean=means[lead14],
        lead14_stdev=stdevs[lead14],
        fit=fit,
        skill_csv_path=skill_csv,
        lead14_csv_path=lead14_csv,
        manifest_path=manifest_path,
    )


def _prepare_out_dir(base, name: str) -> Path:
    out = Path(base) / name
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_csv(path: Path, header: list[str], rows: np.ndarray) -> None:
    with Path(path).open("w") as fh:
        fh.write(",".join(header) + "\n")
        for row in np.atleast_2d(rows):
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def _write_manifest(out: Path, config: ExperimentConfig, extra: dict) -> Path:
    manifest = {"config": asdict(config), **extra}
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path
