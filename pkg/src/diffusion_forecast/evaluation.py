"""Forecast-skill metrics and experiment configuration."""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class SkillReport:
    """Per-lead skill of a mean forecast against verification truth.

    ``mean_forecast_stdev`` aggregates the forecast's own spread in the
    root-mean sense, the convention under which a well-calibrated forecast's
    spread matches its RMSE. ``degenerate`` flags leads where the correlation
    was undefined (constant forecast or truth) and reported as 0.
    """

    lead_times: np.ndarray
    rmse: np.ndarray
    correlation: np.ndarray
    mean_forecast_stdev: np.ndarray
    climatological_stdev: float
    degenerate: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))

    def __post_init__(self):
        if np.any(self.rmse < 0):
            raise ValueError("rmse must be nonnegative")
        if np.any(np.abs(self.correlation) > 1.0 + 1e-12):
            raise ValueError("correlation must lie in [-1, 1]")


def rmse_and_correlation(
    truth_per_lead,
    forecast_means_per_lead,
    lead_times,
    forecast_stdevs_per_lead=None,
    climatology: np.ndarray | None = None,
) -> SkillReport:
    """Skill of per-lead mean forecasts against aligned truth.

    Parameters
    ----------
    truth_per_lead, forecast_means_per_lead : sequences of ndarray
        One aligned pair of arrays per lead; entries may be scalars or
        state vectors (RMSE then aggregates over coordinates too).
    forecast_stdevs_per_lead : sequence of ndarray, optional
        Forecast spread per verification point (scalar or per-coordinate),
        aggregated to one root-mean value per lead.
    climatology : ndarray, optional
        Series whose population standard deviation defines the skill floor;
        defaults to the pooled truth values.
    """
    lead_times = np.asarray(lead_times, dtype=float)
    n_leads = len(lead_times)
    if len(truth_per_lead) != n_leads or len(forecast_means_per_lead) != n_leads:
        raise ValueError("one truth/forecast pair required per lead")
    rmse = np.empty(n_leads)
    corr = np.zeros(n_leads)
    degenerate = np.zeros(n_leads, dtype=bool)
    spread = np.full(n_leads, np.nan)
    pooled = []
    for i in range(n_leads):
        t = np.asarray(truth_per_lead[i], dtype=float)
        f = np.asarray(forecast_means_per_lead[i], dtype=float)
        if t.shape != f.shape:
            raise ValueError(f"lead {i}: truth and forecast shapes disagree")
        if t.shape[0] < 2:
            raise ValueError(f"lead {i}: need at least 2 verification points")
        err = f - t
        rmse[i] = float(np.sqrt(np.mean(err * err)))
        tf, ff = t.ravel(), f.ravel()
        st, sf = tf.std(), ff.std()
        if st == 0.0 or sf == 0.0:
            degenerate[i] = True
        else:
            corr[i] = float(np.clip(np.corrcoef(tf, ff)[0, 1], -1.0, 1.0))
        pooled.append(tf)
        if forecast_stdevs_per_lead is not None:
            s = np.asarray(forecast_stdevs_per_lead[i], dtype=float)
            spread[i] = float(np.sqrt(np.mean(s * s)))
    if climatology is None:
        clim = float(np.concatenate(pooled).std())
    else:
        clim = float(np.asarray(climatology, dtype=float).ravel().std())
    return SkillReport(
        lead_times=lead_times,
        rmse=rmse,
        correlation=corr,
        mean_forecast_stdev=spread,
        climatological_stdev=clim,
        degenerate=degenerate,
    )


@dataclass(frozen=True)
class ExperimentConfig:
    """Knobs for the experiment drivers.

    Desk-scale defaults keep runtimes in minutes on one core; pass
    ``paper_scale=True`` (or the CLI flag) for the published configuration.
    """

    experiment: str = "custom"
    n_samples: int = 8000
    dt: float = 0.1
    n_basis: int = 400
    k0: int = 8
    neighbor_cap: int = 1024
    stride: int = 1
    lags: int = 5
    n_ens: int = 10000
    n_verify: int = 500
    lead_steps: int = 100
    seed: int = 0
    substeps: int = 50
    init_variance: float = 0.1
    perturbation_variance: float = 0.01
    data_path: str = ""
    data_format: str = "noaa-monthly-grid"
    out_dir: str = "runs"
    paper_scale: bool = False
    with_ensemble: bool = True

    def __post_init__(self):
        if self.experiment not in ("torus", "lorenz63", "nino34", "custom"):
            raise ValueError(f"unknown experiment {self.experiment!r}")
        for name, lo in [
            ("n_samples", 16), ("n_basis", 1), ("k0", 2), ("neighbor_cap", 2),
            ("stride", 1), ("lags", 1), ("n_ens", 2), ("n_verify", 2),
            ("lead_steps", 1), ("substeps", 1),
        ]:
            if getattr(self, name) < lo:
                raise ValueError(f"{name} must be >= {lo}")
        for name in ("dt", "init_variance", "perturbation_variance"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.n_basis > self.n_samples:
            raise ValueError("n_basis cannot exceed n_samples")


_BOOL_STRINGS = {"true": True, "1": True, "yes": True, "false": False, "0": False, "no": False}


def load_config(path, base: ExperimentConfig | None = None) -> ExperimentConfig:
    """Read a flat ``key = value`` config file over a base configuration."""
    base = base or ExperimentConfig()
    text = Path(path).read_text()
    overrides = {}
    valid = {f.name: f.type for f in fields(ExperimentConfig)}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{line_no}: expected 'key = value'")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in valid:
            raise ValueError(f"{path}:{line_no}: unknown config key {key!r}")
        overrides[key] = _coerce(key, value, base)
    return replace(base, **overrides)


def _coerce(key: str, value: str, base: ExperimentConfig):
    current = getattr(base, key)
    if isinstance(current, bool):
        try:
            return _BOOL_STRINGS[value.lower()]
        except KeyError:
            raise ValueError(f"config key {key}: expected a boolean, got {value!r}") from None
    if isinstance(current, int):
        return int(value)
    if isinstance(current, float):
        return float(value)
    return value
