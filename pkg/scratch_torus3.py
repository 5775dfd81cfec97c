import time

import numpy as np

from diffusion_forecast.dataset import TimeSeries
from diffusion_forecast.forecast import (
    evolve_coefficients, forecast_moments, gaussian_density_values, project_density,
    reconstruct_density, DensityCoefficients,
)
from diffusion_forecast.pipeline import fit_forecaster
from diffusion_forecast.simulators import TWO_PI, simulate_torus, torus_embed

t0 = time.time()
intrinsic, embedded = simulate_torus(n_samples=8000, dt_sample=0.1, substeps=50, seed=0)
print(f"sim {time.time()-t0:.0f}s")

p0_mean = np.random.default_rng(123).uniform(0, TWO_PI, 2)
print("p0 mean:", p0_mean)
var0 = 0.1
wrap = np.array([TWO_PI, TWO_PI])

# analytic moments of the initial density via fine quadrature in angles
g1 = np.linspace(0, TWO_PI, 400, endpoint=False)
gg = np.stack(np.meshgrid(g1, g1, indexing="ij"), axis=-1).reshape(-1, 2)
pg = gaussian_density_values(gg, p0_mean, var0, wrap=wrap)
pg /= pg.sum()
emb_g = torus_embed(gg)
true_mean = (pg[:, None] * emb_g[:, [0, 2]]).sum(axis=0)
true_second = (pg[:, None] * emb_g[:, [0, 2]] ** 2).sum(axis=0)
print("analytic t0 mean:", true_mean, "std:", np.sqrt(true_second - true_mean**2))

for m in (100, 400):
    t1 = time.time()
    fit = fit_forecaster(embedded, m)
    p0_angles = gaussian_density_values(intrinsic.points, p0_mean, var0, wrap=wrap)
    p0_vals = p0_angles / (2.0 + np.sin(intrinsic.points[:, 0]))
    coeffs = project_density(p0_vals, fit.basis)
    obs = embedded.points[:, [0, 2]]
    mean0, varr0 = forecast_moments(coeffs, fit.basis, obs)
    recon = reconstruct_density(coeffs, fit.basis)
    l1 = np.mean(np.abs(recon - p0_vals) / fit.basis.peq)
    mass = np.mean(p0_vals / fit.basis.peq)
    print(f"M={m}: fit {time.time()-t1:.0f}s; t0 mean {mean0} std {np.sqrt(varr0)} "
          f"L1self={l1 / mass:.3f}")
    c = coeffs.c
    vec = c.copy()
    for lead in (1, 5, 10, 20, 40):
        vec_n = evolve_coefficients(c, fit.operator, lead)
        mm, vv = forecast_moments(vec_n, fit.basis, obs)
        tail = np.sqrt(np.sum(vec_n[m // 2:] ** 2)) / np.sqrt(np.sum(vec_n**2))
        print(f"  lead {lead:3d}: mean {np.round(mm,3)} std {np.round(np.sqrt(vv),3)} "
              f"tail-energy {tail:.3f} |c| {np.linalg.norm(vec_n):.1f}")
