import time

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from diffusion_forecast.dataset import TimeSeries
from diffusion_forecast.forecast import evolve_coefficients, project_density, reconstruct_density
from diffusion_forecast.pipeline import fit_forecaster
from diffusion_forecast.simulators import SDEModel, euler_maruyama

TWO_PI = 2 * np.pi


def periodic_sde():
    return SDEModel(
        dim=1,
        drift=lambda x: np.sin(x),
        diffusion=lambda x: np.full(x.shape[:-1] + (1, 1), 0.5),
        wrap=np.array([TWO_PI]),
    )


def fp_generator(n_cells, diff_coef):
    h = TWO_PI / n_cells
    centers = (np.arange(n_cells) + 0.5) * h
    faces = np.arange(n_cells + 1) * h
    a_face = np.sin(faces)
    rows, cols, vals = [], [], []
    for i in range(n_cells):
        ip = (i + 1) % n_cells
        im = (i - 1) % n_cells
        a_r, a_l = a_face[i + 1], a_face[i]
        rows += [i, i, i]
        cols += [im, i, ip]
        vals += [
            a_l / (2 * h) + diff_coef / h**2,
            (-a_r + a_l) / (2 * h) - 2 * diff_coef / h**2,
            -a_r / (2 * h) + diff_coef / h**2,
        ]
    gen = sp.coo_matrix((vals, (rows, cols)), shape=(n_cells, n_cells)).toarray()
    return centers, gen


def stationary_density(gen, h):
    w, v = np.linalg.eig(gen)
    i = np.argmin(np.abs(w))
    p = np.real(v[:, i])
    if p.sum() < 0:
        p = -p
    return p / (p.sum() * h)


def wrap_interp(grid, values, x):
    return np.interp(np.mod(x, TWO_PI), np.concatenate([grid, [grid[0] + TWO_PI]]),
                     np.concatenate([values, [values[0]]]))


t0 = time.time()
n = 20000
tau = 0.1
ts = euler_maruyama(periodic_sde(), np.array([np.pi]), tau, substeps=20, n_samples=n, seed=42)
print(f"simulate: {time.time()-t0:.1f}s")

t0 = time.time()
fit = fit_forecaster(ts, n_basis=30)
print(f"fit: {time.time()-t0:.1f}s")
print("kde: eps=%.4g d=%.3f | vb: eps=%.4g d=%.3f" %
      (fit.kde_tuning.eps_star, fit.kde_tuning.d_est,
       fit.vb_tuning.eps_star, fit.vb_tuning.d_est))

n_cells = 512
h = TWO_PI / n_cells
centers, gen = fp_generator(n_cells, diff_coef=0.125)
prop = scipy.linalg.expm(tau * gen)
peq_fp = stationary_density(gen, h)

theta = ts.points[:, 0]
mu0, var0 = np.pi - 0.4, 0.04
delta = np.mod(theta - mu0 + np.pi, TWO_PI) - np.pi
p0_pts = np.exp(-delta**2 / (2 * var0)) / np.sqrt(2 * np.pi * var0)
dgrid = np.mod(centers - mu0 + np.pi, TWO_PI) - np.pi
p0_grid = np.exp(-dgrid**2 / (2 * var0)) / np.sqrt(2 * np.pi * var0)

coeffs = project_density(p0_pts, fit.basis)


def l1_raw(c_vec, p_grid):
    p_hat = fit.basis.peq * (fit.basis.phi @ c_vec)
    return np.mean(np.abs(p_hat - wrap_interp(centers, p_grid, theta)) / fit.basis.peq)


def l1_ratio(c_vec, p_grid):
    r_hat = fit.basis.phi @ c_vec
    r_fp = wrap_interp(centers, p_grid / peq_fp, theta)
    return np.mean(np.abs(r_hat - r_fp))


print("t=0: raw L1 %.4f ratio L1 %.4f" % (l1_raw(coeffs.c, p0_grid), l1_ratio(coeffs.c, p0_grid)))
vec = coeffs.c.copy()
p_grid = p0_grid.copy()
for step_i in range(1, 51):
    vec = evolve_coefficients(vec, fit.operator, 1)
    p_grid = prop @ p_grid
    if step_i in (1, 2, 5, 10, 25, 50):
        print(f"step {step_i}: raw L1 = {l1_raw(vec, p_grid):.4f} ratio L1 = {l1_ratio(vec, p_grid):.4f}")
for _ in range(150):
    vec = evolve_coefficients(vec, fit.operator, 1)
    p_grid = prop @ p_grid
print("t=20: raw %.4f ratio %.4f" % (l1_raw(vec, p_grid), l1_ratio(vec, p_grid)))
