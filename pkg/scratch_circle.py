import time

import numpy as np

from diffusion_forecast.dataset import TimeSeries
from diffusion_forecast.pipeline import fit_forecaster

rng = np.random.default_rng(7)
n = 3000
theta = rng.uniform(0, 2 * np.pi, n)
pts = np.column_stack([np.cos(theta), np.sin(theta)])
ts = TimeSeries(pts, tau=1.0, origin_label="circle")

t0 = time.time()
fit = fit_forecaster(ts, n_basis=10, k0=8, neighbor_cap=min(n, 1024))
t1 = time.time()
print(f"fit time: {t1 - t0:.1f}s")
print("kde tune: eps=%.4g d=%.3f boundary=%s" % (fit.kde_tuning.eps_star, fit.kde_tuning.d_est, fit.kde_tuning.boundary_warning))
print("vb  tune: eps=%.4g d=%.3f boundary=%s" % (fit.vb_tuning.eps_star, fit.vb_tuning.d_est, fit.vb_tuning.boundary_warning))
print("q mean (expect 1/(2pi)=0.159):", fit.density.q.mean(), "cv:", fit.density.q.std() / fit.density.q.mean())
print("lam:", fit.basis.lam)
print("expected: 0, 1,1,4,4,9,9,16,16,25")
phi0 = fit.basis.phi[:, 0]
print("phi0 rel dev:", np.abs(phi0 - phi0.mean()).max() / np.abs(phi0.mean()))
gram = fit.basis.phi.T @ fit.basis.phi / n
print("orthonormality dev:", np.abs(gram - np.eye(10)).max())
