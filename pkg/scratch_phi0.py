import numpy as np

from diffusion_forecast.dataset import TimeSeries
from diffusion_forecast.pipeline import fit_forecaster
from diffusion_forecast.basis import build_basis, build_vb_kernel

rng = np.random.default_rng(7)
n = 3000
theta = rng.uniform(0, 2 * np.pi, n)
pts = np.column_stack([np.cos(theta), np.sin(theta)])
ts = TimeSeries(pts, tau=1.0)

fit = fit_forecaster(ts, n_basis=8)
phi0 = fit.basis.phi[:, 0]
p_diag = np.sqrt(fit.ledger.Dhat_scale * fit.ledger.qSalpha)
p_unit = p_diag / np.sqrt(np.mean(p_diag**2))
print("phi0 dev:", np.abs(phi0 - phi0.mean()).max() / np.abs(phi0.mean()))
print("||phi0 - P.1/norm||_inf:", np.abs(np.abs(phi0) - p_unit).max())
print("corr(log phi0, log q):",
      np.corrcoef(np.log(np.abs(phi0)), np.log(fit.density.q))[0, 1])
slope = np.polyfit(np.log(fit.density.q), np.log(np.abs(phi0)), 1)[0]
print("slope log phi0 vs log q:", slope)

# retained conjugation: phi0 exactly constant, orthonormality degraded
kernel = build_vb_kernel(ts, fit.density, fit.vb_tuning.eps_star, neighbor_cap=1024)
basis_c, _ = build_basis(kernel, ts, fit.density, fit.vb_tuning.eps_star,
                         fit.vb_tuning.d_est, 8, retain_conjugation=True)
phi0c = basis_c.phi[:, 0]
print("conjugated phi0 dev:", np.abs(phi0c - phi0c.mean()).max() / np.abs(phi0c.mean()))
gram = basis_c.phi.T @ basis_c.phi / n
print("conjugated orthonormality dev:", np.abs(gram - np.eye(8)).max())
