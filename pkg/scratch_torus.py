import time

import numpy as np

from diffusion_forecast.evaluation import ExperimentConfig
from diffusion_forecast.experiments import run_torus_experiment, torus_config

t0 = time.time()
config = torus_config(seed=0)
print(config)
result = run_torus_experiment(config, out_dir="/tmp/torus_run")
print(f"total: {time.time()-t0:.0f}s")

dm = result.diffusion.mean - result.ensemble.mean
dv = np.sqrt(result.diffusion.variance) - np.sqrt(result.ensemble.variance)
clim = result.clim_stdev
print("clim stdev:", clim)
for j, name in enumerate(["x", "z"]):
    print(f"{name}: max|dmean|/clim = {np.abs(dm[:, j]).max() / clim[j]:.3f} "
          f"max|dstd|/clim = {np.abs(dv[:, j]).max() / clim[j]:.3f}")
print("kde d=%.3f vb d=%.3f vb eps=%.4g" % (
    result.fit.kde_tuning.d_est, result.fit.vb_tuning.d_est, result.fit.vb_tuning.eps_star))
print("lam[:8] =", np.round(result.fit.basis.lam[:8], 3))
phi0 = result.fit.basis.phi[:, 0]
print("phi0 rel dev:", np.abs(phi0 - phi0.mean()).max() / abs(phi0.mean()))
# where do the worst deviations happen?
worst = np.argmax(np.abs(dm[:, 0]))
print("worst x-mean lead:", result.lead_times[worst], dm[worst, 0])
print("lead 0 moments: diff", result.diffusion.mean[0], "ens", result.ensemble.mean[0])
print("lead -1 moments: diff", result.diffusion.mean[-1], "ens", result.ensemble.mean[-1])
