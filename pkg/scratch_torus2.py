import time

import numpy as np

from diffusion_forecast.experiments import run_torus_experiment, torus_config

t0 = time.time()
result = run_torus_experiment(torus_config(seed=0), out_dir="/tmp/torus_run2")
print(f"total: {time.time()-t0:.0f}s")

dm = result.diffusion.mean - result.ensemble.mean
dv = np.sqrt(result.diffusion.variance) - np.sqrt(result.ensemble.variance)
clim = result.clim_stdev
print("clim stdev:", clim)
for j, name in enumerate(["x", "z"]):
    print(f"{name}: max|dmean|/clim = {np.abs(dm[:, j]).max() / clim[j]:.3f} "
          f"max|dstd|/clim = {np.abs(dv[:, j]).max() / clim[j]:.3f}")
print("lead, diff_mean_x, ens_mean_x, diff_mean_z, ens_mean_z")
for lead in range(0, 101, 5):
    print(f"{result.lead_times[lead]:5.1f} "
          f"{result.diffusion.mean[lead,0]:8.3f} {result.ensemble.mean[lead,0]:8.3f}   "
          f"{result.diffusion.mean[lead,1]:8.3f} {result.ensemble.mean[lead,1]:8.3f}")
print("stdev x: diff vs ens")
for lead in range(0, 101, 10):
    print(f"{result.lead_times[lead]:5.1f} "
          f"{np.sqrt(result.diffusion.variance[lead,0]):8.3f} {np.sqrt(result.ensemble.variance[lead,0]):8.3f}")
