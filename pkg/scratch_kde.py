import numpy as np

from diffusion_forecast.dataset import TimeSeries, knn
from diffusion_forecast.tuning import (
    PairwiseKernelSum, adhoc_bandwidth, kde, sq_bounds_from_neighbors, tune,
)

rng = np.random.default_rng(3)
n = 5000
theta = rng.uniform(0, 2 * np.pi, n)
pts = np.column_stack([np.cos(theta), np.sin(theta)])
ts = TimeSeries(pts, tau=1.0)
truth = 1.0 / (2 * np.pi)

nl = knn(ts, 64)
for k0 in (8, 16, 32):
    prof = adhoc_bandwidth(ts, k0, neighbors=nl)
    rho = prof.rho0
    print(f"k0={k0}: cv(rho)={rho.std()/rho.mean():.3f}")
    ks = PairwiseKernelSum(pts, rho, c=2.0,
                           sq_bounds=sq_bounds_from_neighbors(nl, pts, rho))
    res = tune(ks)
    for eps in (res.eps_star / 16, res.eps_star, res.eps_star * 4):
        dens = kde(ts, prof, eps, 1.0)
        q = dens.q
        rel = np.abs(q - truth) / truth
        frac = np.mean(rel <= 0.15)
        print(f"  eps={eps:9.3g} cv(q)={q.std()/q.mean():.3f} mean={q.mean():.4f} "
              f"frac|err|<=15%={frac:.3f} corr(q, rho^-0.5)={np.corrcoef(q, rho**-0.5)[0,1]:.2f}")
