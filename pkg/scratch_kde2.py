import numpy as np
from scipy.spatial.distance import cdist

from diffusion_forecast.dataset import TimeSeries, knn
from diffusion_forecast.tuning import (
    PairwiseKernelSum, adhoc_bandwidth, sq_bounds_from_neighbors, tune,
)


def kde_perpair(pts, rho, eps, d):
    n = len(pts)
    out = np.empty(n)
    chunk = max(1, 4_000_000 // n)
    for s in range(0, n, chunk):
        e = min(s + chunk, n)
        d2 = cdist(pts[s:e], pts, metric="sqeuclidean")
        ss = np.outer(rho[s:e], rho)
        k = np.exp(-d2 / (2.0 * eps * ss)) / (2.0 * np.pi * eps * ss) ** (d / 2.0)
        out[s:e] = k.sum(axis=1)
    return out / n


rng = np.random.default_rng(3)
n = 5000
theta = rng.uniform(0, 2 * np.pi, n)
pts = np.column_stack([np.cos(theta), np.sin(theta)])
ts = TimeSeries(pts, tau=1.0)
truth = 1.0 / (2 * np.pi)

nl = knn(ts, 8)
prof = adhoc_bandwidth(ts, 8, neighbors=nl)
rho = prof.rho0
ks = PairwiseKernelSum(pts, rho, c=2.0, sq_bounds=sq_bounds_from_neighbors(nl, pts, rho))
grid = np.asarray([2.0 ** (l / 10) for l in range(-300, 101)])
tvals = ks(grid)
for t_cap in (0.05, 0.1):
    idx = np.nonzero(tvals <= t_cap)[0][-1]
    eps = grid[idx]
    q = kde_perpair(pts, rho, eps, 1.0)
    rel = np.abs(q - truth) / truth
    print(f"T_cap={t_cap}: eps={eps:.3g} cv={q.std()/q.mean():.4f} "
          f"frac<=15%={np.mean(rel <= 0.15):.3f} mean={q.mean():.4f}")

# normal in R^1
x = rng.standard_normal(5000)[:, None]
ts2 = TimeSeries(x, tau=1.0)
nl2 = knn(ts2, 8)
prof2 = adhoc_bandwidth(ts2, 8, neighbors=nl2)
ks2 = PairwiseKernelSum(x, prof2.rho0, c=2.0,
                        sq_bounds=sq_bounds_from_neighbors(nl2, x, prof2.rho0))
t2 = ks2(grid)
idx = np.nonzero(t2 <= 0.05)[0][-1]
eps2 = grid[idx]
q2 = kde_perpair(x, prof2.rho0, eps2, 1.0)
pdf = np.exp(-x[:, 0] ** 2 / 2) / np.sqrt(2 * np.pi)
mask = np.abs(x[:, 0]) <= 2
rel2 = np.abs(q2 - pdf) / pdf
print(f"normal: eps={eps2:.3g} max rel err on |x|<=2: {rel2[mask].max():.3f} "
      f"frac<=20%={np.mean(rel2[mask] <= 0.2):.3f}")
