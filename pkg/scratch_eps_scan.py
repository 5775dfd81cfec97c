import numpy as np

from diffusion_forecast.dataset import TimeSeries, knn
from diffusion_forecast.tuning import (
    PairwiseKernelSum, adhoc_bandwidth, kde, sq_bounds_from_neighbors, tune,
)
from diffusion_forecast.basis import build_basis, build_vb_kernel

rng = np.random.default_rng(7)
n = 3000
theta = rng.uniform(0, 2 * np.pi, n)
pts = np.column_stack([np.cos(theta), np.sin(theta)])
ts = TimeSeries(pts, tau=1.0)

nl = knn(ts, 8)
prof = adhoc_bandwidth(ts, 8, neighbors=nl)
ks = PairwiseKernelSum(pts, prof.rho0, c=2.0,
                       sq_bounds=sq_bounds_from_neighbors(nl, pts, prof.rho0))
res = tune(ks)
print("kde tune: eps=%.3g d=%.3f" % (res.eps_star, res.d_est))
dens = kde(ts, prof, res.eps_star, res.d_est)
print("q: mean=%.4f cv=%.3f" % (dens.q.mean(), dens.q.std() / dens.q.mean()))

v = dens.q ** -0.5
vb_sum = PairwiseKernelSum(pts, v, c=4.0, sq_bounds=sq_bounds_from_neighbors(nl, pts, v))
grid_t = vb_sum(np.asarray([2.0 ** l for l in range(-14, -2)]))
expected = np.array([1, 1, 4, 4, 9, 9])
for l, t_val in zip(range(-14, -2), grid_t):
    eps = 2.0 ** l
    try:
        k = build_vb_kernel(ts, dens, eps, neighbor_cap=1024)
        basis, _ = build_basis(k, ts, dens, eps, 1.0, 7)
        lam = basis.lam[1:7]
        err = np.abs(lam - expected) / expected
        print(f"l={l:3d} eps={eps:8.3g} T={t_val:8.3g} lam={np.array2string(lam, precision=3)} maxerr={err.max():.3f}")
    except Exception as e:
        print(f"l={l:3d} eps={eps:8.3g} T={t_val:8.3g} FAILED: {e}")
