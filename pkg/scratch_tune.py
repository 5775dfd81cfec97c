import numpy as np

from diffusion_forecast.dataset import TimeSeries, knn
from diffusion_forecast.tuning import (
    PairwiseKernelSum, adhoc_bandwidth, default_bandwidth_grid, kde,
    sq_bounds_from_neighbors, tune,
)
from diffusion_forecast.simulators import torus_embed

rng = np.random.default_rng(11)


def curves(pts, label):
    ts = TimeSeries(pts, tau=1.0)
    nl = knn(ts, 8)
    prof = adhoc_bandwidth(ts, 8, neighbors=nl)
    grid = default_bandwidth_grid()
    ks_kde = PairwiseKernelSum(pts, prof.rho0, c=2.0,
                               sq_bounds=sq_bounds_from_neighbors(nl, pts, prof.rho0))
    t_kde = ks_kde(grid)
    # kde with mid-plateau eps for the density, just to get q for the vb kernel
    res_kde = tune(ks_kde)
    dens = kde(ts, prof, res_kde.eps_star, res_kde.d_est)
    v = dens.q ** -0.5
    ks_vb = PairwiseKernelSum(pts, v, c=4.0,
                              sq_bounds=sq_bounds_from_neighbors(nl, pts, v))
    t_vb = ks_vb(grid)
    for name, t in (("kde", t_kde), ("vb", t_vb)):
        log_t = np.log(t)
        log_e = np.log(grid)
        slopes = np.diff(log_t) / np.diff(log_e)
        sm = np.convolve(slopes, np.ones(3), "same") / np.convolve(np.ones_like(slopes), np.ones(3), "same")
        i_max = np.argmax(sm)
        print(f"== {label} {name}: global argmax l={np.log2(grid[i_max]):.1f} eps={grid[i_max]:.3g} "
              f"slope={sm[i_max]:.3f} T={t[i_max]:.3g}")
        # print curve summary where slope is interesting
        n = len(grid)
        mask = (t[:-1] > 2.0 / len(pts)) & (t[1:] < 0.5)
        idx = np.nonzero(mask)[0]
        lines = []
        for i in idx[:: max(1, len(idx) // 24)]:
            lines.append(f"l={np.log2(grid[i]):6.1f} T={t[i]:9.3g} slope={sm[i]:6.3f}")
        print("   " + "\n   ".join(lines))


n = 2000
theta = rng.uniform(0, 2 * np.pi, n)
circle = np.column_stack([np.cos(theta), np.sin(theta)])
curves(circle, "circle2000")

ang = rng.uniform(0, 2 * np.pi, (n, 2))
torus = torus_embed(ang)
curves(torus, "torus2000")

cloud = rng.standard_normal((n, 3))
curves(cloud, "gauss3d_2000")
