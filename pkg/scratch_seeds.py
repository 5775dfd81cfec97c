import numpy as np
from scipy.spatial.distance import cdist

from diffusion_forecast.dataset import TimeSeries, knn
from diffusion_forecast.tuning import (
    PairwiseKernelSum, adhoc_bandwidth, sq_bounds_from_neighbors,
)


def kde_perpair(pts, rho, eps, d):
    n = len(pts)
    d2 = cdist(pts, pts, metric="sqeuclidean")
    ss = np.outer(rho, rho)
    k = np.exp(-d2 / (2.0 * eps * ss)) / (2.0 * np.pi * eps * ss) ** (d / 2.0)
    return k.sum(axis=1) / n


def tuned_eps_d(pts, v, c, nl, t_cap=0.05):
    ks = PairwiseKernelSum(pts, v, c=c, sq_bounds=sq_bounds_from_neighbors(nl, pts, v))
    grid = np.asarray([2.0 ** (l / 10) for l in range(-300, 101)])
    t = ks(grid)
    log_t, log_e = np.log(t), np.log(grid)
    slopes = np.diff(log_t) / np.diff(log_e)
    sm = np.convolve(slopes, np.ones(3), "same") / np.convolve(np.ones_like(slopes), np.ones(3), "same")
    mask = t[1:] <= t_cap
    cand = np.nonzero(mask)[0]
    i = cand[np.argmax(sm[cand])]
    return grid[i], 2 * sm[i]


truth = 1.0 / (2 * np.pi)
fracs = []
ds_circle, ds_torus, ds_gauss = [], [], []
for seed in range(8):
    rng = np.random.default_rng(seed)
    theta = rng.uniform(0, 2 * np.pi, 5000)
    pts = np.column_stack([np.cos(theta), np.sin(theta)])
    ts = TimeSeries(pts, tau=1.0)
    nl = knn(ts, 8)
    prof = adhoc_bandwidth(ts, 8, neighbors=nl)
    eps, d = tuned_eps_d(pts, prof.rho0, 2.0, nl)
    q = kde_perpair(pts, prof.rho0, eps, 1.0)
    rel = np.abs(q - truth) / truth
    fracs.append(np.mean(rel <= 0.15))
    ds_circle.append(d)

    from diffusion_forecast.simulators import torus_embed
    ang = rng.uniform(0, 2 * np.pi, (2000, 2))
    tor = torus_embed(ang)
    ts2 = TimeSeries(tor, tau=1.0)
    nl2 = knn(ts2, 8)
    prof2 = adhoc_bandwidth(ts2, 8, neighbors=nl2)
    _, d2 = tuned_eps_d(tor, prof2.rho0, 2.0, nl2)
    ds_torus.append(d2)

    cloud = rng.standard_normal((2000, 3))
    ts3 = TimeSeries(cloud, tau=1.0)
    nl3 = knn(ts3, 8)
    prof3 = adhoc_bandwidth(ts3, 8, neighbors=nl3)
    _, d3 = tuned_eps_d(cloud, prof3.rho0, 2.0, nl3)
    ds_gauss.append(d3)

print("kde circle frac<=15%:", np.round(fracs, 3))
print("d circle:", np.round(ds_circle, 3))
print("d torus:", np.round(ds_torus, 3))
print("d gauss3d:", np.round(ds_gauss, 3))
