import numpy as np

from diffusion_forecast.dataset import TimeSeries, knn
from diffusion_forecast.simulators import SDEModel, euler_maruyama
from diffusion_forecast.tuning import (
    PairwiseKernelSum, adhoc_bandwidth, kde, sq_bounds_from_neighbors,
)

TWO_PI = 2 * np.pi
model = SDEModel(
    dim=1,
    drift=lambda x: np.sin(x),
    diffusion=lambda x: np.full(x.shape[:-1] + (1, 1), 0.5),
    wrap=np.array([TWO_PI]),
)
ts = euler_maruyama(model, np.array([np.pi]), 0.1, substeps=20, n_samples=20000, seed=42)
theta = ts.points[:, 0]

peq = np.exp(-8.0 * np.cos(theta))
import scipy.integrate
norm = scipy.integrate.quad(lambda u: np.exp(-8 * np.cos(u)), 0, TWO_PI)[0]
peq /= norm

nl = knn(ts, 8)
prof = adhoc_bandwidth(ts, 8, neighbors=nl)
ks = PairwiseKernelSum(ts.points, prof.rho0, c=2.0,
                       sq_bounds=sq_bounds_from_neighbors(nl, ts.points, prof.rho0))
eps_list = np.asarray([240.0, 500.0, 955.0, 2048.0, 8192.0, 65536.0, 1048576.0])
tvals = ks(eps_list)
for eps, tval in zip(eps_list, tvals):
    dens = kde(ts, prof, eps, 1.0)
    q = dens.q
    floor = np.mean(np.abs(q - peq) / q)
    print(f"eps={eps:10.0f} T={tval:8.4f} L1floor={floor:.4f} cv_ratio={np.std(q/peq)/np.mean(q/peq):.4f}")
