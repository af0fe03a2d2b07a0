"""Analytical teleportation: skip the early sampling steps for free.

At high noise any bounded distribution scores like its Gaussian moment-match,
so the first leg of deterministic sampling can be replaced by one evaluation
of the Gaussian closed form at an intermediate noise level sigma_skip. This
script samples a 3-mode Gaussian mixture with plain Heun and with
teleportation at increasing skip depths, reporting the saved score
evaluations and the endpoint deviation.
"""

import numpy as np

from scorefield import heun_sample, karras_grid, teleport_sample
from scorefield.gmmfit import fit_gmm
from scorefield.models import DeltaMixtureModel
from scorefield.spectrum import spectrum_from_cloud
from scorefield.synthetic import gmm_cloud

rng = np.random.default_rng(7)

cloud = gmm_cloud(n=600, d=8, k=3, seed=3, separation=6.0)
target = fit_gmm(cloud, k=3, rank=None, seed=0)     # the "true" score model
spec = spectrum_from_cloud(cloud)                   # its Gaussian approximation
tr = spec.total_variance
print(f"tr Sigma = {tr:.2f}, sqrt = {np.sqrt(tr):.2f}")

grid = karras_grid(0.002, 80.0, 7.0, 64)
x_T = 80.0 * rng.standard_normal(8)
reference = heun_sample(target, grid, x_T)
print(f"full Heun: nfe={reference.nfe}")

print(f"\n{'skip idx':>8} {'sigma_skip':>11} {'nfe':>5} {'saved':>6} {'endpoint dev':>13}")
for idx in (4, 8, 16, 24, 32, 40, 48):
    sigma_skip = float(grid.levels[idx])
    traj = teleport_sample(target, spec, grid, sigma_skip, x_T)
    dev = np.linalg.norm(traj.endpoint - reference.endpoint)
    saved = reference.nfe - traj.nfe
    print(f"{idx:8d} {sigma_skip:11.3f} {traj.nfe:5d} {saved:6d} {dev:13.3e}")

print("\nDeviation stays tiny while sigma_skip >> sqrt(tr Sigma), then grows")
print("once the skip reaches noise scales where the mixture structure is")
print("visible; the delta-mixture score of the raw cloud behaves the same:")

delta = DeltaMixtureModel(cloud)
reference = heun_sample(delta, grid, x_T)
for idx in (8, 24, 40):
    traj = teleport_sample(delta, spec, grid, float(grid.levels[idx]), x_T)
    dev = np.linalg.norm(traj.endpoint - reference.endpoint)
    print(f"delta target, skip to {grid.levels[idx]:8.3f}: deviation {dev:.3e}")
