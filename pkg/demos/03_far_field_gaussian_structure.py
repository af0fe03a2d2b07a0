"""Far-field equivalence of point-cloud and Gaussian scores.

For any bounded point cloud, once the noise scale dwarfs the cloud radius
(sigma >> sqrt(tr Sigma)) the exact (delta mixture) score collapses onto the
score of a single Gaussian with the same mean and covariance. The isotropic
model, which drops the covariance, plateaus instead of converging. The
fraction of unexplained variance makes this quantitative.
"""

import numpy as np

from scorefield import unexplained_variance
from scorefield.models import DeltaMixtureModel, GaussianModel, IsotropicModel
from scorefield.spectrum import PointCloud, estimate_moments, spectrum_from_cloud

rng = np.random.default_rng(42)

# anisotropic cloud, 500 points in D = 32
scales = np.linspace(1.2, 0.1, 32)
cloud = PointCloud(rng.standard_normal((500, 32)) * scales)
exact = DeltaMixtureModel(cloud)
gauss = GaussianModel(spectrum_from_cloud(cloud))
iso = IsotropicModel(estimate_moments(cloud)[0])

tr = gauss.spectrum.total_variance
print(f"sqrt(tr Sigma) = {np.sqrt(tr):.3f}, top eigenvalue sqrt = "
      f"{np.sqrt(gauss.spectrum.eigenvalues[0]):.3f}")

print(f"\n{'sigma/sqrt(tr)':>14} {'UV gaussian':>12} {'UV isotropic':>13}")
for c in (0.5, 1.0, 2.0, 5.0, 10.0, 20.0, 50.0):
    sigma = c * np.sqrt(tr)
    uv_g = unexplained_variance(exact, gauss, sigma, 256, seed=0).mean
    uv_i = unexplained_variance(exact, iso, sigma, 256, seed=0).mean
    print(f"{c:14.1f} {uv_g:12.3e} {uv_i:13.3e}")

print("\nThe Gaussian column drops roughly like (tr Sigma / sigma^2)^2 — the")
print("second-order term of the far-field expansion — while the covariance-")
print("free isotropic model keeps a first-order deficit for much longer.")
