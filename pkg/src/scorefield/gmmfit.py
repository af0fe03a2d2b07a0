"""Low-rank Gaussian mixture construction via mini-batch k-means.

The fit is deliberately cheap: cluster with mini-batch k-means, then take
each cluster's empirical mean and (population) covariance, truncated to the
requested rank, with weights N_i / N. This is roughly one EM step, which is
all the score-comparison harness needs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInput, InvalidK
from .models import GaussianComponent, MixtureModel, ScoreModel
from .spectrum import PointCloud, spectrum_from_cloud

__all__ = [
    "KMeansResult",
    "minibatch_kmeans",
    "minibatch_kmeans_full",
    "gmm_from_assignments",
    "fit_gmm",
    "rank_mode_sweep",
    "SweepTable",
]

DEFAULT_BATCH = 2048
DEFAULT_MAX_ITER = 100
CENTER_SHIFT_TOL = 1e-6


@dataclass(frozen=True)
class KMeansResult:
    assignments: np.ndarray
    centers: np.ndarray
    iterations: int
    inertia: float


def _sq_dists(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    diff = points[:, None, :] - centers[None, :, :]
    return np.einsum("nkd,nkd->nk", diff, diff)


def _kmeans_pp_init(data: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding: first center uniform, then proportional to the
    squared distance to the nearest chosen center."""
    n = data.shape[0]
    centers = np.empty((k, data.shape[1]))
    idx = int(rng.integers(n))
    centers[0] = data[idx]
    closest = np.einsum("nd,nd->n", data - centers[0], data - centers[0])
    for j in range(1, k):
        total = closest.sum()
        if total <= 0:
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=closest / total))
        centers[j] = data[idx]
        d_new = np.einsum("nd,nd->n", data - centers[j], data - centers[j])
        np.minimum(closest, d_new, out=closest)
    return centers


def minibatch_kmeans_full(
    cloud: PointCloud,
    k: int,
    batch: int = DEFAULT_BATCH,
    seed: int = 0,
    max_iter: int = DEFAULT_MAX_ITER,
    tol: float = CENTER_SHIFT_TOL,
) -> KMeansResult:
    """Mini-batch k-means (Sculley-style per-center learning rates).

    Deterministic given the seed. After the mini-batch passes, every sample
    is assigned to its nearest center (ties to the lowest cluster index) and
    empty clusters are repaired by reseeding each on the farthest member of
    the currently largest cluster.
    """
    if not isinstance(cloud, PointCloud):
        cloud = PointCloud(np.asarray(cloud))
    n = cloud.n_samples
    if not (1 <= k <= n):
        raise InvalidK(f"need 1 <= K <= N={n}, got K={k}")
    if batch < 1:
        raise InvalidInput(f"batch must be >= 1, got {batch}")
    data = cloud.data
    rng = np.random.default_rng(seed)
    centers = _kmeans_pp_init(data, k, rng)
    counts = np.zeros(k)
    iterations = 0
    for iterations in range(1, max_iter + 1):
        take = min(batch, n)
        sample = rng.choice(n, size=take, replace=False)
        mb = data[sample]
        assign = np.argmin(_sq_dists(mb, centers), axis=1)
        previous = centers.copy()
        for j in range(take):
            c = assign[j]
            counts[c] += 1.0
            eta = 1.0 / counts[c]
            centers[c] += eta * (mb[j] - centers[c])
        shift = np.max(np.einsum("kd,kd->k", centers - previous, centers - previous))
        if shift < tol**2:
            break

    assignments = np.argmin(_sq_dists(data, centers), axis=1)

    # Empty-cluster repair: move the farthest point of the largest cluster
    # into each empty one. Terminates since the donor always has >= 2 members.
    sizes = np.bincount(assignments, minlength=k)
    while np.any(sizes == 0):
        empty = int(np.argmin(sizes))
        donor = int(np.argmax(sizes))
        members = np.nonzero(assignments == donor)[0]
        d = np.einsum("nd,nd->n", data[members] - centers[donor], data[members] - centers[donor])
        far = members[int(np.argmax(d))]
        assignments[far] = empty
        centers[empty] = data[far]
        sizes[empty] += 1
        sizes[donor] -= 1

    inertia = 0.0
    for c in range(k):
        members = assignments == c
        if np.any(members):
            diff = data[members] - centers[c]
            inertia += float(np.einsum("nd,nd->", diff, diff))
    return KMeansResult(assignments, centers, iterations, inertia)


def minibatch_kmeans(
    cloud: PointCloud,
    k: int,
    batch: int = DEFAULT_BATCH,
    seed: int = 0,
    max_iter: int = DEFAULT_MAX_ITER,
) -> np.ndarray:
    """Cluster assignments only; see minibatch_kmeans_full for the details."""
    return minibatch_kmeans_full(cloud, k, batch, seed, max_iter).assignments


def gmm_from_assignments(
    cloud: PointCloud, assignments: np.ndarray, rank: int | None = None
) -> MixtureModel:
    """Mixture with one Gaussian per cluster: empirical mean/covariance
    (population convention), spectrum truncated to ``rank``, weight N_i/N.

    Single-sample clusters yield zero-covariance (r = 0) components.
    ``rank=None`` keeps the full spectrum.
    """
    if not isinstance(cloud, PointCloud):
        cloud = PointCloud(np.asarray(cloud))
    assignments = np.asarray(assignments)
    n = cloud.n_samples
    comps = []
    for c in np.unique(assignments):
        index = np.nonzero(assignments == c)[0]
        sub = cloud.subset(index)
        spec = spectrum_from_cloud(sub, max_rank=rank)
        comps.append(GaussianComponent(index.size / n, spec))
    return MixtureModel(tuple(comps))


def fit_gmm(
    cloud: PointCloud,
    k: int,
    rank: int | None = None,
    seed: int = 0,
    batch: int = DEFAULT_BATCH,
    max_iter: int = DEFAULT_MAX_ITER,
) -> MixtureModel:
    """One-pass low-rank GMM: mini-batch k-means, then per-cluster moments.

    K = 1 with full rank reproduces the single-Gaussian model of the whole
    cloud; rank = 0 with K = N reduces to the delta-mixture score.
    """
    km = minibatch_kmeans_full(cloud, k, batch, seed, max_iter)
    return gmm_from_assignments(cloud, km.assignments, rank)


@dataclass(frozen=True)
class SweepTable:
    """Long-format (K, rank, sigma) -> unexplained-variance statistics."""

    rows: tuple[dict, ...]

    COLUMNS = ("k", "rank", "sigma", "mean_uv", "q25", "q75", "ratio_of_sums", "n_excluded")

    def column(self, name: str) -> np.ndarray:
        return np.asarray([r[name] for r in self.rows])

    def filter(self, **kv) -> "SweepTable":
        rows = tuple(r for r in self.rows if all(r[k] == v for k, v in kv.items()))
        return SweepTable(rows)

    def to_csv(self, path) -> None:
        with open(path, "w") as f:
            f.write(",".join(self.COLUMNS) + "\n")
            for r in self.rows:
                f.write(
                    ",".join(
                        "full" if r[c] is None else f"{r[c]:.17g}" if isinstance(r[c], float) else str(r[c])
                        for c in self.COLUMNS
                    )
                    + "\n"
                )


def rank_mode_sweep(
    cloud: PointCloud,
    k_list,
    rank_list,
    sigma_list,
    reference: ScoreModel,
    n_probe: int = 256,
    seed: int = 0,
    batch: int = DEFAULT_BATCH,
    max_iter: int = DEFAULT_MAX_ITER,
) -> SweepTable:
    """Fraction of unexplained variance of fitted GMMs against a reference.

    Fits once per (K, rank); probes are drawn from N(0, sigma^2 I) with a
    per-sigma seed, so every (K, rank) cell at the same sigma sees identical
    probes. Emits one long-format row per (K, rank, sigma).
    """
    from .analysis import unexplained_variance

    k_list = list(k_list)
    rank_list = list(rank_list)
    sigma_list = list(sigma_list)
    if not k_list or not rank_list or not sigma_list:
        raise InvalidInput("k_list, rank_list and sigma_list must be nonempty")

    probe_seeds = np.random.SeedSequence(seed).spawn(len(sigma_list))
    rows = []
    for k in k_list:
        km = minibatch_kmeans_full(cloud, k, batch, seed, max_iter)
        for rank in rank_list:
            model = gmm_from_assignments(cloud, km.assignments, rank)
            for j, sigma in enumerate(sigma_list):
                stats = unexplained_variance(
                    reference, model, sigma, n_probe, seed=probe_seeds[j]
                )
                rows.append(
                    {
                        "k": int(k),
                        "rank": None if rank is None else int(rank),
                        "sigma": float(sigma),
                        "mean_uv": stats.mean,
                        "q25": stats.q25,
                        "q75": stats.q75,
                        "ratio_of_sums": stats.ratio_of_sums,
                        "n_excluded": stats.n_excluded,
                    }
                )
    return SweepTable(tuple(rows))


def minimal_sufficient_rank(table: SweepTable, k: int, sigma: float, slack: float = 0.10):
    """Smallest rank whose residual stays within ``slack`` of the full-rank
    (largest-rank) residual at the given (K, sigma) cell."""
    sub = table.filter(k=k, sigma=float(sigma))
    if not sub.rows:
        raise InvalidInput(f"no sweep rows for k={k}, sigma={sigma}")
    ranked = sorted(sub.rows, key=lambda r: np.inf if r["rank"] is None else r["rank"])
    full = ranked[-1]["mean_uv"]
    for r in ranked:
        if r["mean_uv"] <= (1.0 + slack) * full:
            return r["rank"]
    return ranked[-1]["rank"]
