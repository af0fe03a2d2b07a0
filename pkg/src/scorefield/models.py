"""Idealized score models: isotropic, Gaussian, Gaussian mixture, delta mixture.

Each model evaluates the score ``s(x, sigma)`` of its noise-corrupted
distribution and the matching optimal denoiser ``D(x, sigma) = x + sigma^2 s``.
All operations accept a single query point of shape (D,) or a batch of shape
(M, D); every output row is a pure function of its input row, so batched and
single-point calls agree bitwise.

Mixture weights are always computed in log space with max subtraction; the
softmax of Gaussian log-densities otherwise underflows catastrophically at
small sigma. Gaussian log-densities never touch a D x D matrix: with the
compact spectrum ``Sigma = U diag(lam) U^T``,

    log det(sigma^2 I + Sigma) = (D - r) log sigma^2 + sum_k log(lam_k + sigma^2)
    (x-mu)^T (sigma^2 I + Sigma)^-1 (x-mu)
        = (|x-mu|^2 - sum_k lam_k/(lam_k + sigma^2) c_k^2) / sigma^2

with ``c = U^T (x - mu)``.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass

import numpy as np

from .errors import EmptyInput, InvalidData, InvalidNoise, ShapeError, WrongVariant
from .spectrum import (
    CompactSpectrum,
    PointCloud,
    load_cloud,
    spectrum_from_cloud,
    spectrum_from_json,
    spectrum_to_json,
)

__all__ = [
    "ScoreModel",
    "IsotropicModel",
    "GaussianModel",
    "GaussianComponent",
    "MixtureModel",
    "DeltaMixtureModel",
    "iso_score",
    "gaussian_score",
    "gaussian_denoise",
    "mixture_weights",
    "gmm_score",
    "gmm_denoise",
    "delta_score",
    "delta_denoise",
    "model_fingerprint",
    "model_to_json",
    "model_from_json",
    "save_model",
    "load_model",
]

# Row chunk for batched mixture evaluations; bounds the (chunk, K, D) buffer
# without changing per-row results.
_CHUNK = 256


def _check_sigma(sigma) -> float:
    sigma = float(sigma)
    if not np.isfinite(sigma) or sigma <= 0:
        raise InvalidNoise(f"sigma must be positive and finite, got {sigma}")
    return sigma


def _as_batch(x, dim: int) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != dim:
        raise ShapeError(f"query points must have dimension {dim}, got shape {x.shape}")
    return x, single


def _project(x: np.ndarray, basis: np.ndarray) -> np.ndarray:
    # einsum keeps each output element an independent contiguous reduction,
    # so results do not depend on the batch size.
    return np.einsum("md,dr->mr", x, basis)


def _lift(c: np.ndarray, basis: np.ndarray) -> np.ndarray:
    return np.einsum("mr,dr->md", c, basis)


def _sq_norm_rows(x: np.ndarray) -> np.ndarray:
    return np.einsum("md,md->m", x, x)


# ---------------------------------------------------------------------------
# Core score / denoiser formulas (batched)
# ---------------------------------------------------------------------------

def iso_score(mean, x, sigma):
    """Isotropic score (mean - x) / sigma^2; the covariance-free model."""
    sigma = _check_sigma(sigma)
    mean = np.asarray(mean, dtype=np.float64).reshape(-1)
    xb, single = _as_batch(x, mean.size)
    out = (mean - xb) / sigma**2
    return out[0] if single else out


def gaussian_score(spec: CompactSpectrum, x, sigma):
    """Score of N(mean, Sigma + sigma^2 I) in Woodbury form.

    Evaluates ``(1/sigma^2) (I - U diag[lam/(lam+sigma^2)] U^T)(mean - x)``
    in O(D r) per query; no D x D matrix is ever formed. With r = 0 this
    reduces to the isotropic score.
    """
    sigma = _check_sigma(sigma)
    xb, single = _as_batch(x, spec.dim)
    diff = spec.mean - xb
    out = diff / sigma**2
    if spec.rank:
        shrink = spec.eigenvalues / (spec.eigenvalues + sigma**2)
        c = _project(diff, spec.basis)
        out = out - _lift(c * shrink, spec.basis) / sigma**2
    return out[0] if single else out


def gaussian_denoise(spec: CompactSpectrum, x, sigma):
    """Optimal denoiser mean + U diag[lam/(lam+sigma^2)] U^T (x - mean)."""
    sigma = _check_sigma(sigma)
    xb, single = _as_batch(x, spec.dim)
    out = np.broadcast_to(spec.mean, xb.shape).copy()
    if spec.rank:
        shrink = spec.eigenvalues / (spec.eigenvalues + sigma**2)
        c = _project(xb - spec.mean, spec.basis)
        out = out + _lift(c * shrink, spec.basis)
    return out[0] if single else out


def _gaussian_log_density(spec: CompactSpectrum, xb: np.ndarray, sigma: float) -> np.ndarray:
    """log N(x; mean, sigma^2 I + Sigma) per row, via the spectral identities."""
    d = spec.dim
    diff = xb - spec.mean
    quad = _sq_norm_rows(diff)
    logdet = d * 2.0 * np.log(sigma)
    if spec.rank:
        shrink = spec.eigenvalues / (spec.eigenvalues + sigma**2)
        c = _project(diff, spec.basis)
        quad = quad - np.einsum("mr,r->m", c**2, shrink)
        logdet = (d - spec.rank) * 2.0 * np.log(sigma) + np.sum(
            np.log(spec.eigenvalues + sigma**2)
        )
    return -0.5 * (d * np.log(2.0 * np.pi) + logdet + quad / sigma**2)


def _softmax_rows(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    w = np.exp(shifted)
    return w / w.sum(axis=1, keepdims=True)


def delta_score(cloud: PointCloud, x, sigma):
    """Exact score of a finite point cloud, (1/sigma^2)(sum_i w_i y_i - x)."""
    sigma = _check_sigma(sigma)
    if not isinstance(cloud, PointCloud):
        cloud = PointCloud(np.asarray(cloud))
    xb, single = _as_batch(x, cloud.dim)
    out = (_delta_denoise_batch(cloud, xb, sigma) - xb) / sigma**2
    return out[0] if single else out


def delta_denoise(cloud: PointCloud, x, sigma):
    """Softmax-weighted combination of training points (their convex hull)."""
    sigma = _check_sigma(sigma)
    if not isinstance(cloud, PointCloud):
        cloud = PointCloud(np.asarray(cloud))
    xb, single = _as_batch(x, cloud.dim)
    out = _delta_denoise_batch(cloud, xb, sigma)
    return out[0] if single else out


def _delta_log_weights(cloud: PointCloud, xb: np.ndarray, sigma: float) -> np.ndarray:
    # -|x - y_i|^2 / (2 sigma^2), computed from explicit differences: the
    # expanded |x|^2 - 2 x.y + |y|^2 form cancels catastrophically when the
    # softmax gaps matter most.
    diff = xb[:, None, :] - cloud.data[None, :, :]
    return -np.einsum("mnd,mnd->mn", diff, diff) / (2.0 * sigma**2)


def _delta_denoise_batch(cloud: PointCloud, xb: np.ndarray, sigma: float) -> np.ndarray:
    out = np.empty_like(xb)
    for lo in range(0, xb.shape[0], _CHUNK):
        chunk = xb[lo : lo + _CHUNK]
        w = _softmax_rows(_delta_log_weights(cloud, chunk, sigma))
        out[lo : lo + _CHUNK] = np.einsum("mn,nd->md", w, cloud.data)
    return out


# ---------------------------------------------------------------------------
# Model classes
# ---------------------------------------------------------------------------

class ScoreModel:
    """Evaluable score/denoiser field pair. Immutable and shareable."""

    variant = "base"
    dim: int

    def score(self, x, sigma):
        raise NotImplementedError

    def denoise(self, x, sigma):
        raise NotImplementedError


@dataclass(frozen=True)
class IsotropicModel(ScoreModel):
    """All structure reduced to the data mean; s(x, sigma) = (mean - x)/sigma^2."""

    mean: np.ndarray
    variant = "isotropic"

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64).reshape(-1)
        mean.setflags(write=False)
        object.__setattr__(self, "mean", mean)

    @property
    def dim(self) -> int:
        return self.mean.size

    def score(self, x, sigma):
        return iso_score(self.mean, x, sigma)

    def denoise(self, x, sigma):
        _check_sigma(sigma)
        xb, single = _as_batch(x, self.dim)
        out = np.broadcast_to(self.mean, xb.shape).copy()
        return out[0] if single else out


@dataclass(frozen=True)
class GaussianModel(ScoreModel):
    """Single Gaussian with a compact (possibly low-rank) spectrum."""

    spectrum: CompactSpectrum
    variant = "gaussian"

    @property
    def dim(self) -> int:
        return self.spectrum.dim

    @classmethod
    def from_cloud(cls, cloud: PointCloud, max_rank: int | None = None) -> "GaussianModel":
        return cls(spectrum_from_cloud(cloud, max_rank))

    def score(self, x, sigma):
        return gaussian_score(self.spectrum, x, sigma)

    def denoise(self, x, sigma):
        return gaussian_denoise(self.spectrum, x, sigma)


@dataclass(frozen=True)
class GaussianComponent:
    """One mixture mode: positive weight plus its compact spectrum."""

    weight: float
    spectrum: CompactSpectrum

    def __post_init__(self):
        if not (self.weight > 0):
            raise InvalidData(f"component weight must be > 0, got {self.weight}")


@dataclass(frozen=True)
class MixtureModel(ScoreModel):
    """Gaussian mixture; weights must sum to 1 within 1e-12."""

    components: tuple[GaussianComponent, ...]
    variant = "mixture"

    def __post_init__(self):
        comps = tuple(self.components)
        if not comps:
            raise EmptyInput("mixture needs at least one component")
        total = sum(c.weight for c in comps)
        if abs(total - 1.0) > 1e-12:
            raise InvalidData(f"mixture weights sum to {total}, expected 1")
        dims = {c.spectrum.dim for c in comps}
        if len(dims) != 1:
            raise ShapeError(f"components disagree on dimension: {sorted(dims)}")
        object.__setattr__(self, "components", comps)

    @property
    def dim(self) -> int:
        return self.components[0].spectrum.dim

    @property
    def n_components(self) -> int:
        return len(self.components)

    def score(self, x, sigma):
        return gmm_score(self, x, sigma)

    def denoise(self, x, sigma):
        return gmm_denoise(self, x, sigma)


@dataclass(frozen=True)
class DeltaMixtureModel(ScoreModel):
    """Exact score of the training set: equal point masses at the samples."""

    cloud: PointCloud
    variant = "delta"

    def __post_init__(self):
        cloud = self.cloud
        if not isinstance(cloud, PointCloud):
            cloud = PointCloud(np.asarray(cloud))
            object.__setattr__(self, "cloud", cloud)

    @property
    def dim(self) -> int:
        return self.cloud.dim

    def score(self, x, sigma):
        return delta_score(self.cloud, x, sigma)

    def denoise(self, x, sigma):
        return delta_denoise(self.cloud, x, sigma)


# ---------------------------------------------------------------------------
# Mixture evaluation
# ---------------------------------------------------------------------------

def mixture_weights(model: ScoreModel, x, sigma):
    """Posterior component weights w_i(x, sigma), rows summing to 1.

    Mixture: softmax over ``log pi_i + log N(x; mu_i, sigma^2 I + Sigma_i)``.
    Delta mixture: softmax over ``-|x - y_i|^2 / (2 sigma^2)``.
    """
    sigma = _check_sigma(sigma)
    if isinstance(model, MixtureModel):
        xb, single = _as_batch(x, model.dim)
        logits = np.empty((xb.shape[0], model.n_components))
        for i, comp in enumerate(model.components):
            logits[:, i] = np.log(comp.weight) + _gaussian_log_density(
                comp.spectrum, xb, sigma
            )
        w = _softmax_rows(logits)
    elif isinstance(model, DeltaMixtureModel):
        xb, single = _as_batch(x, model.dim)
        w = np.empty((xb.shape[0], model.cloud.n_samples))
        for lo in range(0, xb.shape[0], _CHUNK):
            chunk = xb[lo : lo + _CHUNK]
            w[lo : lo + _CHUNK] = _softmax_rows(
                _delta_log_weights(model.cloud, chunk, sigma)
            )
    else:
        raise WrongVariant(f"mixture_weights needs a mixture variant, got {model.variant!r}")
    return w[0] if single else w


def gmm_score(model: MixtureModel, x, sigma):
    """Weighted sum of per-component Gaussian scores; K = 1 equals gaussian_score."""
    if not isinstance(model, MixtureModel):
        raise WrongVariant(f"gmm_score needs a mixture, got {getattr(model, 'variant', type(model))!r}")
    sigma = _check_sigma(sigma)
    xb, single = _as_batch(x, model.dim)
    if model.n_components == 1:
        out = gaussian_score(model.components[0].spectrum, xb, sigma)
        return out[0] if single else out
    w = mixture_weights(model, xb, sigma)
    out = np.zeros_like(xb)
    for i, comp in enumerate(model.components):
        out += w[:, i : i + 1] * gaussian_score(comp.spectrum, xb, sigma)
    return out[0] if single else out


def gmm_denoise(model: MixtureModel, x, sigma):
    """Weighted sum of per-component optimal denoisers."""
    if not isinstance(model, MixtureModel):
        raise WrongVariant(f"gmm_denoise needs a mixture, got {getattr(model, 'variant', type(model))!r}")
    sigma = _check_sigma(sigma)
    xb, single = _as_batch(x, model.dim)
    if model.n_components == 1:
        out = gaussian_denoise(model.components[0].spectrum, xb, sigma)
        return out[0] if single else out
    w = mixture_weights(model, xb, sigma)
    out = np.zeros_like(xb)
    for i, comp in enumerate(model.components):
        out += w[:, i : i + 1] * gaussian_denoise(comp.spectrum, xb, sigma)
    return out[0] if single else out


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def model_to_json(model: ScoreModel, cloud_path: str | None = None) -> dict:
    """JSON form of a model. Delta mixtures serialize by reference to a
    point-cloud file path, which must be supplied."""
    if isinstance(model, IsotropicModel):
        return {"kind": "isotropic", "mean": model.mean.tolist()}
    if isinstance(model, GaussianModel):
        return {"kind": "gaussian", **spectrum_to_json(model.spectrum)}
    if isinstance(model, MixtureModel):
        return {
            "kind": "mixture",
            "components": [
                {"weight": c.weight, **spectrum_to_json(c.spectrum)}
                for c in model.components
            ],
        }
    if isinstance(model, DeltaMixtureModel):
        if cloud_path is None:
            raise InvalidData("delta models serialize by cloud file reference; pass cloud_path")
        return {"kind": "delta", "cloud_path": str(cloud_path)}
    raise WrongVariant(f"cannot serialize model variant {model.variant!r}")


def model_from_json(obj: dict, base_dir: str | None = None) -> ScoreModel:
    kind = obj.get("kind", "mixture" if "components" in obj else None)
    if kind == "isotropic":
        return IsotropicModel(np.asarray(obj["mean"], dtype=np.float64))
    if kind == "gaussian":
        return GaussianModel(spectrum_from_json(obj))
    if kind == "mixture":
        comps = tuple(
            GaussianComponent(float(c["weight"]), spectrum_from_json(c))
            for c in obj["components"]
        )
        return MixtureModel(comps)
    if kind == "delta":
        path = obj["cloud_path"]
        if base_dir is not None and not os.path.isabs(path):
            path = os.path.join(base_dir, path)
        return DeltaMixtureModel(load_cloud(path))
    raise WrongVariant(f"unknown model kind {kind!r}")


def model_fingerprint(model: ScoreModel) -> str:
    """Stable sha256 over the model's defining arrays, for output sidecars."""
    h = hashlib.sha256(model.variant.encode())
    if isinstance(model, IsotropicModel):
        h.update(model.mean.tobytes())
    elif isinstance(model, GaussianModel):
        for arr in (model.spectrum.mean, model.spectrum.eigenvalues, model.spectrum.basis):
            h.update(np.ascontiguousarray(arr).tobytes())
    elif isinstance(model, MixtureModel):
        for c in model.components:
            h.update(np.float64(c.weight).tobytes())
            for arr in (c.spectrum.mean, c.spectrum.eigenvalues, c.spectrum.basis):
                h.update(np.ascontiguousarray(arr).tobytes())
    elif isinstance(model, DeltaMixtureModel):
        h.update(model.cloud.data.tobytes())
    return h.hexdigest()


def save_model(model: ScoreModel, path, cloud_path: str | None = None) -> None:
    with open(path, "w") as f:
        json.dump(model_to_json(model, cloud_path), f)


def load_model(path) -> ScoreModel:
    with open(path) as f:
        obj = json.load(f)
    return model_from_json(obj, base_dir=os.path.dirname(os.path.abspath(path)))
