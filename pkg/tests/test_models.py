import numpy as np
import pytest

from scorefield.errors import InvalidNoise, WrongVariant
from scorefield.models import (
    DeltaMixtureModel,
    GaussianComponent,
    GaussianModel,
    IsotropicModel,
    MixtureModel,
    delta_denoise,
    delta_score,
    gaussian_denoise,
    gaussian_score,
    gmm_score,
    iso_score,
    mixture_weights,
)
from scorefield.spectrum import CompactSpectrum, PointCloud, spectrum_from_cloud


def random_spectrum(seed, d, r, lam_range=(0.1, 4.0), mean_scale=1.0):
    rng = np.random.default_rng(seed)
    u, _ = np.linalg.qr(rng.standard_normal((d, max(r, 1))))
    lam = np.sort(rng.uniform(*lam_range, r))[::-1]
    return CompactSpectrum(mean_scale * rng.standard_normal(d), u[:, :r], lam)


def zero_cov_spectrum(mean):
    mean = np.asarray(mean, dtype=float)
    return CompactSpectrum(mean, np.zeros((mean.size, 0)), np.zeros(0))


class TestIsoScore:
    def test_zero_at_mean(self):
        mu = np.array([1.0, -2.0])
        np.testing.assert_array_equal(iso_score(mu, mu, 3.0), np.zeros(2))

    def test_hand_values(self):
        np.testing.assert_allclose(iso_score(np.zeros(2), [2.0, 0.0], 1.0), [-2.0, 0.0])
        np.testing.assert_allclose(iso_score(np.zeros(2), [2.0, 0.0], 2.0), [-0.5, 0.0])

    def test_sigma_validation(self):
        with pytest.raises(InvalidNoise):
            iso_score(np.zeros(2), np.zeros(2), 0.0)
        with pytest.raises(InvalidNoise):
            iso_score(np.zeros(2), np.zeros(2), -1.0)


class TestGaussianScore:
    def test_zero_at_mean(self):
        spec = random_spectrum(1, 5, 2)
        np.testing.assert_allclose(gaussian_score(spec, spec.mean, 0.7), np.zeros(5), atol=1e-14)

    def test_hand_value_via_dense_inverse(self):
        # mu = 0, Sigma = diag(3, 0), sigma = 1, x = (1, 1):
        # (sigma^2 I + Sigma)^-1 (mu - x) = diag(1/4, 1) (-1, -1) = (-1/4, -1)
        spec = CompactSpectrum(np.zeros(2), np.array([[1.0], [0.0]]), [3.0])
        np.testing.assert_allclose(gaussian_score(spec, [1.0, 1.0], 1.0), [-0.25, -1.0])

    def test_matches_dense_inverse(self):
        spec = random_spectrum(12, 7, 3)
        x = np.random.default_rng(5).standard_normal(7)
        sigma = 0.9
        dense = np.linalg.solve(sigma**2 * np.eye(7) + spec.covariance(), spec.mean - x)
        np.testing.assert_allclose(gaussian_score(spec, x, sigma), dense, rtol=1e-12, atol=1e-13)

    def test_rank0_reduces_to_iso(self):
        spec = zero_cov_spectrum([0.5, -1.0, 2.0])
        rng = np.random.default_rng(0)
        for _ in range(5):
            x = rng.standard_normal(3)
            sigma = rng.uniform(0.1, 10)
            np.testing.assert_array_equal(
                gaussian_score(spec, x, sigma), iso_score(spec.mean, x, sigma)
            )


class TestGaussianDenoise:
    def test_large_sigma_limit(self):
        spec = random_spectrum(2, 6, 3, lam_range=(0.2, 1.0))
        x = spec.mean + 3.0 * spec.basis[:, 0]
        out = gaussian_denoise(spec, x, 1e6)
        assert np.linalg.norm(out - spec.mean) < 1e-5

    def test_single_axis_shrinkage(self):
        spec = CompactSpectrum(np.array([1.0, 1.0]), np.array([[1.0], [0.0]]), [3.0])
        out = gaussian_denoise(spec, spec.mean + spec.basis[:, 0], 1.0)
        np.testing.assert_allclose(out, spec.mean + 0.75 * spec.basis[:, 0])

    def test_rank0_returns_mean(self):
        spec = zero_cov_spectrum([1.0, 2.0])
        np.testing.assert_array_equal(gaussian_denoise(spec, [5.0, -7.0], 0.3), spec.mean)


class TestMixtureWeights:
    def test_equidistant_symmetry(self):
        model = DeltaMixtureModel(PointCloud([[1.0, 0.0], [-1.0, 0.0]]))
        for sigma in (0.05, 1.0, 30.0):
            np.testing.assert_allclose(
                mixture_weights(model, [0.0, 5.0], sigma), [0.5, 0.5], atol=1e-15
            )

    def test_one_hot_at_small_sigma(self):
        model = DeltaMixtureModel(PointCloud([[1.0, 0.0], [-1.0, 0.0]]))
        w = mixture_weights(model, [1.0, 0.0], 0.1)
        # log-weight gap is 2 / (2 * 0.01) = 200, so w_2 = exp(-200) < 1e-20
        assert w[0] >= 1.0 - 1e-20
        assert w[1] < 1e-20

    def test_uniform_at_large_sigma(self):
        rng = np.random.default_rng(8)
        cloud = PointCloud(rng.standard_normal((7, 3)))
        model = DeltaMixtureModel(cloud)
        w = mixture_weights(model, rng.standard_normal(3), 1e4)
        np.testing.assert_allclose(w, np.full(7, 1.0 / 7), atol=1e-6)
        comps = tuple(
            GaussianComponent(1.0 / 3, random_spectrum(s, 3, 1)) for s in (1, 2, 3)
        )
        gmm = MixtureModel(comps)
        w = mixture_weights(gmm, rng.standard_normal(3), 1e4)
        np.testing.assert_allclose(w, np.full(3, 1.0 / 3), atol=1e-6)

    def test_log_space_safety(self):
        # separations up to 1e3 at sigma = 1e-6 stay finite via max subtraction
        cloud = PointCloud([[0.0, 0.0], [1e3, 0.0], [0.0, 1e3]])
        model = DeltaMixtureModel(cloud)
        w = mixture_weights(model, [1.0, 1.0], 1e-6)
        assert np.all(np.isfinite(w))
        np.testing.assert_allclose(w.sum(), 1.0, atol=1e-12)

    def test_wrong_variant(self):
        with pytest.raises(WrongVariant):
            mixture_weights(IsotropicModel(np.zeros(2)), np.zeros(2), 1.0)

    def test_weights_match_dense_densities(self):
        # oracle: multivariate normal log-densities via dense covariance
        comps = tuple(
            GaussianComponent(w, random_spectrum(s, 4, 2))
            for w, s in ((0.3, 21), (0.7, 22))
        )
        model = MixtureModel(comps)
        x = np.random.default_rng(1).standard_normal(4)
        sigma = 0.8
        logps = []
        for c in comps:
            cov = sigma**2 * np.eye(4) + c.spectrum.covariance()
            diff = x - c.spectrum.mean
            _, logdet = np.linalg.slogdet(cov)
            q = diff @ np.linalg.solve(cov, diff)
            logps.append(np.log(c.weight) - 0.5 * (4 * np.log(2 * np.pi) + logdet + q))
        logps = np.asarray(logps)
        expected = np.exp(logps - logps.max())
        expected /= expected.sum()
        np.testing.assert_allclose(mixture_weights(model, x, sigma), expected, rtol=1e-10)


class TestGmmScore:
    def test_single_mode_equals_gaussian(self):
        spec = random_spectrum(31, 5, 2)
        model = MixtureModel((GaussianComponent(1.0, spec),))
        x = np.random.default_rng(2).standard_normal(5)
        a = gmm_score(model, x, 1.3)
        b = gaussian_score(spec, x, 1.3)
        np.testing.assert_allclose(a, b, rtol=1e-14, atol=0)

    def test_two_isotropic_modes_hand_value(self):
        comps = (
            GaussianComponent(0.5, zero_cov_spectrum([1.0, 0.0])),
            GaussianComponent(0.5, zero_cov_spectrum([-1.0, 0.0])),
        )
        model = MixtureModel(comps)
        np.testing.assert_allclose(gmm_score(model, [0.0, 2.0], 1.0), [0.0, -2.0], atol=1e-14)

    def test_one_hot_regime_matches_component(self):
        comps = (
            GaussianComponent(0.5, random_spectrum(41, 4, 2, mean_scale=0.2)),
            GaussianComponent(
                0.5,
                CompactSpectrum(
                    np.array([50.0, 0.0, 0.0, 0.0]), np.zeros((4, 0)), np.zeros(0)
                ),
            ),
        )
        model = MixtureModel(comps)
        x = comps[0].spectrum.mean + 0.05
        sigma = 0.5
        w = mixture_weights(model, x, sigma)
        assert w[0] > 1 - 1e-12
        np.testing.assert_allclose(
            gmm_score(model, x, sigma),
            gaussian_score(comps[0].spectrum, x, sigma),
            atol=1e-10,
        )


class TestDeltaScore:
    def test_single_point(self):
        y = np.array([[2.0, 1.0]])
        cloud = PointCloud(y)
        for sigma in (0.3, 2.0):
            x = np.array([0.5, -0.5])
            np.testing.assert_allclose(
                delta_score(cloud, x, sigma), (y[0] - x) / sigma**2, rtol=1e-14
            )

    def test_symmetry_zero(self):
        cloud = PointCloud([[1.0, 0.0], [-1.0, 0.0]])
        np.testing.assert_allclose(delta_score(cloud, [0.0, 0.0], 1.0), np.zeros(2), atol=1e-15)

    def test_hand_value(self):
        cloud = PointCloud([[1.0, 0.0], [-1.0, 0.0]])
        np.testing.assert_allclose(delta_score(cloud, [0.0, 2.0], 1.0), [0.0, -2.0], rtol=1e-14)


class TestDeltaDenoise:
    def test_small_sigma_snaps_to_nearest(self):
        cloud = PointCloud([[0.0, 0.0], [1.0, 0.0]])
        out = delta_denoise(cloud, [0.2, 0.05], 1e-4)
        np.testing.assert_allclose(out, [0.0, 0.0], atol=1e-10)

    def test_large_sigma_pulls_to_mean(self):
        rng = np.random.default_rng(6)
        cloud = PointCloud(rng.standard_normal((9, 4)))
        out = delta_denoise(cloud, rng.standard_normal(4), 1e5)
        np.testing.assert_allclose(out, cloud.data.mean(axis=0), atol=1e-6)

    def test_bisector_midpoint(self):
        cloud = PointCloud([[1.0, 0.0], [-1.0, 0.0]])
        np.testing.assert_allclose(delta_denoise(cloud, [0.0, 3.0], 0.7), [0.0, 0.0], atol=1e-15)

    def test_convex_hull_box(self):
        rng = np.random.default_rng(13)
        cloud = PointCloud(rng.uniform(-1, 1, (20, 3)))
        for sigma in (0.01, 0.5, 50.0):
            out = delta_denoise(cloud, rng.standard_normal(3) * 3, sigma)
            assert np.all(out >= cloud.data.min(axis=0) - 1e-12)
            assert np.all(out <= cloud.data.max(axis=0) + 1e-12)


def all_models(seed=17, d=5):
    rng = np.random.default_rng(seed)
    cloud = PointCloud(rng.standard_normal((8, d)))
    spec = spectrum_from_cloud(cloud)
    comps = tuple(
        GaussianComponent(w, random_spectrum(s, d, 2))
        for w, s in ((0.25, 101), (0.75, 102))
    )
    return [
        IsotropicModel(rng.standard_normal(d)),
        GaussianModel(spec),
        MixtureModel(comps),
        DeltaMixtureModel(cloud),
    ]


class TestInvariants:
    def test_denoiser_score_duality(self):
        # D(x, sigma) = x + sigma^2 s(x, sigma) for every variant
        rng = np.random.default_rng(23)
        for model in all_models():
            for _ in range(100):
                x = 3.0 * rng.standard_normal(model.dim)
                sigma = float(rng.uniform(0.05, 20.0))
                lhs = model.denoise(x, sigma)
                rhs = x + sigma**2 * model.score(x, sigma)
                scale = max(np.linalg.norm(lhs), 1e-12)
                assert np.linalg.norm(lhs - rhs) / scale < 1e-10

    def test_reduction_k1_equals_gaussian(self):
        spec = random_spectrum(51, 6, 3)
        mix = MixtureModel((GaussianComponent(1.0, spec),))
        gauss = GaussianModel(spec)
        rng = np.random.default_rng(3)
        for _ in range(100):
            x = rng.standard_normal(6) * 2
            sigma = float(rng.uniform(0.1, 10))
            np.testing.assert_allclose(
                mix.score(x, sigma), gauss.score(x, sigma), rtol=1e-10, atol=1e-14
            )

    def test_reduction_zero_cov_mixture_equals_delta(self):
        rng = np.random.default_rng(29)
        cloud = PointCloud(rng.standard_normal((6, 3)))
        delta = DeltaMixtureModel(cloud)
        comps = tuple(
            GaussianComponent(1.0 / 6, zero_cov_spectrum(y)) for y in cloud.data
        )
        mix = MixtureModel(comps)
        for _ in range(100):
            x = rng.standard_normal(3) * 2
            sigma = float(rng.uniform(0.1, 10))
            a, b = mix.score(x, sigma), delta.score(x, sigma)
            assert np.linalg.norm(a - b) <= 1e-10 * max(np.linalg.norm(b), 1.0)

    def test_reduction_rank0_equals_isotropic(self):
        mu = np.array([0.3, -0.6, 1.1])
        gauss = GaussianModel(zero_cov_spectrum(mu))
        iso = IsotropicModel(mu)
        rng = np.random.default_rng(31)
        for _ in range(100):
            x = rng.standard_normal(3)
            sigma = float(rng.uniform(0.1, 10))
            np.testing.assert_allclose(gauss.score(x, sigma), iso.score(x, sigma), rtol=1e-10)

    def test_far_field_convergence(self):
        rng = np.random.default_rng(37)
        cloud = PointCloud(rng.standard_normal((50, 8)))
        delta = DeltaMixtureModel(cloud)
        gauss = GaussianModel.from_cloud(cloud)
        tr = gauss.spectrum.total_variance
        z = rng.standard_normal((64, 8))
        prev = np.inf
        for c in (1, 2, 5, 10, 20, 50):
            sigma = c * np.sqrt(tr)
            x = sigma * z
            s_ref = delta.score(x, sigma)
            s_app = gauss.score(x, sigma)
            num = np.einsum("md,md->m", s_ref - s_app, s_ref - s_app)
            den = np.einsum("md,md->m", s_ref, s_ref)
            uv = float(np.mean(num / den))
            assert uv < prev
            if c == 10:
                assert uv < 1e-3
            prev = uv


class TestBatchEvaluation:
    def test_batch_rows_match_single_calls_bitwise(self):
        rng = np.random.default_rng(43)
        for model in all_models():
            x = rng.standard_normal((17, model.dim))
            for sigma in (0.2, 3.0):
                batch_s = model.score(x, sigma)
                batch_d = model.denoise(x, sigma)
                for i in range(x.shape[0]):
                    np.testing.assert_array_equal(batch_s[i], model.score(x[i], sigma))
                    np.testing.assert_array_equal(batch_d[i], model.denoise(x[i], sigma))

    def test_batch_weights_match_single(self):
        rng = np.random.default_rng(44)
        cloud = PointCloud(rng.standard_normal((10, 4)))
        model = DeltaMixtureModel(cloud)
        x = rng.standard_normal((300, 4))  # spans multiple chunks
        w = mixture_weights(model, x, 0.7)
        for i in (0, 128, 255, 299):
            np.testing.assert_array_equal(w[i], mixture_weights(model, x[i], 0.7))


class TestValidation:
    def test_mixture_weight_sum_enforced(self):
        comps = (
            GaussianComponent(0.5, zero_cov_spectrum([0.0])),
            GaussianComponent(0.6, zero_cov_spectrum([1.0])),
        )
        with pytest.raises(Exception):
            MixtureModel(comps)

    def test_sigma_zero_rejected_everywhere(self):
        for model in all_models():
            with pytest.raises(InvalidNoise):
                model.score(np.zeros(model.dim), 0.0)
