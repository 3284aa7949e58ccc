from __future__ import annotations

import math

import numpy as np
import pytest

from src.core.errors import InterpolationError, SamplingError, SizeError
from src.core.types import Sinogram, uniform_angles
from src.sino.pipeline import (
    NoiseSpec,
    crop_views,
    interpolate_views,
    pad_array,
    pad_views,
    poisson_noise,
    sparse_sample,
)


def _sino(views: int, detectors: int = 8, rng: np.random.Generator | None = None) -> Sinogram:
    gen = rng or np.random.default_rng(0)
    return Sinogram(angles=uniform_angles(views), samples=gen.uniform(0.0, 2.0, size=(views, detectors)))


class TestSparseSample:
    def test_180_to_45(self):
        sparse = sparse_sample(_sino(180), 45)
        np.testing.assert_allclose(sparse.angles, np.arange(0.0, 180.0, 4.0))

    def test_180_to_10(self):
        sparse = sparse_sample(_sino(180), 10)
        assert sparse.angles[0] == 0.0 and sparse.angles[-1] == pytest.approx(162.0)

    def test_identity_and_non_divisor(self):
        full = _sino(12)
        np.testing.assert_array_equal(sparse_sample(full, 12).samples, full.samples)
        with pytest.raises(SamplingError):
            sparse_sample(full, 5)


class TestPoissonNoise:
    def test_zero_attenuation_is_nearly_exact(self):
        sino = Sinogram(angles=uniform_angles(4), samples=np.zeros((4, 64)))
        noisy = poisson_noise(sino, NoiseSpec(seed=1))
        # |p'| ~ |k - I0| / I0, a few 1e-4 at most
        assert np.max(np.abs(noisy.samples)) < 1e-3

    def test_deterministic(self):
        sino = _sino(10)
        spec = NoiseSpec(incident_photons=1e4, mu_scale=2.0, seed=99)
        np.testing.assert_array_equal(poisson_noise(sino, spec).samples, poisson_noise(sino, spec).samples)

    def test_variance_matches_delta_method(self):
        i0 = 2e7
        sino = Sinogram(angles=uniform_angles(100), samples=np.full((100, 1000), 2.0))
        noisy = poisson_noise(sino, NoiseSpec(incident_photons=i0, mu_scale=1.0, seed=5))
        assert np.var(noisy.samples) == pytest.approx(math.exp(2.0) / i0, rel=0.05)

    def test_low_counts_use_exact_draws(self):
        # lambda = 20 * e^-1 ~ 7.4, well inside the inversion branch
        sino = Sinogram(angles=uniform_angles(50), samples=np.full((50, 200), 1.0))
        noisy = poisson_noise(sino, NoiseSpec(incident_photons=20.0, seed=2))
        counts = 20.0 * np.exp(-noisy.samples)
        np.testing.assert_allclose(counts, np.rint(counts), atol=1e-9)
        assert counts.min() >= 1.0
        assert np.mean(counts) == pytest.approx(20.0 * math.exp(-1.0), rel=0.05)


class TestInterpolateViews:
    def test_midpoint(self):
        sparse = Sinogram(angles=[0.0, 4.0], samples=np.array([[1.0, 3.0], [3.0, 5.0]]))
        out = interpolate_views(sparse, [0.0, 2.0, 4.0])
        np.testing.assert_allclose(out.samples[1], [2.0, 4.0])

    def test_identity_on_source_angles(self):
        sparse = _sino(9)
        np.testing.assert_array_equal(interpolate_views(sparse, sparse.angles).samples, sparse.samples)

    def test_wrap_uses_flipped_first_view(self):
        angles = np.arange(0.0, 180.0, 4.0)
        samples = np.zeros((45, 3))
        samples[0] = [1.0, 2.0, 3.0]
        samples[-1] = [5.0, 5.0, 5.0]
        out = interpolate_views(Sinogram(angles=angles, samples=samples), [178.0])
        np.testing.assert_allclose(out.samples[0], 0.5 * np.array([5.0, 5.0, 5.0]) + 0.5 * np.array([3.0, 2.0, 1.0]))

    def test_exact_for_linear_in_angle(self):
        full_angles = uniform_angles(40)
        slope = np.linspace(-1.0, 1.0, 6)
        full = Sinogram(angles=full_angles, samples=np.outer(full_angles, slope))
        sparse = sparse_sample(full, 10)
        out = interpolate_views(sparse, full_angles[:37])
        np.testing.assert_allclose(out.samples, full.samples[:37], atol=1e-12)

    def test_stride_one_chain_is_identity(self):
        full = _sino(16)
        np.testing.assert_array_equal(interpolate_views(sparse_sample(full, 16), full.angles).samples, full.samples)

    def test_needs_two_views(self):
        with pytest.raises(InterpolationError):
            interpolate_views(Sinogram(angles=[0.0], samples=np.ones((1, 4))), [0.0, 90.0])


class TestPadCrop:
    def test_180_to_192_appends_flipped_leading_views(self):
        full = _sino(180, 5)
        padded = pad_views(full, 192)
        assert padded.views == 192
        np.testing.assert_array_equal(padded.samples[180:], full.samples[:12, ::-1])
        np.testing.assert_allclose(padded.angles[180:], full.angles[:12] + 180.0)

    def test_crop_inverts_pad(self):
        full = _sino(180, 5)
        back = crop_views(pad_views(full, 192), 180)
        np.testing.assert_array_equal(back.samples, full.samples)
        np.testing.assert_array_equal(back.angles, full.angles)

    def test_same_count_is_identity(self):
        full = _sino(16)
        np.testing.assert_array_equal(pad_views(full, 16).samples, full.samples)

    def test_bare_array_matches(self):
        full = _sino(180, 5)
        np.testing.assert_array_equal(pad_array(full.samples, 192), pad_views(full, 192).samples)

    @pytest.mark.parametrize("target", [170, 200, 400])
    def test_invalid_targets(self, target):
        with pytest.raises(SizeError):
            pad_views(_sino(180, 5), target)
