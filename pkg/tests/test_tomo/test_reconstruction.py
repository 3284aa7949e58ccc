from __future__ import annotations

import numpy as np
import pytest

from src.core.errors import GeometryError, SizeError
from src.core.phantom import Ellipse, inscribed_mask, make_phantom, render_ellipses
from src.core.types import Image, PhantomSpec, Sinogram, uniform_angles
from src.objectives.metrics import masked, psnr, ssim_value
from src.tomo.fbp import FbpOperator, angular_weights, fbp, ramp_filter
from src.tomo.fft import fft, ifft
from src.tomo.geometry import Geometry, SartConfig
from src.tomo.projector import JosephProjector, backproject_adjoint, radon_forward
from src.tomo.sart import sart_sweep, sart_tv


@pytest.fixture(scope="module")
def shepp_logan() -> Image:
    return make_phantom(PhantomSpec(kind="shepp-logan", size=64))


class TestFft:
    def test_impulse_has_flat_spectrum(self):
        np.testing.assert_allclose(fft(np.array([1.0, 0.0, 0.0, 0.0])), [0.5, 0.5, 0.5, 0.5], atol=1e-15)

    def test_round_trip_and_parseval(self, rng):
        x = rng.normal(size=256) + 1j * rng.normal(size=256)
        assert np.max(np.abs(ifft(fft(x)) - x)) < 1e-10
        assert np.sum(np.abs(x) ** 2) == pytest.approx(np.sum(np.abs(fft(x)) ** 2), rel=1e-10)

    def test_length_must_be_power_of_two(self):
        with pytest.raises(SizeError):
            fft(np.zeros(12))


class TestProjector:
    def test_zero_image(self):
        sino = radon_forward(Image(pixels=np.zeros((16, 16))), uniform_angles(8))
        assert sino.samples.shape == (8, 16)
        assert not sino.samples.any()

    @pytest.mark.parametrize("angle", [0.0, 30.0, 45.0, 90.0, 135.0])
    def test_centered_disk_matches_chord(self, angle):
        # radius 0.5 in normalized units = 16 px on a 64 grid
        img = Image(pixels=render_ellipses([Ellipse(0.0, 0.0, 0.5, 0.5, 0.0, 1.0)], 64))
        profile = radon_forward(img, [angle]).samples[0]
        s = np.arange(64) - 31.5
        chord = 2.0 * np.sqrt(np.clip(16.0**2 - s**2, 0.0, None))
        central = slice(24, 40)
        assert np.sqrt(np.mean((profile[central] - chord[central]) ** 2)) / 32.0 < 0.02
        assert profile[31] == pytest.approx(chord[31], rel=0.02)

    def test_radial_profiles_agree_across_angles(self):
        coords = np.arange(64) - 31.5
        r2 = coords[None, :] ** 2 + coords[:, None] ** 2
        img = Image(pixels=np.exp(-r2 / (2 * 6.0**2)))
        sino = radon_forward(img, uniform_angles(12))
        spread = np.sqrt(np.mean((sino.samples - sino.samples.mean(axis=0)) ** 2))
        assert spread / sino.samples.max() < 1e-2

    def test_adjointness(self, rng):
        geometry = Geometry.create(32, uniform_angles(20))
        op = JosephProjector(geometry)
        x = rng.normal(size=(32, 32))
        y = rng.normal(size=(20, 32))
        lhs = float(np.sum(op.forward(x) * y))
        rhs = float(np.sum(x * op.adjoint(y)))
        assert lhs == pytest.approx(rhs, rel=1e-4)

    def test_backproject_adjoint_shape(self):
        sino = Sinogram(angles=uniform_angles(4), samples=np.ones((4, 16)))
        assert backproject_adjoint(sino, 16).pixels.shape == (16, 16)

    def test_non_square_image_rejected(self):
        with pytest.raises(GeometryError):
            radon_forward(Image(pixels=np.zeros((16, 8))), [0.0])


class TestFbp:
    @pytest.mark.parametrize("detectors,length", [(8, 64), (32, 64), (33, 128), (100, 256)])
    def test_ramp_length_has_a_floor(self, detectors, length):
        response = ramp_filter(detectors)
        assert response.shape == (length,)
        assert response[0] == pytest.approx(0.0, abs=1e-2)

    def test_round_trip_psnr(self, shepp_logan):
        sino = radon_forward(shepp_logan, uniform_angles(180))
        recon = fbp(sino, 64).pixels
        mask = inscribed_mask(64)
        assert psnr(masked(recon, mask), masked(shepp_logan.pixels, mask), 1.0) >= 25.0

    def test_zero_sinogram(self):
        sino = Sinogram(angles=uniform_angles(10), samples=np.zeros((10, 16)))
        assert not fbp(sino, 16).pixels.any()

    def test_linearity(self, shepp_logan):
        angles = uniform_angles(45)
        base = fbp(radon_forward(shepp_logan, angles), 64).pixels
        scaled = fbp(radon_forward(Image(pixels=3.0 * shepp_logan.pixels), angles), 64).pixels
        np.testing.assert_allclose(scaled, 3.0 * base, rtol=1e-5, atol=1e-12)

    def test_outside_circle_is_zero(self, shepp_logan):
        recon = fbp(radon_forward(shepp_logan, uniform_angles(30)), 64, "hann").pixels
        assert np.all(recon[~inscribed_mask(64)] == 0.0)

    def test_detector_mismatch_and_empty(self):
        with pytest.raises(GeometryError):
            fbp(Sinogram(angles=uniform_angles(4), samples=np.zeros((4, 16))), 32)
        with pytest.raises(GeometryError):
            fbp(Sinogram(angles=np.zeros(0), samples=np.zeros((0, 16))), 16)

    def test_uniform_angular_weights(self):
        np.testing.assert_allclose(angular_weights(uniform_angles(180)), np.full(180, np.pi / 180))

    def test_operator_adjoint(self, rng):
        op = FbpOperator(Geometry.create(16, uniform_angles(8)))
        x = rng.normal(size=(8, 16))
        y = rng.normal(size=(16, 16))
        assert float(np.sum(op.forward(x) * y)) == pytest.approx(float(np.sum(x * op.adjoint(y))), rel=1e-9)


class TestSart:
    def test_single_pixel_update(self):
        ident = lambda v: v  # noqa: E731
        x = sart_sweep(np.zeros(1), np.array([2.0]), ident, ident, np.ones(1), np.ones(1), 0.2)
        np.testing.assert_allclose(x, [0.4])

    def test_zero_sinogram_fixed_point(self):
        sino = Sinogram(angles=uniform_angles(6), samples=np.zeros((6, 16)))
        assert not sart_tv(sino, 16, SartConfig(iters=3, tv_maxit=5)).pixels.any()

    def test_residual_non_increasing(self, shepp_logan):
        angles = uniform_angles(45)
        sino = radon_forward(shepp_logan, angles)
        op = JosephProjector(Geometry.create(64, angles))
        residuals: list[float] = []
        sart_tv(
            sino,
            64,
            SartConfig(iters=10, tv_w=0.0),
            on_iteration=lambda _, x: residuals.append(float(np.linalg.norm(sino.samples - op.forward(x)))),
        )
        assert len(residuals) == 10
        assert all(b <= a + 1e-9 for a, b in zip(residuals, residuals[1:]))

    @pytest.mark.slow
    def test_sart_tv_beats_fbp_on_sparse_views(self, shepp_logan):
        sino = radon_forward(shepp_logan, uniform_angles(45))
        mask = inscribed_mask(64)
        truth = masked(shepp_logan.pixels, mask)
        s_sart = ssim_value(masked(sart_tv(sino, 64, SartConfig()).pixels, mask), truth)
        s_fbp = ssim_value(masked(fbp(sino, 64).pixels, mask), truth)
        assert s_sart > s_fbp
