from __future__ import annotations

import math

import numpy as np
import pytest

from src.core.errors import FormatError, ShapeError
from src.autodiff.tensor import Tensor
from src.objectives import losses
from src.objectives.losses import LossWeights, SsimConfig
from src.objectives.metrics import (
    CSV_COLUMNS,
    MetricsRecord,
    psnr,
    read_metrics_csv,
    ssim_value,
    summarize,
    write_metrics_csv,
)


def _naive_ssim(x: np.ndarray, y: np.ndarray, cfg: SsimConfig) -> float:
    w = losses.gaussian_window(cfg.window, cfg.sigma)
    c1 = (cfg.k1 * cfg.data_range) ** 2
    c2 = (cfg.k2 * cfg.data_range) ** 2
    k = cfg.window
    values = []
    for i in range(x.shape[0] - k + 1):
        for j in range(x.shape[1] - k + 1):
            a, b = x[i:i + k, j:j + k], y[i:i + k, j:j + k]
            mx, my = np.sum(w * a), np.sum(w * b)
            vx = np.sum(w * a * a) - mx * mx
            vy = np.sum(w * b * b) - my * my
            cov = np.sum(w * a * b) - mx * my
            values.append(((2 * mx * my + c1) * (2 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2)))
    return float(np.mean(values))


def _t(values) -> Tensor:
    return Tensor(np.asarray(values, dtype=np.float64))


class TestPsnr:
    def test_twenty_db(self):
        y = np.zeros((10, 10))
        x = np.full((10, 10), 0.1)
        assert psnr(x, y, 1.0) == pytest.approx(20.0, abs=1e-12)

    def test_identical_is_infinite(self):
        x = np.ones((4, 4))
        assert psnr(x, x, 1.0) == math.inf

    def test_doubling_range_adds_six_db(self, rng):
        x, y = rng.normal(size=(8, 8)), rng.normal(size=(8, 8))
        assert psnr(x, y, 2.0) - psnr(x, y, 1.0) == pytest.approx(20.0 * math.log10(2.0))

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            psnr(np.zeros(3), np.zeros(4), 1.0)


class TestSsim:
    def test_self_similarity_is_one(self, rng):
        x = rng.uniform(size=(20, 20))
        assert ssim_value(x, x) == pytest.approx(1.0, abs=1e-12)

    def test_matches_windowed_oracle(self, rng):
        cfg = SsimConfig(window=5)
        x, y = rng.uniform(size=(14, 12)), rng.uniform(size=(14, 12))
        assert ssim_value(x, y, cfg) == pytest.approx(_naive_ssim(x, y, cfg), abs=1e-8)

    def test_loss_is_one_minus_ssim(self, rng):
        cfg = SsimConfig(window=5)
        x, y = rng.uniform(size=(1, 1, 9, 9)), rng.uniform(size=(1, 1, 9, 9))
        value = losses.ssim(_t(x), _t(y), cfg).item()
        assert losses.ssim_loss(_t(x), _t(y), cfg).item() == pytest.approx(1.0 - value)

    def test_window_larger_than_image(self):
        with pytest.raises(ShapeError):
            losses.ssim(_t(np.zeros((1, 1, 8, 8))), _t(np.zeros((1, 1, 8, 8))))


class TestLossTerms:
    def test_mse(self):
        assert losses.mse_loss(_t(np.ones((1, 1, 2, 2))), _t(np.zeros((1, 1, 2, 2)))).item() == 1.0

    def test_tv_flat_is_zero(self):
        assert losses.tv_loss(_t(np.full((2, 1, 5, 5), 3.0))).item() == pytest.approx(0.0, abs=1e-15)

    def test_tv_single_edge(self):
        x = np.zeros((1, 1, 4, 4))
        x[..., 2:] = 1.0
        # one unit jump per row, averaged over 16 pixels
        assert losses.tv_loss(_t(x)).item() == pytest.approx(4.0 / 16.0, rel=1e-3)

    def test_discriminator_extremes(self):
        assert losses.disc_loss(_t([[1.0], [1.0]]), _t([[0.0], [0.0]])).item() == 0.0
        assert losses.disc_loss(_t([[0.5]]), _t([[0.5]])).item() == pytest.approx(1.0)
        assert losses.adv_loss_g(_t([[1.0]])).item() == 0.0

    def test_log_form_is_cross_entropy(self):
        value = losses.disc_loss(_t([[0.8]]), _t([[0.3]]), log_form=True).item()
        assert value == pytest.approx(-math.log(0.8) - math.log(0.7), rel=1e-9)

    def test_disc_shape_mismatch(self):
        with pytest.raises(ShapeError):
            losses.disc_loss(_t([[0.5]]), _t([[0.5], [0.5]]))


class TestCompositeLosses:
    def test_perfect_prediction_is_zero(self):
        pred = _t(np.full((1, 1, 12, 12), 0.4))
        assert losses.gen_loss(pred, pred, _t([[1.0]])).item() == pytest.approx(0.0, abs=1e-12)

    def test_weighted_sum_of_terms(self, rng):
        cfg = SsimConfig(window=5)
        p, t = rng.uniform(size=(2, 1, 12, 12)), rng.uniform(size=(2, 1, 12, 12))
        d = rng.uniform(0.1, 0.9, size=(2, 1))
        w = LossWeights()
        expected = (
            w.mse * losses.mse_loss(_t(p), _t(t)).item()
            + w.ssim * losses.ssim_loss(_t(p), _t(t), cfg).item()
            + w.adversarial * losses.adv_loss_g(_t(d)).item()
            + w.tv * losses.tv_loss(_t(p)).item()
        )
        assert losses.gen_loss(_t(p), _t(t), _t(d), w, cfg).item() == pytest.approx(expected, rel=1e-12)

    def test_default_weights_combine_terms(self):
        w = LossWeights()
        total = w.mse * 0.01 + w.ssim * 0.1 + w.adversarial * 0.5 + w.tv * 0.2
        assert total == pytest.approx(0.1305)

    def test_pixel_terms_only(self, rng):
        cfg = SsimConfig(window=5)
        p, t = rng.uniform(size=(1, 1, 12, 12)), rng.uniform(size=(1, 1, 12, 12))
        w = LossWeights(mse=2.0, ssim=0.5, adversarial=0.0, tv=0.0)
        expected = 2.0 * losses.mse_loss(_t(p), _t(t)).item() + 0.5 * losses.ssim_loss(_t(p), _t(t), cfg).item()
        assert losses.gen_loss(_t(p), _t(t), _t([[0.2]]), w, cfg).item() == pytest.approx(expected, rel=1e-12)

    def test_missing_discriminator_drops_adversarial_term(self, rng):
        cfg = SsimConfig(window=5)
        p, t = rng.uniform(size=(1, 1, 12, 12)), rng.uniform(size=(1, 1, 12, 12))
        no_adv = LossWeights(adversarial=0.0)
        assert losses.gen_loss(_t(p), _t(t), None, cfg=cfg).item() == pytest.approx(
            losses.gen_loss(_t(p), _t(t), None, no_adv, cfg).item()
        )

    def test_total_loss_adds(self):
        assert losses.total_loss(_t(0.25), _t(0.5)).item() == 0.75


class TestMetricsCsv:
    def test_columns_and_read_back(self, tmp_path):
        records = [
            MetricsRecord("test-0000", "fbp", 45, 28.5, 0.81, 0.02, 1.0),
            MetricsRecord("test-0001", "fbp", 45, math.inf, 1.0, 0.03, 1.0),
            MetricsRecord("test-0000", "dual", 45, 33.0, 0.9, 1.5, 1.0),
        ]
        path = tmp_path / "metrics" / "m.csv"
        write_metrics_csv(path, records)
        header = path.read_text(encoding="utf-8").splitlines()[0]
        assert header.split(",") == CSV_COLUMNS
        assert read_metrics_csv(path) == records

    def test_summary_per_stage(self):
        records = [
            MetricsRecord("a", "fbp", 45, 20.0, 0.5, 0.0, 1.0),
            MetricsRecord("b", "fbp", 45, 30.0, 0.7, 0.0, 1.0),
            MetricsRecord("a", "dual", 45, 35.0, 0.9, 0.0, 1.0),
        ]
        summary = summarize(records)
        assert list(summary) == ["fbp", "dual"]
        assert summary["fbp"] == pytest.approx((25.0, 0.6))

    def test_wrong_header(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b\n1,2\n", encoding="utf-8")
        with pytest.raises(FormatError):
            read_metrics_csv(path)
