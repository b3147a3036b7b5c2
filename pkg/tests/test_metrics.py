import random

import cv2
import numpy as np
import pytest

from src.domain.models.errors import InvalidArgumentError, MetricUnavailableError
from src.domain.models.mapping_models import DocumentImage
from src.infrastructure.metrics.flow_distortion import (
    FlowSettings,
    aligned_distortion,
    distortion_metrics,
    evaluation_size,
    fit_similarity,
    local_distortion,
    local_distortion_from_flow,
    valid_region,
)
from src.infrastructure.metrics.image_similarity import interior_psnr, ms_ssim, scale_count
from src.infrastructure.metrics.text_distance import char_error_rate, edit_distance

from .conftest import textured_image


def shifted_pair(shift, size=128, pad=16):
    big = textured_image(size + 2 * pad, seed=7).pixels
    gt = DocumentImage(big[pad:pad + size, pad:pad + size])
    dewarped = DocumentImage(big[pad:pad + size, pad - shift:pad + size - shift])
    return dewarped, gt


class TestMsSsim:
    def test_identical_images_score_one(self, texture):
        assert ms_ssim(texture, texture) == 1.0

    def test_symmetric(self, texture):
        other = textured_image(seed=3)
        assert ms_ssim(texture, other) == ms_ssim(other, texture)

    def test_inverted_image_scores_low(self, texture):
        inverted = DocumentImage(1.0 - texture.pixels)
        assert ms_ssim(texture, inverted) < 0.3

    def test_small_perturbation_scores_high(self, texture):
        noisy = DocumentImage(np.clip(texture.pixels + 0.01 * np.random.default_rng(0).standard_normal(texture.pixels.shape), 0, 1))
        assert 0.8 < ms_ssim(texture, noisy) < 1.0

    def test_color_is_scored_on_luma(self):
        a = textured_image(seed=2, channels=3)
        b = textured_image(seed=4, channels=3)
        assert ms_ssim(a, b) == ms_ssim(DocumentImage(a.gray()), DocumentImage(b.gray()))

    def test_scale_count(self):
        assert scale_count(256, 256) == 5
        assert scale_count(176, 300) == 5
        assert scale_count(128, 128) == 4
        assert scale_count(22, 40) == 2
        assert scale_count(11, 11) == 1
        with pytest.raises(InvalidArgumentError):
            scale_count(10, 64)

    def test_size_mismatch(self, texture):
        with pytest.raises(InvalidArgumentError):
            ms_ssim(texture, textured_image(size=64))


def test_interior_psnr():
    a = DocumentImage(np.full((16, 16), 0.5))
    assert interior_psnr(a, a) == float("inf")
    b = DocumentImage(np.full((16, 16), 0.6))
    assert interior_psnr(a, b) == pytest.approx(20.0)
    edged = b.pixels.copy()
    edged[:2] = 0.0
    assert interior_psnr(b, DocumentImage(edged), border=2) == float("inf")


class TestDistortion:
    @pytest.mark.parametrize("shift", [2, 4, 8])
    def test_local_distortion_recovers_translation(self, shift):
        dewarped, gt = shifted_pair(shift)
        assert local_distortion(dewarped, gt) == pytest.approx(shift, abs=0.5)

    def test_farneback_backend(self):
        dewarped, gt = shifted_pair(2)
        assert local_distortion(dewarped, gt, flow_backend="farneback") == pytest.approx(2, abs=0.5)

    def test_aligned_distortion_ignores_translation(self):
        dewarped, gt = shifted_pair(4)
        assert aligned_distortion(dewarped, gt) <= 0.2

    @pytest.mark.parametrize("scale", [0.95, 0.97, 1.03, 1.05])
    def test_aligned_distortion_ignores_scale(self, scale):
        size, pad = 128, 16
        big = textured_image(size + 2 * pad, seed=7).pixels[:, :, 0].astype(np.float32)
        centre = (size + 2 * pad - 1) / 2.0
        zoom = cv2.getRotationMatrix2D((centre, centre), 0.0, scale)
        scaled = cv2.warpAffine(big, zoom, big.shape[::-1], flags=cv2.INTER_LINEAR,
                                borderMode=cv2.BORDER_REFLECT)
        gt = DocumentImage(big[pad:pad + size, pad:pad + size])
        dewarped = DocumentImage(np.clip(scaled[pad:pad + size, pad:pad + size], 0.0, 1.0))
        ld, ad = distortion_metrics(dewarped, gt)
        assert ad <= 0.2
        assert ld > 0.5

    def test_identical_images(self, texture):
        ld, ad = distortion_metrics(texture, texture)
        assert ld < 0.1
        assert ad < 0.1

    def test_unknown_backend(self):
        with pytest.raises(InvalidArgumentError):
            FlowSettings(backend="raft")

    def test_no_valid_pixels(self):
        flow = np.zeros((12, 12, 2))
        with pytest.raises(MetricUnavailableError):
            local_distortion_from_flow(flow, border_px=8)

    def test_valid_region_excludes_border_and_outside_targets(self):
        flow = np.zeros((32, 32, 2))
        assert valid_region(flow, 8).sum() == 16 * 16
        flow[..., 0] = 20.0
        valid = valid_region(flow, 0)
        assert valid[:, :12].all() and not valid[:, 12:].any()

    def test_fit_similarity_is_exact_on_similarities(self):
        points = np.random.default_rng(1).random((50, 2)) * 100
        scale, shift = fit_similarity(points, 1.5 * points + np.array([2.0, -3.0]))
        assert scale == pytest.approx(1.5)
        np.testing.assert_allclose(shift, [2.0, -3.0], atol=1e-9)

    def test_evaluation_size(self):
        assert evaluation_size(1024, 768, FlowSettings()) == (512, 384)
        assert evaluation_size(300, 200, FlowSettings()) == (300, 200)
        assert evaluation_size(1024, 768, FlowSettings(full_resolution=True)) == (1024, 768)
        assert evaluation_size(200, 200, FlowSettings(area_normalize=100 * 100)) == (100, 100)


class TestTextDistance:
    def test_kitten_sitting(self):
        assert edit_distance("kitten", "sitting") == 3
        assert char_error_rate("kitten", "sitting") == pytest.approx(3 / 7)

    def test_identical_and_empty(self):
        assert edit_distance("same text", "same text") == 0
        assert edit_distance("", "abc") == 3
        assert char_error_rate("", "abcd") == 1.0

    def test_empty_reference(self):
        with pytest.raises(InvalidArgumentError):
            char_error_rate("abc", "")

    def test_symmetry_and_triangle_inequality(self):
        rng = random.Random(3)

        def word():
            return "".join(rng.choice("abc ") for _ in range(rng.randint(0, 8)))

        for _ in range(200):
            a, b, c = word(), word(), word()
            assert edit_distance(a, b) == edit_distance(b, a)
            assert edit_distance(a, c) <= edit_distance(a, b) + edit_distance(b, c)
            assert (edit_distance(a, b) == 0) == (a == b)
