import numpy as np
import pytest

from simcc_pose.augment import STRONG, WEAK, AugmentationConfig, AugmentDraw, apply_draw, augment, draw_params
from simcc_pose.kernel import ParameterError
from simcc_pose.synthetic import make_sample


@pytest.fixture
def sample():
    return make_sample(np.random.default_rng(3))


def test_identity_draw_leaves_sample_unchanged(sample):
    out = apply_draw(sample, AugmentDraw())
    np.testing.assert_array_equal(out.image, sample.image)
    np.testing.assert_array_equal(out.coords, sample.coords)
    np.testing.assert_array_equal(out.visible, sample.visible)
    assert out.image is not sample.image


def test_rotation_by_ninety_degrees():
    # square canvas so a 90 degree turn keeps every point inside
    s = make_sample(np.random.default_rng(0), width=48, height=48)
    out = apply_draw(s, AugmentDraw(rotation_deg=90.0))
    c = 24.0
    # positive angle turns counter-clockwise on screen (y down): (x, y) -> (c + (y - c), c - (x - c))
    expected = np.stack([c + (s.coords[:, 1] - c), c - (s.coords[:, 0] - c)], axis=1)
    assert np.max(np.abs(out.coords - expected)) <= 0.5
    # blobs travel with their coordinates
    for (x, y), (ox, oy) in zip(s.coords, out.coords):
        xi, yi = int(round(ox)), int(round(oy))
        np.testing.assert_allclose(out.image[:, yi, xi], s.image[:, int(round(y)), int(round(x))], atol=0.15)


def test_seed_determinism(sample):
    a = augment(sample, STRONG, np.random.default_rng(11))
    b = augment(sample, STRONG, np.random.default_rng(11))
    assert a.image.tobytes() == b.image.tobytes()
    assert a.coords.tobytes() == b.coords.tobytes()


def test_never_nan(sample):
    rng = np.random.default_rng(5)
    for _ in range(50):
        out = augment(sample, STRONG, rng)
        assert np.isfinite(out.image).all() and np.isfinite(out.coords).all()


def test_keypoints_leaving_frame_become_invisible(sample):
    out = apply_draw(sample, AugmentDraw(shift=(1000.0, 0.0)))
    assert not out.visible.any()


def test_cutout_zeroes_rectangle(sample):
    out = apply_draw(sample, AugmentDraw(cutout=(5, 6, 10, 12)))
    assert not out.image[:, 6:18, 5:15].any()
    np.testing.assert_array_equal(out.image[:, 20:, :], sample.image[:, 20:, :])


def test_draw_ranges():
    rng = np.random.default_rng(0)
    draws = [draw_params(STRONG, rng, 48, 64) for _ in range(500)]
    assert all(0.6 <= d.scale <= 1.4 and abs(d.rotation_deg) <= 80 for d in draws)
    assert all(d.cutout is not None for d in draws)
    weak = [draw_params(WEAK, rng, 48, 64) for _ in range(500)]
    assert all(abs(d.rotation_deg) <= 20 and d.shift == (0.0, 0.0) for d in weak)
    assert 0.4 < np.mean([d.cutout is not None for d in weak]) < 0.6
    for d in draws:
        x0, y0, w, h = d.cutout
        assert 0 <= x0 and x0 + w <= 48 and 0 <= y0 and y0 + h <= 64


@pytest.mark.parametrize("kwargs", [{"cutout_prob": 1.5}, {"cutout_prob": -0.1}, {"scale_range": (1.4, 0.6)}])
def test_config_validation(kwargs):
    with pytest.raises(ParameterError):
        AugmentationConfig(**kwargs)
