import math

import numpy as np
import pytest
from skimage.metrics import structural_similarity

from conftest import desk_display, desk_rig
from lfraster.camera import Camera, RigSpec, generate_orbit_rig
from lfraster.display import build_viewpoint_matrix, interlace
from lfraster.errors import EmptyMask, SizeMismatch
from lfraster.metrics import image_metrics, lightfield_metrics
from lfraster.oracle import render_lightfield_fullframe, render_view_fullframe
from lfraster.raster import render_lightfield
from lfraster.scene import GaussianScene


def one_gaussian(mean, scale, opacity, dc=(0.5, 0.5, 0.5)):
    return GaussianScene(
        means=np.array([mean], float),
        rotations=np.array([[1.0, 0, 0, 0]]),
        scales=np.array([scale], float),
        opacities=np.array([opacity]),
        sh=np.array([[dc]], float),
        sh_degree=0,
    )


def test_empty_scene_background():
    cam = generate_orbit_rig(RigSpec(1, width=40, height=30))[0]
    img = render_view_fullframe(GaussianScene.empty(), cam, (0.3, 0.2, 0.1))
    np.testing.assert_array_equal(img, np.broadcast_to(np.float32([0.3, 0.2, 0.1]), (30, 40, 3)))


def test_centered_isotropic_gaussian_is_symmetric():
    cam = Camera(np.eye(3), np.zeros(3), 60.0, 60.0, 24.0, 24.0, 48, 48)
    img = render_view_fullframe(one_gaussian([0, 0, 4.0], [0.5] * 3, 0.8), cam)
    assert img.max() > 0.1
    np.testing.assert_allclose(img, img[::-1], atol=1e-5)
    np.testing.assert_allclose(img, img[:, ::-1], atol=1e-5)
    np.testing.assert_allclose(img, img.transpose(1, 0, 2), atol=1e-5)


def test_huge_opaque_gaussian_is_constant():
    cam = generate_orbit_rig(RigSpec(1, width=32, height=24))[0]
    dc = (np.array([0.9, 0.3, 0.6]) - 0.5) / 0.28209479177387814
    img = render_view_fullframe(one_gaussian([0, 0, 0], [500.0] * 3, 1.0, dc), cam)
    np.testing.assert_allclose(img, np.broadcast_to(img[0, 0], img.shape), atol=1e-6)
    np.testing.assert_allclose(img[0, 0], 0.99 * np.array([0.9, 0.3, 0.6]), atol=1e-5)


def test_single_view_lightfield_equals_view(small_scene):
    display = desk_display(num_views=1, width=48, height=32)
    rig = desk_rig(1, 0.0, 48, 32)
    lf = render_lightfield_fullframe(small_scene, display, rig)
    np.testing.assert_array_equal(lf.data, render_view_fullframe(small_scene, rig[0]))


def test_single_view_matches_subpixel_pipeline(small_scene):
    display = desk_display(num_views=1, width=64, height=48)
    rig = desk_rig(1, 0.0, 64, 48)
    img, _ = render_lightfield(small_scene, display, rig, 1)
    ref = render_view_fullframe(small_scene, rig[0])
    assert np.max(np.abs(img.data - ref)) <= 1e-5


def test_order_independent_with_distinct_depths(small_scene, rng):
    cam = desk_rig(1, 0.0, 48, 32)[0]
    perm = rng.permutation(len(small_scene))
    shuffled = GaussianScene(
        small_scene.means[perm], small_scene.rotations[perm], small_scene.scales[perm],
        small_scene.opacities[perm], small_scene.sh[perm], small_scene.sh_degree,
    )
    np.testing.assert_array_equal(render_view_fullframe(small_scene, cam), render_view_fullframe(shuffled, cam))


# --- metrics -----------------------------------------------------------------


def test_identical_images():
    a = np.random.default_rng(0).random((20, 30, 3))
    r = image_metrics(a, a)
    assert math.isinf(r.psnr) and r.psnr > 0
    assert r.ssim == pytest.approx(1.0, abs=1e-9)
    assert r.to_dict()["psnr_db"] == "inf"


def test_uniform_offset_is_20db():
    a = np.random.default_rng(1).random((16, 16, 3)) * 0.9
    r = image_metrics(a, a + 0.1)
    assert r.mse == pytest.approx(0.01, rel=1e-9)
    assert r.psnr == pytest.approx(20.0, abs=1e-6)


def test_checkerboard_vs_inverse():
    y, x = np.mgrid[:32, :32]
    board = ((x + y) % 2).astype(float)[..., None].repeat(3, axis=2)
    assert image_metrics(board, 1 - board).ssim < 0


def test_ssim_matches_skimage(rng):
    a = rng.random((40, 50, 3))
    b = np.clip(a + rng.normal(0, 0.1, a.shape), 0, 1)
    expected = structural_similarity(a, b, data_range=1.0, channel_axis=2, gaussian_weights=True,
                                     sigma=1.5, use_sample_covariance=False)
    assert image_metrics(a, b).ssim == pytest.approx(expected, abs=1e-9)


def test_psnr_symmetric(rng):
    a, b = rng.random((10, 12, 3)), rng.random((10, 12, 3))
    assert image_metrics(a, b).psnr == image_metrics(b, a).psnr


def test_mse_pools_over_views(rng):
    display = desk_display(num_views=5, width=24, height=20, line_count=5.0)
    m = build_viewpoint_matrix(display)
    a, b = rng.random((20, 24, 3)), rng.random((20, 24, 3))
    rep = lightfield_metrics(a, b, m)
    pooled = sum(v["mse"] * v["masked_pixel_count"] for v in rep.per_view) / m.data.size
    assert rep.mse == pytest.approx(pooled, rel=1e-12)
    assert sum(v["masked_pixel_count"] for v in rep.per_view) == m.data.size


def test_masked_psnr_ignores_outside(rng):
    a = rng.random((10, 10, 3))
    b = a.copy()
    b[:, 5:] = 0
    mask = np.zeros((10, 10), bool)
    mask[:, :5] = True
    assert math.isinf(image_metrics(a, b, mask).psnr)


def test_metric_errors():
    with pytest.raises(SizeMismatch):
        image_metrics(np.zeros((4, 4, 3)), np.zeros((4, 5, 3)))
    with pytest.raises(EmptyMask):
        image_metrics(np.zeros((4, 4, 3)), np.zeros((4, 4, 3)), np.zeros((4, 4), bool))


def test_interlaced_constant_views_metrics():
    display = desk_display(num_views=3, width=16, height=16, line_count=3.0)
    m = build_viewpoint_matrix(display)
    views = [np.full((16, 16, 3), 0.5, np.float32)] * 3
    img = interlace(views, m)
    assert math.isinf(image_metrics(img, np.full((16, 16, 3), 0.5)).psnr)
