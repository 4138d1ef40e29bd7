"""Property-based checks of the invariants that hold for any input."""
import math

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from lfraster.coalesce import WarpModel, simulate_lists
from lfraster.display import DisplayConfig, build_remap_table, build_viewpoint_matrix, deinterlace, interlace, tile_ids
from lfraster.metrics import image_metrics
from lfraster.ply import load_ply, save_ply
from lfraster.raster import composite, pack_key, unpack_key
from lfraster.scene import GaussianScene, covariance_from_params, eval_sh

finite = dict(allow_nan=False, allow_infinity=False)

displays = st.builds(
    DisplayConfig,
    width=st.integers(1, 40),
    height=st.integers(1, 40),
    tilt=st.floats(-math.radians(15), math.radians(15), **finite),
    line_count=st.floats(2.0, 40.0, **finite),
    offset=st.floats(-40.0, 40.0, **finite),
    num_views=st.integers(1, 64),
    tile_size=st.sampled_from([4, 8, 16]),
)


@settings(max_examples=60, deadline=None)
@given(displays)
def test_psi_bijective_and_monotone(cfg):
    m = build_viewpoint_matrix(cfg)
    r = build_remap_table(m, cfg)
    tiles = tile_ids(cfg).astype(np.int64)
    order = r.order.astype(np.int64)
    np.testing.assert_array_equal(np.sort(order), np.arange(cfg.num_subpixels))
    np.testing.assert_array_equal(tiles[order], np.repeat(np.arange(cfg.num_tiles), np.diff(r.offsets)))
    v = m.flat[order].astype(np.int64)
    same_tile = np.diff(tiles[order]) == 0
    assert np.all(np.diff(v)[same_tile] >= 0)
    assert m.data.max() < cfg.num_views


@settings(max_examples=40, deadline=None)
@given(displays, st.integers(0, 2**32 - 1))
def test_interlace_roundtrip(cfg, seed):
    m = build_viewpoint_matrix(cfg)
    rng = np.random.default_rng(seed)
    views = [rng.random((cfg.height, cfg.width, 3)).astype(np.float32) for _ in range(cfg.num_views)]
    img = interlace(views, m)
    covered = np.zeros(m.data.shape, int)
    for j in range(cfg.num_views):
        vals, mask = deinterlace(img, m, j)
        covered += mask
        np.testing.assert_array_equal(vals[mask], views[j][mask])
    assert np.all(covered == 1)


quats = st.lists(st.floats(-1, 1, **finite), min_size=4, max_size=4).filter(lambda q: np.linalg.norm(q) > 1e-3)
scales = st.lists(st.floats(1e-3, 10, **finite), min_size=3, max_size=3)


@given(quats, scales)
def test_covariance_symmetric_pd_and_sign_invariant(q, s):
    q = np.array(q) / np.linalg.norm(q)
    cov = covariance_from_params(q, s)
    np.testing.assert_allclose(cov, cov.T, atol=1e-12)
    assert np.linalg.eigvalsh(cov).min() > 0
    np.testing.assert_allclose(covariance_from_params(-q, s), cov, atol=1e-12)


@given(
    st.integers(0, 3),
    st.floats(-3, 3, **finite),
    st.integers(0, 2**32 - 1),
    st.lists(st.floats(-1, 1, **finite), min_size=3, max_size=3).filter(lambda d: np.linalg.norm(d) > 1e-3),
)
def test_sh_linear_before_clamp(degree, a, seed, d):
    d = np.array(d) / np.linalg.norm(d)
    c = np.random.default_rng(seed).normal(size=((degree + 1) ** 2, 3))
    lhs = eval_sh(a * c, degree, d, clamp=False) - 0.5
    rhs = a * (eval_sh(c, degree, d, clamp=False) - 0.5)
    np.testing.assert_allclose(lhs, rhs, atol=1e-9)


@given(st.integers(0, 2**32 - 1), st.lists(st.floats(-1, 1, **finite), min_size=3, max_size=3))
def test_sh_degree0_ignores_direction(seed, d):
    c = np.random.default_rng(seed).normal(size=(1, 3))
    np.testing.assert_array_equal(eval_sh(c, 0, d), eval_sh(c, 0, [0, 0, 1]))


keyparts = st.tuples(st.integers(0, 2**20 - 1), st.integers(0, 7), st.floats(0.125, 1e6, width=32))


@given(keyparts, keyparts)
def test_key_order_matches_tuple_order(a, b):
    ka, kb = pack_key(*a, num_clusters=8), pack_key(*b, num_clusters=8)
    assert unpack_key(ka, 8) == a
    assert (ka < kb) == (a < b)


@settings(max_examples=50)
@given(st.integers(1, 30), st.integers(1, 20), st.integers(0, 2**32 - 1))
def test_composite_matches_sequential_blend(n_splats, lanes, seed):
    rng = np.random.default_rng(seed)
    alpha = rng.choice([0.0, 0.3, 0.99, 0.6], size=(n_splats, lanes)).astype(np.float32)
    color = rng.random((n_splats, lanes)).astype(np.float32)
    bg = rng.random(lanes).astype(np.float32)
    got = composite(alpha, color, bg)
    for lane in range(lanes):
        t, c = np.float32(1), np.float32(0)
        for i in range(n_splats):
            if t < np.float32(1e-4):
                break
            c = c + color[i, lane] * alpha[i, lane] * t
            t = t * (np.float32(1) - alpha[i, lane])
        assert got[lane] == c + bg[lane] * t


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 40), st.integers(0, 3), st.integers(0, 2**32 - 1))
def test_ply_roundtrip(count, degree, seed):
    rng = np.random.default_rng(seed)
    q = rng.normal(size=(count, 4))
    scene = GaussianScene(
        means=rng.normal(size=(count, 3)),
        rotations=q / np.linalg.norm(q, axis=1, keepdims=True),
        scales=rng.uniform(0.01, 2.0, size=(count, 3)),
        opacities=rng.uniform(0.01, 0.99, size=count),
        sh=rng.normal(size=(count, (degree + 1) ** 2, 3)),
        sh_degree=degree,
    )
    back = load_ply(save_ply(scene))
    for name in ("means", "rotations", "scales", "opacities", "sh"):
        np.testing.assert_allclose(getattr(back, name), getattr(scene, name), atol=1e-6, rtol=1e-6)


@given(st.integers(0, 2**32 - 1))
def test_psnr_symmetry(seed):
    rng = np.random.default_rng(seed)
    a, b = rng.random((12, 13, 3)), rng.random((12, 13, 3))
    assert image_metrics(a, b).psnr == image_metrics(b, a).psnr


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_warp_size_one_ignores_rank_order(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 200))
    ids = rng.integers(0, 6, size=n)
    starts = ids * 37
    ends = starts + rng.integers(0, 3, size=6)[ids] * 9
    off = np.array([0, n])
    perm = rng.permutation(n)
    model = WarpModel(warp_size=1)
    a = simulate_lists(ids, starts, ends, off, model)
    b = simulate_lists(ids[perm], starts[perm], ends[perm], off, model)
    assert a.transactions_total == b.transactions_total
    assert a.transactions_total >= a.transactions_ideal
