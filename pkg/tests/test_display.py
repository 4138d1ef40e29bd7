import math

import numpy as np
import pytest

from lfraster.display import (
    DisplayConfig,
    build_remap_table,
    build_viewpoint_matrix,
    deinterlace,
    interlace,
    parse_display_config,
    tile_ids,
    view_offsets,
    viewpoint_csv,
    viewpoint_false_color,
)
from lfraster.errors import ConfigMismatch, CountMismatch, InvalidConfig, SizeMismatch, ViewOutOfRange


def view_oracle(cfg, x, y, u):
    """Scalar evaluation of the lenticular mapping with Python's floor-mod."""
    d = 3 * x + u + 3 * y * math.tan(cfg.tilt) - cfg.offset
    xo = d % cfg.line_count
    return min(int(math.floor(cfg.num_views * xo / cfg.line_count)), cfg.num_views - 1)


def cfg(w=1, h=1, tilt_deg=0.0, lx=3.0, off=0.0, n=3, tile=16):
    return DisplayConfig(w, h, math.radians(tilt_deg), lx, off, n, tile)


def test_three_view_single_pixel():
    m = build_viewpoint_matrix(cfg())
    assert [m.at(0, 0, u) for u in range(3)] == [0, 1, 2]


@pytest.mark.parametrize("lx,n", [(3.0, 3), (7.5, 11), (40.0, 64)])
def test_origin_maps_to_view_zero(lx, n):
    c = cfg(4, 4, lx=lx, n=n)
    d, xo = view_offsets(c, 0, 0, 0)
    assert d == 0 and xo == 0
    assert build_viewpoint_matrix(c).at(0, 0, 0) == 0


def test_period_along_row():
    m = build_viewpoint_matrix(cfg(12, 2, lx=6.0, n=3))
    row = m.data[0].reshape(-1)
    np.testing.assert_array_equal(row[6:], row[:-6])


def test_matches_scalar_oracle(rng):
    for _ in range(10):
        c = cfg(
            w=int(rng.integers(1, 20)), h=int(rng.integers(1, 20)),
            tilt_deg=float(rng.uniform(-15, 15)), lx=float(rng.uniform(2, 40)),
            off=float(rng.uniform(-40, 40)), n=int(rng.integers(1, 65)),
        )
        m = build_viewpoint_matrix(c)
        for y in range(c.height):
            for x in range(c.width):
                for u in range(3):
                    assert m.at(x, y, u) == view_oracle(c, x, y, u)


def test_row_shift_by_tan_alpha():
    c = cfg(16, 8, tilt_deg=9.0, lx=13.3, off=2.0, n=9)
    d0, _ = view_offsets(c, 5, 3, 1)
    d1, _ = view_offsets(c, 5, 4, 1)
    assert d1 - d0 == pytest.approx(3 * math.tan(c.tilt))


def test_pure_and_in_range():
    c = cfg(50, 30, tilt_deg=-11.0, lx=19.6, off=3.0, n=45)
    a, b = build_viewpoint_matrix(c), build_viewpoint_matrix(c, workers=3)
    assert a.data.tobytes() == b.data.tobytes()
    assert a.data.max() < 45


def test_single_view_psi_is_identity():
    c = cfg(40, 20, tilt_deg=5, lx=9.0, n=1, tile=8)
    r = build_remap_table(build_viewpoint_matrix(c), c)
    for t in range(c.num_tiles):
        np.testing.assert_array_equal(r.tile_permutation(t), np.arange(r.offsets[t + 1] - r.offsets[t]))


def test_pixel_triplets_grouped_per_view():
    ts = 16
    c = cfg(32, 16, lx=3.0 * ts, n=ts, tile=ts)
    m = build_viewpoint_matrix(c)
    # every pixel shows one view on all three channels: j = x mod 16
    np.testing.assert_array_equal(m.data[..., 0], np.tile(np.arange(32) % 16, (16, 1)))
    r = build_remap_table(m, c)
    order = r.order[r.offsets[0] : r.offsets[1]].astype(int)
    triples = order.reshape(-1, 3)
    np.testing.assert_array_equal(triples % 3, np.tile([0, 1, 2], (triples.shape[0], 1)))
    assert np.all(triples[:, 1] == triples[:, 0] + 1)
    views = m.flat[triples[:, 0]]
    assert np.all(np.diff(views.astype(int)) >= 0)


def test_psi_bijective_monotone_and_stable():
    c = cfg(37, 21, tilt_deg=12.0, lx=11.7, off=-4.0, n=13, tile=16)
    m = build_viewpoint_matrix(c)
    r = build_remap_table(m, c)
    np.testing.assert_array_equal(np.sort(r.order), np.arange(c.num_subpixels))
    for t in range(c.num_tiles):
        perm = r.tile_permutation(t)
        np.testing.assert_array_equal(np.sort(perm), np.arange(perm.size))
        flat = r.order[r.offsets[t] : r.offsets[t + 1]]
        v = m.flat[flat].astype(int)
        assert np.all(np.diff(v) >= 0)
        same = np.diff(v) == 0
        assert np.all(np.diff(perm)[same] > 0)  # ties keep row-major order


def test_lookup_and_tile_bounds():
    c = cfg(20, 20, tilt_deg=3, lx=5.0, n=4, tile=16)
    m = build_viewpoint_matrix(c)
    r = build_remap_table(m, c)
    assert r.tile_bounds(3) == (16, 16, 20, 20)
    x, y, u = r.lookup(int(r.offsets[3]))
    assert 16 <= x < 20 and 16 <= y < 20 and 0 <= u < 3


def test_remap_config_mismatch():
    a, b = cfg(8, 8, n=3), cfg(8, 8, n=4)
    with pytest.raises(ConfigMismatch):
        build_remap_table(build_viewpoint_matrix(a), b)


def test_tile_ids_clip_boundary():
    c = cfg(17, 3, tile=16)
    t = tile_ids(c).reshape(3, 17, 3)
    assert t[0, 15, 0] == 0 and t[0, 16, 0] == 1
    assert c.num_tiles == 2


def test_interlace_single_view_identity(rng):
    c = cfg(6, 4, n=1)
    img = rng.random((4, 6, 3)).astype(np.float32)
    np.testing.assert_array_equal(interlace([img], build_viewpoint_matrix(c)).data, img)


def test_interlace_constant_views_encode_v():
    c = cfg(10, 7, tilt_deg=8, lx=7.3, n=6)
    m = build_viewpoint_matrix(c)
    views = [np.full((7, 10, 3), j / 5, np.float32) for j in range(6)]
    out = interlace(views, m)
    np.testing.assert_allclose(out.data, m.data / 5.0, atol=1e-7)
    recovered = np.zeros(m.data.shape, int)
    for j in range(6):
        _, mask = deinterlace(out, m, j)
        recovered[mask] = j
    np.testing.assert_array_equal(recovered, m.data)


def test_masks_partition_and_roundtrip(rng):
    c = cfg(9, 5, tilt_deg=-6, lx=4.4, n=5)
    m = build_viewpoint_matrix(c)
    views = [rng.random((5, 9, 3)).astype(np.float32) for _ in range(5)]
    out = interlace(views, m)
    total = np.zeros(m.data.shape, int)
    for j in range(5):
        vals, mask = deinterlace(out, m, j)
        total += mask
        np.testing.assert_array_equal(vals[mask], views[j][mask])
        assert np.all(vals[~mask] == 0)
    assert np.all(total == 1)


def test_three_view_mask_is_channel():
    c = cfg(5, 4)
    _, mask = deinterlace(np.zeros((4, 5, 3), np.float32), build_viewpoint_matrix(c), 0)
    assert mask[..., 0].all() and not mask[..., 1:].any()


def test_interlace_errors():
    m = build_viewpoint_matrix(cfg(4, 4))
    with pytest.raises(CountMismatch):
        interlace([np.zeros((4, 4, 3))] * 2, m)
    with pytest.raises(SizeMismatch):
        interlace([np.zeros((4, 5, 3))] * 3, m)
    with pytest.raises(ViewOutOfRange):
        deinterlace(np.zeros((4, 4, 3)), m, 3)


def test_config_file_parsing():
    text = "# panel\nwidth=3840\nheight=2160\ntilt_deg=12.5  # lens\nline_count=19.6\noffset=-3\nviews=71\ntile=16\n"
    c = parse_display_config(text)
    assert c.width == 3840 and c.num_views == 71
    assert c.tilt == pytest.approx(math.radians(12.5))
    assert parse_display_config(c.to_text()) == c
    assert parse_display_config(text, views=8).num_views == 8


@pytest.mark.parametrize(
    "text",
    ["width=4\nheight=4\nline_count=0\nviews=3", "width=4\nheight=4\nline_count=3\nviews=0",
     "width=4\nheight=4\nline_count=3", "width=4\nheight=4\nline_count=3\nviews=3\ncolor=red",
     "width=four\nheight=4\nline_count=3\nviews=3", "width 4"],
)
def test_config_errors(text):
    with pytest.raises(InvalidConfig):
        parse_display_config(text)


def test_exports():
    c = cfg(4, 2, lx=3.0, n=3)
    m = build_viewpoint_matrix(c)
    csv = viewpoint_csv(m).splitlines()
    assert csv[0] == ",".join(["0,1,2"] * 4)
    assert len(csv) == 2
    fc = viewpoint_false_color(m)
    assert fc.shape == (2, 12, 3) and fc.dtype == np.uint8
    assert tuple(fc[0, 0]) == (255, 0, 0)
