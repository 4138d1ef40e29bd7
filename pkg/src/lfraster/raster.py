"""Subpixel-level light-field rasterizer with per-cluster attribute reuse.

Stages: projection (per-view means, per-cluster conic/depth/color),
key generation (tiles merged over each cluster's views), a stable sort on
64-bit ``(tile, cluster, depth)`` keys, and alpha blending where threads
are mapped to subpixels through the view-sorted remap table.
"""
from __future__ import annotations

import functools
import math
import time
from dataclasses import dataclass

import numpy as np

from .camera import Camera, Clustering, cluster_views, overlaps_image, project_gaussians, project_points
from .display import (
    DisplayConfig,
    InterlacedImage,
    RemapTable,
    ViewpointMatrix,
    build_remap_table,
    build_viewpoint_matrix,
)
from .errors import InconsistentInputs, TileIdOverflow
from .parallel import process_map, thread_map
from .scene import GaussianScene

ALPHA_MIN = np.float32(1.0 / 255.0)
ALPHA_MAX = np.float32(0.99)
T_MIN = np.float32(1e-4)


@dataclass(frozen=True, eq=False)
class ProjectionBuffers:
    means2d: np.ndarray  # (M, N, 2) per-view screen means
    visible: np.ndarray  # (M, N)
    conics: np.ndarray  # (M, K, 3)
    depths: np.ndarray  # (M, K)
    colors: np.ndarray  # (M, K, 3)
    eff_opacity: np.ndarray  # (M, K)
    extents: np.ndarray  # (M, K, 2) cutoff box half sizes
    cluster_visible: np.ndarray  # (M, K)
    skipped: int = 0  # degenerate covariances dropped

    @property
    def nbytes(self) -> int:
        return sum(
            a.nbytes
            for a in (self.means2d, self.visible, self.conics, self.depths,
                      self.colors, self.eff_opacity, self.extents, self.cluster_visible)
        )


def project_all(
    scene: GaussianScene,
    views: list[Camera],
    clustering: Clustering,
    workers: int | None = 1,
) -> ProjectionBuffers:
    n, k = len(views), clustering.num_clusters
    if n != clustering.num_views:
        raise InconsistentInputs(f"{n} cameras but clustering covers {clustering.num_views} views")
    m = len(scene)
    cov = scene.covariances()

    def shared(kk: int):
        return project_gaussians(views[int(clustering.representatives[kk])], scene.means, cov,
                                 scene.opacities, scene.sh, scene.sh_degree)

    def per_view(j: int):
        return project_points(views[j], scene.means)

    reps = thread_map(shared, range(k), workers)
    means = thread_map(per_view, range(n), workers)

    conics = np.stack([p.conic for p in reps], axis=1) if m else np.zeros((0, k, 3), np.float32)
    depths = np.stack([p.depth for p in reps], axis=1) if m else np.zeros((0, k), np.float32)
    colors = np.stack([p.color for p in reps], axis=1) if m else np.zeros((0, k, 3), np.float32)
    eff = np.stack([p.eff_opacity for p in reps], axis=1) if m else np.zeros((0, k), np.float32)
    extents = np.stack([p.extent for p in reps], axis=1) if m else np.zeros((0, k, 2), np.float32)
    cvis = np.stack([p.valid for p in reps], axis=1) if m else np.zeros((0, k), bool)

    means2d = np.empty((m, n, 2), np.float32)
    visible = np.empty((m, n), bool)
    for j, (mu, z) in enumerate(means):
        kk = int(clustering.assignment[j])
        cam = views[j]
        means2d[:, j] = mu
        visible[:, j] = (
            cvis[:, kk]
            & (z >= cam.znear)
            & overlaps_image(mu, extents[:, kk], cam.width, cam.height)
        )
    return ProjectionBuffers(
        means2d=means2d, visible=visible, conics=conics, depths=depths, colors=colors,
        eff_opacity=eff, extents=extents, cluster_visible=cvis,
        skipped=sum(p.degenerate for p in reps),
    )


# --- keys -------------------------------------------------------------------


def cluster_bits(num_clusters: int) -> int:
    return math.ceil(math.log2(max(num_clusters, 2)))


def pack_key(tile: int, cluster: int, depth: float, num_clusters: int) -> int:
    """64-bit sort key: tile | cluster | raw float32 depth bits."""
    bits = cluster_bits(num_clusters)
    dbits = int(np.array(depth, dtype=np.float32).view(np.uint32))
    return (tile << (32 + bits)) | (cluster << 32) | dbits


def unpack_key(key: int, num_clusters: int) -> tuple[int, int, float]:
    bits = cluster_bits(num_clusters)
    depth = float(np.array(key & 0xFFFFFFFF, dtype=np.uint32).view(np.float32))
    return key >> (32 + bits), (key >> 32) & ((1 << bits) - 1), depth


@dataclass(frozen=True, eq=False)
class SplatKeys:
    keys: np.ndarray  # uint64
    payload: np.ndarray  # Gaussian index per key
    num_clusters: int
    num_tiles: int

    def __len__(self) -> int:
        return self.keys.shape[0]


def tile_span(lo: np.ndarray, hi: np.ndarray, size: int, tile: int) -> tuple[np.ndarray, np.ndarray]:
    """Inclusive tile range whose pixel centers fall in [lo, hi]; empty when first > last."""
    first = np.maximum(np.ceil(lo - 0.5), 0)
    last = np.minimum(np.floor(hi - 0.5), size - 1)
    empty = first > last
    t0 = (first // tile).astype(np.int64)
    t1 = (last // tile).astype(np.int64)
    t1[empty] = t0[empty] - 1
    return t0, t1


def _expand_rects(tx0, tx1, ty0, ty1, tiles_x):
    """Tile ids covered by each rectangle, plus the owning rectangle index."""
    w = np.maximum(tx1 - tx0 + 1, 0)
    h = np.maximum(ty1 - ty0 + 1, 0)
    counts = w * h
    owner = np.repeat(np.arange(counts.size), counts)
    start = np.cumsum(counts) - counts
    local = np.arange(owner.size) - start[owner]
    ww = w[owner]
    ty = ty0[owner] + local // ww
    tx = tx0[owner] + local % ww
    return ty * tiles_x + tx, owner


def generate_keys(
    buffers: ProjectionBuffers,
    clustering: Clustering,
    display: DisplayConfig,
    radius_pad: float = 0.0,
    workers: int | None = 1,
) -> SplatKeys:
    """One key per (Gaussian, cluster, tile) where the tile meets the Gaussian in any view of the cluster."""
    k_total = clustering.num_clusters
    n_tiles = display.num_tiles
    bits = cluster_bits(k_total)
    if n_tiles > 1 << (32 - bits):
        raise TileIdOverflow(f"{n_tiles} tiles do not fit in {32 - bits} key bits")
    m = buffers.means2d.shape[0]
    if buffers.means2d.shape[1] != clustering.num_views or buffers.conics.shape[1] != k_total:
        raise InconsistentInputs("projection buffers do not match the clustering")
    ts = display.tile_size

    def per_cluster(k: int):
        codes = []
        for j in clustering.views_of(k):
            i = np.flatnonzero(buffers.visible[:, j])
            if i.size == 0:
                continue
            mu = buffers.means2d[i, j].astype(np.float64)
            ext = buffers.extents[i, k].astype(np.float64) + radius_pad
            tx0, tx1 = tile_span(mu[:, 0] - ext[:, 0], mu[:, 0] + ext[:, 0], display.width, ts)
            ty0, ty1 = tile_span(mu[:, 1] - ext[:, 1], mu[:, 1] + ext[:, 1], display.height, ts)
            tiles, owner = _expand_rects(tx0, tx1, ty0, ty1, display.tiles_x)
            codes.append(i[owner].astype(np.int64) * n_tiles + tiles)
        if not codes:
            return np.zeros(0, np.uint64), np.zeros(0, np.int64)
        # sorted by (gaussian, tile); duplicates across the cluster's views collapse here
        code = np.unique(np.concatenate(codes))
        gid, tile = np.divmod(code, n_tiles)
        dbits = buffers.depths[gid, k].view(np.uint32).astype(np.uint64)
        key = (tile.astype(np.uint64) << np.uint64(32 + bits)) | (np.uint64(k) << np.uint64(32)) | dbits
        return key, gid

    parts = thread_map(per_cluster, range(k_total), workers)
    if m == 0 or not parts:
        keys, payload = np.zeros(0, np.uint64), np.zeros(0, np.int64)
    else:
        keys = np.concatenate([p[0] for p in parts])
        payload = np.concatenate([p[1] for p in parts])
    return SplatKeys(keys=keys, payload=payload.astype(np.int32 if m < 2**31 else np.int64),
                     num_clusters=k_total, num_tiles=n_tiles)


# --- sort -------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class GaussianRangeTable:
    """[start, end) offsets into the sorted payload for every (tile, cluster)."""

    starts: np.ndarray  # (T, K)
    ends: np.ndarray

    def range(self, tile: int, cluster: int) -> tuple[int, int]:
        return int(self.starts[tile, cluster]), int(self.ends[tile, cluster])

    @property
    def num_tiles(self) -> int:
        return self.starts.shape[0]

    @property
    def num_clusters(self) -> int:
        return self.starts.shape[1]


@dataclass(frozen=True, eq=False)
class SortedSplats:
    keys: np.ndarray
    payload: np.ndarray
    cluster: np.ndarray  # cluster id of each sorted entry

    def __len__(self) -> int:
        return self.payload.shape[0]


def sort_splats(keys: SplatKeys) -> tuple[SortedSplats, GaussianRangeTable]:
    order = np.argsort(keys.keys, kind="stable")
    skeys = keys.keys[order]
    payload = keys.payload[order]
    k_total, n_tiles = keys.num_clusters, keys.num_tiles
    bits = cluster_bits(k_total)
    tile = (skeys >> np.uint64(32 + bits)).astype(np.int64)
    cluster = ((skeys >> np.uint64(32)) & np.uint64((1 << bits) - 1)).astype(np.int64)
    dense = tile * k_total + cluster
    ids = np.arange(n_tiles * k_total)
    starts = np.searchsorted(dense, ids, side="left").reshape(n_tiles, k_total)
    ends = np.searchsorted(dense, ids, side="right").reshape(n_tiles, k_total)
    return SortedSplats(skeys, payload, cluster), GaussianRangeTable(starts, ends)


# --- blend ------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class _BlendState:
    lanes_px: np.ndarray
    lanes_py: np.ndarray
    lanes_u: np.ndarray
    lanes_view: np.ndarray
    run_first: np.ndarray
    run_last: np.ndarray
    run_start: np.ndarray
    run_end: np.ndarray
    payload: np.ndarray
    rec_conic: np.ndarray
    rec_opacity: np.ndarray
    rec_color: np.ndarray
    means2d: np.ndarray
    visible: np.ndarray
    background: np.ndarray


def _blend_runs(state: _BlendState, span: tuple[int, int]) -> np.ndarray:
    """Composite runs [span) ; each run is a stretch of ranks reading one Gaussian list."""
    lo, hi = span
    out = np.empty(int((state.run_last[lo:hi] - state.run_first[lo:hi]).sum()), np.float32)
    pos = 0
    for r in range(lo, hi):
        r0, r1 = state.run_first[r], state.run_last[r]
        s, e = state.run_start[r], state.run_end[r]
        u = state.lanes_u[r0:r1]
        g = state.payload[s:e]
        views = state.lanes_view[r0:r1]
        idx = (g[:, None], views[None, :])
        mu = state.means2d[idx]
        dx = state.lanes_px[None, r0:r1] - mu[..., 0]
        dy = state.lanes_py[None, r0:r1] - mu[..., 1]
        a, b, c = (state.rec_conic[s:e, n, None] for n in range(3))
        q = a * dx * dx + np.float32(2.0) * b * dx * dy + c * dy * dy
        alpha = np.minimum(state.rec_opacity[s:e, None] * np.exp(np.float32(-0.5) * q), ALPHA_MAX)
        alpha[(alpha < ALPHA_MIN) | ~state.visible[idx]] = 0
        out[pos : pos + r1 - r0] = composite(alpha, state.rec_color[s:e][:, u], state.background[u])
        pos += r1 - r0
    return out


def composite(alpha: np.ndarray, color: np.ndarray, background: np.ndarray) -> np.ndarray:
    """Front-to-back blend of ``(L, n)`` alphas/colors; stops once transmittance < 1e-4."""
    t_after = np.cumprod(np.float32(1.0) - alpha, axis=0, dtype=np.float32)
    t_before = np.empty_like(t_after)
    t_before[0] = 1.0
    t_before[1:] = t_after[:-1]
    live = t_before >= T_MIN
    contrib = np.where(live, color * alpha * t_before, np.float32(0.0))
    acc = np.cumsum(contrib, axis=0, dtype=np.float32)[-1]
    used = np.count_nonzero(live, axis=0)
    t_final = t_after[used - 1, np.arange(alpha.shape[1])]
    return acc + background * t_final


RUNS_PER_TASK = 4096


def blend(
    sorted_splats: SortedSplats,
    ranges: GaussianRangeTable,
    buffers: ProjectionBuffers,
    remap: RemapTable,
    matrix: ViewpointMatrix,
    clustering: Clustering,
    background=(0.0, 0.0, 0.0),
    mapping: str = "remapped",
    workers: int | None = 1,
) -> InterlacedImage:
    cfg = matrix.config
    if remap.config != cfg or ranges.num_tiles != cfg.num_tiles:
        raise InconsistentInputs("remap table / range table do not match the viewpoint matrix")
    if ranges.num_clusters != clustering.num_clusters or buffers.means2d.shape[1] != cfg.num_views:
        raise InconsistentInputs("range table / buffers do not match the clustering")
    if clustering.num_views != cfg.num_views:
        raise InconsistentInputs("clustering does not cover the display's views")

    bg = np.asarray(background, dtype=np.float32).reshape(3)
    sub = remap.ranks(mapping).astype(np.int64)
    tile = np.repeat(np.arange(cfg.num_tiles), np.diff(remap.offsets))
    pix, u = np.divmod(sub, 3)
    y, x = np.divmod(pix, cfg.width)
    view = matrix.flat[sub].astype(np.int64)
    lid = tile * clustering.num_clusters + clustering.assignment[view]
    start = ranges.starts.reshape(-1)[lid]
    end = ranges.ends.reshape(-1)[lid]

    values = bg[u].copy()
    cut = np.flatnonzero(lid[1:] != lid[:-1]) + 1
    first = np.concatenate([[0], cut])
    last = np.concatenate([cut, [lid.size]]) if lid.size else first
    busy = start[first] < end[first]
    first, last = first[busy], last[busy]

    if first.size:
        payload = sorted_splats.payload
        state = _BlendState(
            lanes_px=(x + 0.5).astype(np.float32),
            lanes_py=(y + 0.5).astype(np.float32),
            lanes_u=u,
            lanes_view=view,
            run_first=first,
            run_last=last,
            run_start=start[first],
            run_end=end[first],
            payload=payload,
            rec_conic=buffers.conics[payload, sorted_splats.cluster],
            rec_opacity=buffers.eff_opacity[payload, sorted_splats.cluster],
            rec_color=buffers.colors[payload, sorted_splats.cluster],
            means2d=buffers.means2d,
            visible=buffers.visible,
            background=bg,
        )
        spans = [(s, min(s + RUNS_PER_TASK, first.size)) for s in range(0, first.size, RUNS_PER_TASK)]
        chunks = process_map(_blend_runs, state, spans, workers)
        for (lo, hi), vals in zip(spans, chunks):
            values[_span_ranks(first[lo:hi], last[lo:hi])] = vals

    out = np.empty(cfg.num_subpixels, np.float32)
    out[sub] = values
    return InterlacedImage(data=out.reshape(cfg.height, cfg.width, 3), config=cfg)


def _span_ranks(first: np.ndarray, last: np.ndarray) -> np.ndarray:
    lengths = last - first
    offs = np.cumsum(lengths) - lengths
    return np.repeat(first - offs, lengths) + np.arange(lengths.sum())


# --- driver -----------------------------------------------------------------


@dataclass
class StageTimings:
    projection_ms: float = 0.0
    key_gen_ms: float = 0.0
    sort_ms: float = 0.0
    blend_ms: float = 0.0
    pair_count: int = 0
    peak_buffer_bytes: int = 0

    @property
    def total_ms(self) -> float:
        return self.projection_ms + self.key_gen_ms + self.sort_ms + self.blend_ms

    def to_dict(self) -> dict:
        return {
            "schema_version": 1,
            "stages_ms": {
                "projection": self.projection_ms,
                "key_gen": self.key_gen_ms,
                "sort": self.sort_ms,
                "blend": self.blend_ms,
            },
            "total_ms": self.total_ms,
            "pair_count": self.pair_count,
            "peak_buffer_bytes": self.peak_buffer_bytes,
        }


@dataclass(frozen=True)
class RenderOptions:
    disable_reuse: bool = False  # same as cluster_size=1
    disable_remap: bool = False  # raster-order thread mapping
    workers: int | None = None
    radius_pad: float = 0.0  # inflate key footprints (superfluous-key experiments)


@dataclass(frozen=True, eq=False)
class RenderResult:
    image: InterlacedImage
    timings: StageTimings
    clustering: Clustering
    buffers: ProjectionBuffers
    sorted_splats: SortedSplats
    ranges: GaussianRangeTable
    matrix: ViewpointMatrix
    remap: RemapTable
    mapping: str


@functools.lru_cache(maxsize=4)
def panel_tables(config: DisplayConfig, workers: int = 1) -> tuple[ViewpointMatrix, RemapTable]:
    """Viewpoint matrix and remap table; both depend only on the panel, so they are cached."""
    matrix = build_viewpoint_matrix(config, workers)
    return matrix, build_remap_table(matrix, config)


def _check_rig(display: DisplayConfig, rig: list[Camera]) -> None:
    if len(rig) != display.num_views:
        raise InconsistentInputs(f"rig has {len(rig)} cameras, display has {display.num_views} views")
    for j, cam in enumerate(rig):
        if (cam.width, cam.height) != (display.width, display.height):
            raise InconsistentInputs(
                f"camera {j} is {cam.width}x{cam.height}, panel is {display.width}x{display.height}"
            )


def run_pipeline(
    scene: GaussianScene,
    display: DisplayConfig,
    rig: list[Camera],
    cluster_size: int = 8,
    background=(0.0, 0.0, 0.0),
    options: RenderOptions | None = None,
) -> RenderResult:
    options = options or RenderOptions()
    _check_rig(display, rig)
    workers = options.workers
    size = 1 if options.disable_reuse else cluster_size
    clustering = cluster_views(display.num_views, size)
    matrix, remap = panel_tables(display)
    timings = StageTimings()

    t0 = time.perf_counter()
    buffers = project_all(scene, rig, clustering, workers)
    t1 = time.perf_counter()
    keys = generate_keys(buffers, clustering, display, options.radius_pad, workers)
    t2 = time.perf_counter()
    splats, ranges = sort_splats(keys)
    t3 = time.perf_counter()
    mapping = "raster" if options.disable_remap else "remapped"
    image = blend(splats, ranges, buffers, remap, matrix, clustering, background, mapping, workers)
    t4 = time.perf_counter()

    timings.projection_ms = (t1 - t0) * 1e3
    timings.key_gen_ms = (t2 - t1) * 1e3
    timings.sort_ms = (t3 - t2) * 1e3
    timings.blend_ms = (t4 - t3) * 1e3
    timings.pair_count = len(keys)
    timings.peak_buffer_bytes = int(
        buffers.nbytes + keys.keys.nbytes + keys.payload.nbytes
        + splats.keys.nbytes + splats.payload.nbytes + splats.cluster.nbytes
        + ranges.starts.nbytes + ranges.ends.nbytes + image.data.nbytes
    )
    return RenderResult(image, timings, clustering, buffers, splats, ranges, matrix, remap, mapping)


def render_lightfield(
    scene: GaussianScene,
    display: DisplayConfig,
    rig: list[Camera],
    cluster_size: int = 8,
    background=(0.0, 0.0, 0.0),
    options: RenderOptions | None = None,
) -> tuple[InterlacedImage, StageTimings]:
    res = run_pipeline(scene, display, rig, cluster_size, background, options)
    return res.image, res.timings
