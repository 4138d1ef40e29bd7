"""Reference full-frame renderer: every view rendered on its own, then interlaced.

Deliberately written as the plain per-view 3DGS loop (per tile, splat by
splat, early termination per pixel) so it can check the clustered pipeline.
"""
from __future__ import annotations

import numpy as np

from .camera import Camera, overlaps_image, project_gaussians
from .display import DisplayConfig, InterlacedImage, build_viewpoint_matrix, interlace
from .errors import CountMismatch, InconsistentInputs
from .parallel import thread_map
from .scene import GaussianScene

TILE = 16


def _tile_lists(mean2d, extent, depth, visible, width, height, tile):
    """(tile id, gaussian) pairs sorted by tile then depth, ties by gaussian index."""
    tiles_x = -(-width // tile)
    tiles_y = -(-height // tile)
    idx = np.flatnonzero(visible)
    lo = mean2d[idx].astype(np.float64) - extent[idx]
    hi = mean2d[idx].astype(np.float64) + extent[idx]
    x0 = np.clip(np.floor(lo[:, 0] / tile), 0, tiles_x - 1).astype(np.int64)
    x1 = np.clip(np.floor(hi[:, 0] / tile), 0, tiles_x - 1).astype(np.int64)
    y0 = np.clip(np.floor(lo[:, 1] / tile), 0, tiles_y - 1).astype(np.int64)
    y1 = np.clip(np.floor(hi[:, 1] / tile), 0, tiles_y - 1).astype(np.int64)
    tiles, owners = [], []
    for g, a, b, c, d in zip(idx, x0, x1, y0, y1):
        ty, tx = np.meshgrid(np.arange(c, d + 1), np.arange(a, b + 1), indexing="ij")
        t = (ty * tiles_x + tx).ravel()
        tiles.append(t)
        owners.append(np.full(t.size, g))
    if not tiles:
        return np.zeros(0, np.int64), np.zeros(0, np.int64)
    tiles = np.concatenate(tiles)
    owners = np.concatenate(owners)
    order = np.lexsort((owners, depth[owners], tiles))
    return tiles[order], owners[order]


def render_view_fullframe(
    scene: GaussianScene,
    camera: Camera,
    background=(0.0, 0.0, 0.0),
    tile: int = TILE,
) -> np.ndarray:
    """Render one view at full resolution, ``(H, W, 3)`` float32."""
    w, h = camera.width, camera.height
    bg = np.asarray(background, dtype=np.float32).reshape(3)
    image = np.empty((h, w, 3), np.float32)
    image[:] = bg
    if len(scene) == 0:
        return image
    p = project_gaussians(camera, scene.means, scene.covariances(), scene.opacities, scene.sh, scene.sh_degree)
    visible = p.valid & overlaps_image(p.mean2d, p.extent, w, h)
    tiles, owners = _tile_lists(p.mean2d, p.extent.astype(np.float64), p.depth, visible, w, h, tile)
    if tiles.size == 0:
        return image

    alpha_min = np.float32(1.0 / 255.0)
    tiles_x = -(-w // tile)
    bounds = np.flatnonzero(np.diff(tiles)) + 1
    for seg in np.split(np.arange(tiles.size), bounds):
        t = int(tiles[seg[0]])
        x0, y0 = (t % tiles_x) * tile, (t // tiles_x) * tile
        x1, y1 = min(x0 + tile, w), min(y0 + tile, h)
        yy, xx = np.meshgrid(np.arange(y0, y1), np.arange(x0, x1), indexing="ij")
        px = (xx.ravel() + 0.5).astype(np.float32)
        py = (yy.ravel() + 0.5).astype(np.float32)
        trans = np.ones(px.size, np.float32)
        color = np.zeros((px.size, 3), np.float32)
        done = np.zeros(px.size, bool)
        for g in owners[seg]:
            dx = px - p.mean2d[g, 0]
            dy = py - p.mean2d[g, 1]
            a, b, c = p.conic[g]
            q = a * dx * dx + np.float32(2.0) * b * dx * dy + c * dy * dy
            alpha = np.minimum(p.eff_opacity[g] * np.exp(np.float32(-0.5) * q), np.float32(0.99))
            hit = (alpha >= alpha_min) & ~done
            if not hit.any():
                continue
            ah = alpha[hit]
            color[hit] += p.color[g][None, :] * ah[:, None] * trans[hit, None]
            trans[hit] = trans[hit] * (np.float32(1.0) - ah)
            done |= trans < np.float32(1e-4)
            if done.all():
                break
        block = color + bg[None, :] * trans[:, None]
        image[y0:y1, x0:x1] = block.reshape(y1 - y0, x1 - x0, 3)
    return image


def render_views_fullframe(scene, rig: list[Camera], background=(0.0, 0.0, 0.0), workers=1) -> list[np.ndarray]:
    return thread_map(lambda cam: render_view_fullframe(scene, cam, background), rig, workers)


def render_lightfield_fullframe(
    scene: GaussianScene,
    display: DisplayConfig,
    rig: list[Camera],
    background=(0.0, 0.0, 0.0),
    workers=1,
    views: list[np.ndarray] | None = None,
) -> InterlacedImage:
    """Full-resolution render of every view followed by interlacing."""
    if len(rig) != display.num_views:
        raise CountMismatch(f"rig has {len(rig)} cameras, display has {display.num_views} views")
    for cam in rig:
        if (cam.width, cam.height) != (display.width, display.height):
            raise InconsistentInputs("camera resolution differs from the panel")
    if views is None:
        views = render_views_fullframe(scene, rig, background, workers)
    return interlace(views, build_viewpoint_matrix(display))
