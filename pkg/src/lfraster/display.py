"""Lenticular display model.

Panel arrays are laid out ``(H, W, 3)`` (row, column, RGB subpixel), so a
subpixel ``(x, y, u)`` lives at ``data[y, x, u]`` and its flat index is
``(y * W + x) * 3 + u``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    ConfigMismatch,
    CountMismatch,
    InvalidConfig,
    SizeMismatch,
    ViewOutOfRange,
)
from .parallel import thread_map


@dataclass(frozen=True)
class DisplayConfig:
    width: int
    height: int
    tilt: float  # radians
    line_count: float  # grating pitch in subpixel units
    offset: float
    num_views: int
    tile_size: int = 16

    def __post_init__(self) -> None:
        if self.width < 1 or self.height < 1:
            raise InvalidConfig("panel width and height must be >= 1")
        if self.num_views < 1:
            raise InvalidConfig("num_views must be >= 1")
        if self.tile_size < 1:
            raise InvalidConfig("tile_size must be >= 1")
        if not (self.line_count > 0 and math.isfinite(self.line_count)):
            raise InvalidConfig("line_count must be a positive finite number")
        if not (math.isfinite(self.tilt) and math.isfinite(self.offset)):
            raise InvalidConfig("tilt and offset must be finite")
        if abs(math.cos(self.tilt)) < 1e-12:
            raise InvalidConfig("tilt of +-90 degrees is degenerate")

    @property
    def tiles_x(self) -> int:
        return -(-self.width // self.tile_size)

    @property
    def tiles_y(self) -> int:
        return -(-self.height // self.tile_size)

    @property
    def num_tiles(self) -> int:
        return self.tiles_x * self.tiles_y

    @property
    def num_subpixels(self) -> int:
        return self.width * self.height * 3

    def to_text(self) -> str:
        return (
            f"width={self.width}\nheight={self.height}\n"
            f"tilt_deg={math.degrees(self.tilt)!r}\nline_count={self.line_count!r}\n"
            f"offset={self.offset!r}\nviews={self.num_views}\ntile={self.tile_size}\n"
        )

    def to_dict(self) -> dict:
        return {
            "width": self.width,
            "height": self.height,
            "tilt_deg": math.degrees(self.tilt),
            "line_count": self.line_count,
            "offset": self.offset,
            "views": self.num_views,
            "tile": self.tile_size,
        }


_CONFIG_KEYS = {
    "width": int,
    "height": int,
    "tilt_deg": float,
    "line_count": float,
    "offset": float,
    "views": int,
    "tile": int,
}


def parse_display_config(text: str, **overrides) -> DisplayConfig:
    """Parse the flat ``key=value`` display file. Angles are in degrees."""
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidConfig(f"line {lineno}: expected key=value, got {raw!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in _CONFIG_KEYS:
            raise InvalidConfig(f"line {lineno}: unknown key {key!r}")
        try:
            values[key] = _CONFIG_KEYS[key](val)
        except ValueError as exc:
            raise InvalidConfig(f"line {lineno}: bad value for {key}: {val!r}") from exc
    values.update({k: v for k, v in overrides.items() if v is not None})
    missing = [k for k in ("width", "height", "line_count", "views") if k not in values]
    if missing:
        raise InvalidConfig(f"display config missing keys: {', '.join(missing)}")
    return DisplayConfig(
        width=values["width"],
        height=values["height"],
        tilt=math.radians(values.get("tilt_deg", 0.0)),
        line_count=values["line_count"],
        offset=values.get("offset", 0.0),
        num_views=values["views"],
        tile_size=values.get("tile", 16),
    )


def load_display_config(path: str | Path, **overrides) -> DisplayConfig:
    return parse_display_config(Path(path).read_text(), **overrides)


@dataclass(frozen=True, eq=False)
class ViewpointMatrix:
    data: np.ndarray  # (H, W, 3) view index per subpixel
    config: DisplayConfig

    def at(self, x: int, y: int, u: int) -> int:
        return int(self.data[y, x, u])

    @property
    def flat(self) -> np.ndarray:
        return self.data.reshape(-1)


def _view_index_rows(config: DisplayConfig, y0: int, y1: int) -> np.ndarray:
    w, lx, n = config.width, config.line_count, config.num_views
    sub = (3 * np.arange(w, dtype=np.float64)[:, None] + np.arange(3, dtype=np.float64)[None, :])
    row_shift = 3.0 * np.arange(y0, y1, dtype=np.float64) * math.tan(config.tilt)
    d_offset = sub[None, :, :] + row_shift[:, None, None] - config.offset
    x_offset = np.mod(d_offset, lx)
    j = np.floor(n * x_offset / lx)
    # mod can round up to exactly lx for tiny negative inputs; that is the top view
    np.minimum(j, n - 1, out=j)
    return j.astype(np.uint16 if n > 255 else np.uint8)


def build_viewpoint_matrix(config: DisplayConfig, workers: int = 1) -> ViewpointMatrix:
    """Evaluate the lenticular view assignment for every subpixel."""
    if not isinstance(config, DisplayConfig):
        raise InvalidConfig("expected a DisplayConfig")
    step = 256
    spans = [(y, min(y + step, config.height)) for y in range(0, config.height, step)]
    rows = thread_map(lambda s: _view_index_rows(config, *s), spans, workers)
    data = np.concatenate(rows, axis=0)
    data.setflags(write=False)
    return ViewpointMatrix(data=data, config=config)


def view_offsets(config: DisplayConfig, x, y, u) -> tuple[np.ndarray, np.ndarray]:
    """(d_offset, x_offset) for explicit subpixel coordinates; used for checks."""
    x, y, u = (np.asarray(a, dtype=np.float64) for a in (x, y, u))
    d = (3 * x + u) + 3.0 * y * math.tan(config.tilt) - config.offset
    return d, np.mod(d, config.line_count)


def tile_ids(config: DisplayConfig) -> np.ndarray:
    """Tile id of every subpixel, flat in panel order."""
    ts = config.tile_size
    tx = np.arange(config.width) // ts
    ty = np.arange(config.height) // ts
    tile = ty[:, None] * config.tiles_x + tx[None, :]
    dtype = np.uint16 if config.num_tiles <= 0xFFFF else np.int64
    return np.repeat(tile.astype(dtype).reshape(-1), 3)


def _stable_argsort(keys: np.ndarray) -> np.ndarray:
    return np.argsort(keys, kind="stable")


@dataclass(frozen=True, eq=False)
class RemapTable:
    """Thread-rank to subpixel lookup, one contiguous span of ranks per tile.

    ``order[offsets[t]:offsets[t+1]]`` lists tile ``t``'s flat subpixel
    indices sorted by view (stable in row-major order). ``raster`` is the
    same span layout without the view sort.
    """

    order: np.ndarray
    raster: np.ndarray
    offsets: np.ndarray
    config: DisplayConfig

    def ranks(self, mapping: str = "remapped") -> np.ndarray:
        if mapping == "remapped":
            return self.order
        if mapping == "raster":
            return self.raster
        raise ValueError(f"unknown mapping {mapping!r}")

    def tile_bounds(self, t: int) -> tuple[int, int, int, int]:
        c = self.config
        tx, ty = t % c.tiles_x, t // c.tiles_x
        x0, y0 = tx * c.tile_size, ty * c.tile_size
        return x0, y0, min(x0 + c.tile_size, c.width), min(y0 + c.tile_size, c.height)

    def tile_permutation(self, t: int) -> np.ndarray:
        """Psi_t as local indices (row-major within the clipped tile, subpixel-minor)."""
        x0, y0, x1, _ = self.tile_bounds(t)
        flat = self.order[self.offsets[t] : self.offsets[t + 1]].astype(np.int64)
        pix, u = np.divmod(flat, 3)
        y, x = np.divmod(pix, self.config.width)
        return ((y - y0) * (x1 - x0) + (x - x0)) * 3 + u

    def lookup(self, rank: int) -> tuple[int, int, int]:
        """Global thread rank -> subpixel coordinate (x, y, u)."""
        f = int(self.order[rank])
        pix, u = divmod(f, 3)
        y, x = divmod(pix, self.config.width)
        return x, y, u


def build_remap_table(matrix: ViewpointMatrix, config: DisplayConfig) -> RemapTable:
    if matrix.config != config or matrix.data.shape != (config.height, config.width, 3):
        raise ConfigMismatch("viewpoint matrix was not built from this display config")
    tiles = tile_ids(config)
    raster = _stable_argsort(tiles)
    by_view = _stable_argsort(matrix.flat)
    order = by_view[_stable_argsort(tiles[by_view])]
    del by_view
    counts = np.bincount(tiles, minlength=config.num_tiles)
    offsets = np.zeros(config.num_tiles + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])
    idx_type = np.int32 if config.num_subpixels < 2**31 else np.int64
    order = order.astype(idx_type)
    raster = raster.astype(idx_type)
    for a in (order, raster, offsets):
        a.setflags(write=False)
    return RemapTable(order=order, raster=raster, offsets=offsets, config=config)


@dataclass(frozen=True, eq=False)
class InterlacedImage:
    data: np.ndarray  # (H, W, 3) float32
    config: DisplayConfig

    def raw_bytes(self) -> bytes:
        """Little-endian float32 dump, row-major with subpixel minor."""
        return np.ascontiguousarray(self.data, dtype="<f4").tobytes()


def interlace(views, matrix: ViewpointMatrix) -> InterlacedImage:
    cfg = matrix.config
    views = list(views)
    if len(views) != cfg.num_views:
        raise CountMismatch(f"got {len(views)} views, display needs {cfg.num_views}")
    shape = (cfg.height, cfg.width, 3)
    out = np.zeros(shape, dtype=np.float32)
    for j, img in enumerate(views):
        img = np.asarray(img)
        if img.shape != shape:
            raise SizeMismatch(f"view {j} has shape {img.shape}, panel is {shape}")
        mask = matrix.data == j
        out[mask] = img[mask]
    return InterlacedImage(data=out, config=cfg)


def deinterlace(img: InterlacedImage | np.ndarray, matrix: ViewpointMatrix, j: int):
    """Sparse view ``j``: (values with zeros off-mask, boolean mask)."""
    cfg = matrix.config
    if not 0 <= j < cfg.num_views:
        raise ViewOutOfRange(f"view {j} outside [0, {cfg.num_views})")
    data = img.data if isinstance(img, InterlacedImage) else np.asarray(img)
    if data.shape != matrix.data.shape:
        raise SizeMismatch(f"image shape {data.shape} does not match panel {matrix.data.shape}")
    mask = matrix.data == j
    return np.where(mask, data, 0).astype(np.float32), mask


def viewpoint_csv(matrix: ViewpointMatrix) -> str:
    """One line per panel row; entries x-major, subpixel-minor."""
    rows = matrix.data.reshape(matrix.config.height, -1)
    return "".join(",".join(map(str, r.tolist())) + "\n" for r in rows)


def viewpoint_false_color(matrix: ViewpointMatrix) -> np.ndarray:
    """8-bit RGB image with view index mapped to hue; shape (H, 3W, 3)."""
    n = matrix.config.num_views
    h = matrix.data.reshape(matrix.config.height, -1).astype(np.float64) / max(n, 1)
    i = np.floor(h * 6.0).astype(int) % 6
    f = h * 6.0 - np.floor(h * 6.0)
    q, t = 1.0 - f, f
    one, zero = np.ones_like(h), np.zeros_like(h)
    table = [
        (one, t, zero), (q, one, zero), (zero, one, t),
        (zero, q, one), (t, zero, one), (one, zero, q),
    ]
    rgb = np.zeros(h.shape + (3,))
    for k, (r, g, b) in enumerate(table):
        sel = i == k
        rgb[sel] = np.stack([r[sel], g[sel], b[sel]], axis=1)
    return np.floor(rgb * 255.0 + 0.5).astype(np.uint8)
