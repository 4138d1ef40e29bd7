"""Warp-level memory access model for the blend stage.

Each warp is ``warp_size`` consecutive thread ranks inside one tile's rank
span. At blend step ``s`` every lane whose list still has records reads
record ``start + s`` of its own (tile, cluster) list; the byte addresses are
bucketed into aligned segments and each distinct segment costs one
transaction. Early termination and caches are not modeled.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .camera import Clustering
from .display import RemapTable, ViewpointMatrix
from .errors import InconsistentInputs, InvalidConfig
from .parallel import thread_map

MAPPINGS = ("raster", "remapped")


@dataclass(frozen=True)
class WarpModel:
    warp_size: int = 32
    transaction_bytes: int = 128
    element_bytes: int = 32

    def __post_init__(self) -> None:
        if min(self.warp_size, self.transaction_bytes, self.element_bytes) <= 0:
            raise InvalidConfig("warp model sizes must be positive")
        if self.transaction_bytes % self.element_bytes:
            raise InvalidConfig("transaction_bytes must be a multiple of element_bytes")


@dataclass
class CoalesceReport:
    mapping: str
    total_warps: int
    distinct_lists_hist: list  # index = distinct lists in a warp
    distinct_lists_mean: float
    transactions_total: int
    transactions_ideal: int

    @property
    def divergence_ratio(self) -> float:
        if self.transactions_ideal == 0:
            return 1.0
        return self.transactions_total / self.transactions_ideal

    def to_dict(self) -> dict:
        return {
            "mapping": self.mapping,
            "total_warps": self.total_warps,
            "distinct_lists_per_warp": {
                "mean": self.distinct_lists_mean,
                "histogram": self.distinct_lists_hist,
            },
            "transactions_total": self.transactions_total,
            "transactions_ideal": self.transactions_ideal,
            "divergence_ratio": self.divergence_ratio,
        }


def warp_ids(tile_offsets: np.ndarray, warp_size: int) -> tuple[np.ndarray, int]:
    """Warp index of every rank; warps restart at each tile boundary."""
    sizes = np.diff(tile_offsets)
    per_tile = -(-sizes // warp_size)
    first_warp = np.cumsum(per_tile) - per_tile
    tile = np.repeat(np.arange(sizes.size), sizes)
    local = np.arange(int(tile_offsets[-1])) - tile_offsets[:-1][tile]
    return first_warp[tile] + local // warp_size, int(per_tile.sum())


WARPS_PER_TASK = 2048


def _warp_chunk(args):
    w, starts, lengths, lo, hi, step_bytes, seg_bytes = args
    # w is sorted, so a warp range is a slice
    a, b = np.searchsorted(w, [lo, hi])
    w, s, n = w[a:b], starts[a:b], lengths[a:b]
    keep = n > 0
    w, s, n = w[keep], s[keep], n[keep]
    if w.size == 0:
        return 0, 0
    # steps of each warp = its longest list
    steps = np.zeros(hi - lo, np.int64)
    np.maximum.at(steps, w - lo, n)
    owner = np.repeat(np.arange(w.size), n)
    step = np.arange(owner.size) - np.repeat(np.cumsum(n) - n, n)
    seg = (s[owner] + step) * step_bytes // seg_bytes
    ww = w[owner]
    # one transaction per distinct (warp, step, segment)
    order = np.lexsort((seg, step, ww))
    ww, step, seg = ww[order], step[order], seg[order]
    new = (np.diff(ww) != 0) | (np.diff(step) != 0) | (np.diff(seg) != 0)
    return int(new.sum()) + 1, int(steps.sum())


def simulate_lists(
    list_ids: np.ndarray,
    starts: np.ndarray,
    ends: np.ndarray,
    tile_offsets: np.ndarray,
    model: WarpModel = WarpModel(),
    mapping: str = "remapped",
    workers: int | None = 1,
) -> CoalesceReport:
    """Core model. ``list_ids``/``starts``/``ends`` are given per thread rank."""
    list_ids = np.asarray(list_ids, dtype=np.int64)
    starts = np.asarray(starts, dtype=np.int64)
    ends = np.asarray(ends, dtype=np.int64)
    tile_offsets = np.asarray(tile_offsets, dtype=np.int64)
    if not (list_ids.shape == starts.shape == ends.shape) or tile_offsets[-1] != list_ids.size:
        raise InconsistentInputs("per-rank arrays and tile offsets disagree")
    if np.any(ends < starts):
        raise InconsistentInputs("list range with end < start")

    w, n_warps = warp_ids(tile_offsets, model.warp_size)
    # lanes sharing a list issue identical addresses; keep one lane per (warp, list)
    span = int(list_ids.max()) + 1 if list_ids.size else 1
    _, first = np.unique(w * span + list_ids, return_index=True)
    uw, us, ul = w[first], starts[first], ends[first] - starts[first]
    distinct = np.bincount(uw, minlength=n_warps)

    tasks = [
        (uw, us, ul, lo, min(lo + WARPS_PER_TASK, n_warps), model.element_bytes, model.transaction_bytes)
        for lo in range(0, n_warps, WARPS_PER_TASK)
    ]
    parts = thread_map(_warp_chunk, tasks, workers)
    return CoalesceReport(
        mapping=mapping,
        total_warps=n_warps,
        distinct_lists_hist=np.bincount(distinct).tolist() if n_warps else [],
        distinct_lists_mean=float(distinct.mean()) if n_warps else 0.0,
        transactions_total=sum(p[0] for p in parts),
        transactions_ideal=sum(p[1] for p in parts),
    )


def simulate_blend_access(
    ranges,
    remap: RemapTable,
    matrix: ViewpointMatrix,
    clustering: Clustering,
    model: WarpModel = WarpModel(),
    mapping: str = "remapped",
    workers: int | None = 1,
) -> CoalesceReport:
    """Model the blend stage's record fetches for one thread mapping."""
    if mapping not in MAPPINGS:
        raise ValueError(f"mapping must be one of {MAPPINGS}")
    cfg = matrix.config
    if remap.config != cfg or ranges.num_tiles != cfg.num_tiles:
        raise InconsistentInputs("range table / remap table do not match the viewpoint matrix")
    if ranges.num_clusters != clustering.num_clusters or clustering.num_views != cfg.num_views:
        raise InconsistentInputs("range table does not match the clustering")
    sub = remap.ranks(mapping).astype(np.int64)
    tile = np.repeat(np.arange(cfg.num_tiles), np.diff(remap.offsets))
    lid = tile * clustering.num_clusters + clustering.assignment[matrix.flat[sub].astype(np.int64)]
    return simulate_lists(
        lid,
        ranges.starts.reshape(-1)[lid],
        ranges.ends.reshape(-1)[lid],
        remap.offsets,
        model,
        mapping,
        workers,
    )


def compare_mappings(result, model: WarpModel = WarpModel(), workers: int | None = 1) -> dict:
    """Both mappings side by side for one render result."""
    reports = {
        m: simulate_blend_access(result.ranges, result.remap, result.matrix, result.clustering, model, m, workers)
        for m in MAPPINGS
    }
    raster, remapped = reports["raster"].transactions_total, reports["remapped"].transactions_total
    return {
        "schema_version": 1,
        "model": {
            "warp_size": model.warp_size,
            "transaction_bytes": model.transaction_bytes,
            "element_bytes": model.element_bytes,
            "definition": "per warp step, one transaction per distinct aligned segment among active lanes; "
                          "early termination and caches ignored",
        },
        "raster": reports["raster"].to_dict(),
        "remapped": reports["remapped"].to_dict(),
        "transaction_reduction": (1.0 - remapped / raster) if raster else 0.0,
    }
