"""``lfraster`` command line: scene/rig generation, rendering, oracle, metrics, benchmarks."""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .camera import RigSpec, generate_orbit_rig, rig_from_json, rig_to_json
from .coalesce import MAPPINGS, WarpModel, compare_mappings, simulate_blend_access
from .display import (
    build_viewpoint_matrix,
    deinterlace,
    load_display_config,
    viewpoint_csv,
    viewpoint_false_color,
)
from .errors import LFRasterError
from .imageio import read_image, write_png, write_raw
from .metrics import image_metrics, lightfield_metrics
from .oracle import render_lightfield_fullframe, render_views_fullframe
from .parallel import ENV_THREADS
from .ply import read_ply, write_ply
from .raster import RenderOptions, run_pipeline
from .scene import LAYOUTS, SyntheticSceneSpec, generate_synthetic_scene

SCHEMA_VERSION = 1


def _dump(path: Path | None, doc: dict) -> None:
    text = json.dumps(doc, indent=2, sort_keys=False) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _triple(text: str) -> tuple[float, float, float]:
    parts = [float(p) for p in text.replace(" ", "").split(",") if p]
    if len(parts) == 1:
        parts *= 3
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"expected one or three comma-separated numbers, got {text!r}")
    return tuple(parts)


def _int_list(text: str) -> list[int]:
    try:
        return [int(p) for p in text.split(",") if p.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def _threads(args) -> int:
    if args.threads is not None:
        return args.threads
    env = os.environ.get(ENV_THREADS)
    return int(env) if env and env.strip().lstrip("-").isdigit() else 1


def _display(args):
    return load_display_config(
        args.display,
        views=getattr(args, "views", None),
        tilt_deg=getattr(args, "tilt_deg", None),
        line_count=getattr(args, "line_count", None),
        offset=getattr(args, "offset", None),
    )


def _inputs(args):
    display = _display(args)
    scene = read_ply(args.scene)
    rig = rig_from_json(Path(args.rig).read_text())
    return scene, display, rig


# --- subcommands ------------------------------------------------------------


def cmd_gen_scene(args) -> int:
    spec = SyntheticSceneSpec(
        count=args.count,
        layout=args.layout,
        extent=args.extent,
        scale_range=(args.scale_min, args.scale_max),
        opacity_range=(args.opacity_min, args.opacity_max),
        sh_degree=args.sh_degree,
        seed=args.seed,
    )
    write_ply(args.out, generate_synthetic_scene(spec))
    return 0


def cmd_gen_rig(args) -> int:
    width, height, views = args.width, args.height, args.views
    if args.display:
        cfg = load_display_config(args.display)
        width, height = cfg.width, cfg.height
        views = views or cfg.num_views
    if not views:
        raise LFRasterError("gen-rig needs --views or --display")
    spec = RigSpec(
        num_views=views,
        angular_range=args.angular_range,
        orbit_radius=args.radius,
        look_at=args.look_at,
        up=args.up,
        fov_y=args.fov_y,
        width=width,
        height=height,
        znear=args.znear,
    )
    Path(args.out).write_text(rig_to_json(generate_orbit_rig(spec), spec) + "\n")
    return 0


def cmd_viewmat(args) -> int:
    cfg = _display(args)
    matrix = build_viewpoint_matrix(cfg, _threads(args))
    if args.csv:
        Path(args.csv).write_text(viewpoint_csv(matrix))
    if args.png:
        write_png(args.png, viewpoint_false_color(matrix))
    if not args.csv and not args.png:
        sys.stdout.write(viewpoint_csv(matrix))
    return 0


def _render_config(args, display, threads: bool = False) -> dict:
    doc = {
        "scene": str(args.scene),
        "display": display.to_dict(),
        "rig": str(args.rig),
        "cluster_size": getattr(args, "cluster_size", None),
        "no_reuse": getattr(args, "no_reuse", False),
        "no_remap": getattr(args, "no_remap", False),
        "background": list(args.background),
        "seed": args.seed,
    }
    if threads:
        # only the manifest records this; reports must not depend on it
        doc["threads"] = _threads(args)
    return doc


def _sidecar(out: Path, suffix: str) -> Path:
    return out.with_name(out.stem + suffix)


def cmd_render(args) -> int:
    t0 = time.perf_counter()
    scene, display, rig = _inputs(args)
    opts = RenderOptions(disable_reuse=args.no_reuse, disable_remap=args.no_remap, workers=_threads(args))
    res = run_pipeline(scene, display, rig, args.cluster_size, args.background, opts)
    out = Path(args.out)
    outputs = {"image": str(out)}
    write_png(out, res.image.data)
    if args.raw:
        write_raw(args.raw, res.image.data)
        outputs["raw"] = str(args.raw)
    timings_path = Path(args.timings) if args.timings else _sidecar(out, ".timings.json")
    _dump(timings_path, res.timings.to_dict())
    outputs["timings"] = str(timings_path)
    manifest_path = Path(args.manifest) if args.manifest else _sidecar(out, ".manifest.json")
    outputs["manifest"] = str(manifest_path)
    _dump(manifest_path, {
        "schema_version": SCHEMA_VERSION,
        "tool": {"name": "lfraster", "version": __version__},
        "command": "render",
        "config": _render_config(args, display, threads=True),
        "outputs": outputs,
        "wall_clock_ms": (time.perf_counter() - t0) * 1e3,
    })
    return 0


def cmd_oracle_render(args) -> int:
    scene, display, rig = _inputs(args)
    views = render_views_fullframe(scene, rig, args.background, _threads(args))
    image = render_lightfield_fullframe(scene, display, rig, args.background, views=views)
    write_png(args.out, image.data)
    if args.raw:
        write_raw(args.raw, image.data)
    if args.views_out:
        d = Path(args.views_out)
        d.mkdir(parents=True, exist_ok=True)
        for j, v in enumerate(views):
            write_png(d / f"view_{j:03d}.png", v)
    return 0


def cmd_deinterlace(args) -> int:
    cfg = _display(args)
    matrix = build_viewpoint_matrix(cfg, _threads(args))
    img = read_image(args.image, cfg.width, cfg.height)
    values, mask = deinterlace(img, matrix, args.view)
    write_png(args.out, values)
    if args.mask_out:
        write_png(args.mask_out, mask.astype(np.uint8) * 255)
    return 0


def cmd_metrics(args) -> int:
    cfg = load_display_config(args.display) if args.display else None
    w, h = (cfg.width, cfg.height) if cfg else (None, None)
    a = read_image(args.a, w, h)
    b = read_image(args.b, w, h)
    mask = None
    if args.mask:
        mask = read_image(args.mask, w, h) > 0.5
    if cfg is not None and mask is None:
        report = lightfield_metrics(a, b, build_viewpoint_matrix(cfg))
    else:
        report = image_metrics(a, b, mask)
    _dump(Path(args.out) if args.out else None, report.to_dict())
    return 0


def cmd_bench(args) -> int:
    scene, display, rig = _inputs(args)
    workers = _threads(args)
    oracle = render_lightfield_fullframe(scene, display, rig, args.background, workers)
    variants = [(c, False, False) for c in args.cluster_sizes]
    if args.ablations:
        base = max(args.cluster_sizes)
        variants += [(base, False, True), (base, True, True)]
    rows = []
    for size, no_reuse, no_remap in variants:
        opts = RenderOptions(disable_reuse=no_reuse, disable_remap=no_remap, workers=workers)
        runs = [run_pipeline(scene, display, rig, size, args.background, opts) for _ in range(args.repeats)]
        walls = sorted(r.timings.total_ms for r in runs)
        m = image_metrics(runs[0].image.data, oracle.data)
        rows.append({
            "cluster_size": 1 if no_reuse else size,
            "no_reuse": no_reuse,
            "no_remap": no_remap,
            "timings": runs[0].timings.to_dict(),
            "median_total_ms": walls[len(walls) // 2],
            "psnr_db": "inf" if math.isinf(m.psnr) else m.psnr,
            "ssim": m.ssim,
        })
    _dump(Path(args.out) if args.out else None, {
        "schema_version": SCHEMA_VERSION,
        "config": _render_config(args, display),
        "rows": rows,
    })
    return 0


def cmd_coalesce_sim(args) -> int:
    scene, display, rig = _inputs(args)
    workers = _threads(args)
    opts = RenderOptions(disable_reuse=args.no_reuse, workers=workers)
    res = run_pipeline(scene, display, rig, args.cluster_size, args.background, opts)
    model = WarpModel(args.warp_size, args.transaction_bytes, args.element_bytes)
    if args.mapping == "both":
        doc = compare_mappings(res, model, workers)
    else:
        rep = simulate_blend_access(res.ranges, res.remap, res.matrix, res.clustering, model, args.mapping, workers)
        doc = {"schema_version": SCHEMA_VERSION, args.mapping: rep.to_dict()}
    doc["config"] = _render_config(args, display)
    _dump(Path(args.out) if args.out else None, doc)
    if args.hist_csv:
        lines = ["mapping,distinct_lists,warps"]
        for m in MAPPINGS:
            if m in doc:
                hist = doc[m]["distinct_lists_per_warp"]["histogram"]
                lines += [f"{m},{i},{n}" for i, n in enumerate(hist)]
        Path(args.hist_csv).write_text("\n".join(lines) + "\n")
    return 0


# --- parser -----------------------------------------------------------------


def _add_display(p, required=True):
    p.add_argument("--display", required=required, help="display config file (key=value)")
    p.add_argument("--views", type=int, help="override the number of views")
    p.add_argument("--tilt-deg", type=float, help="override lens tilt in degrees")
    p.add_argument("--line-count", type=float, help="override lens pitch in subpixels")
    p.add_argument("--offset", type=float, help="override the lens offset")


def _add_render_inputs(p):
    p.add_argument("--scene", required=True, help="3DGS PLY file")
    _add_display(p)
    p.add_argument("--rig", required=True, help="rig JSON")
    p.add_argument("--background", type=_triple, default=(0.0, 0.0, 0.0), help="r,g,b in [0,1]")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lfraster", description=__doc__)
    parser.add_argument("--version", action="version", version=f"lfraster {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--threads", type=int, default=None,
                        help=f"worker count (default ${ENV_THREADS} or 1; <=0 means all cores)")
    common.add_argument("--seed", type=int, default=0)
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("gen-scene", parents=[common], help="synthetic Gaussian scene to PLY")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--layout", choices=LAYOUTS, default="uniform-box")
    p.add_argument("--extent", type=float, default=1.0)
    p.add_argument("--scale-min", type=float, default=0.02)
    p.add_argument("--scale-max", type=float, default=0.08)
    p.add_argument("--opacity-min", type=float, default=0.2)
    p.add_argument("--opacity-max", type=float, default=0.9)
    p.add_argument("--sh-degree", type=int, default=1)
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(func=cmd_gen_scene)

    p = sub.add_parser("gen-rig", parents=[common], help="orbit camera rig to JSON")
    p.add_argument("--views", type=int)
    p.add_argument("--display", help="take resolution and view count from a display config")
    p.add_argument("--angular-range", type=float, default=53.0, help="total fan in degrees")
    p.add_argument("--radius", type=float, default=5.0)
    p.add_argument("--look-at", type=_triple, default=(0.0, 0.0, 0.0))
    p.add_argument("--up", type=_triple, default=(0.0, 1.0, 0.0))
    p.add_argument("--fov-y", type=float, default=30.0)
    p.add_argument("--width", type=int, default=192)
    p.add_argument("--height", type=int, default=108)
    p.add_argument("--znear", type=float, default=0.01)
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(func=cmd_gen_rig)

    p = sub.add_parser("viewmat", parents=[common], help="viewpoint index matrix as CSV and false-color PNG")
    _add_display(p)
    p.add_argument("--csv")
    p.add_argument("--png")
    p.set_defaults(func=cmd_viewmat)

    p = sub.add_parser("render", parents=[common], help="interlaced light-field render")
    _add_render_inputs(p)
    p.add_argument("--cluster-size", type=int, default=8)
    p.add_argument("--no-reuse", action="store_true", help="one view per cluster")
    p.add_argument("--no-remap", action="store_true", help="raster-order thread mapping")
    p.add_argument("-o", "--out", required=True, help="interlaced PNG")
    p.add_argument("--raw", help="also write a little-endian float32 dump")
    p.add_argument("--timings", help="stage timings JSON (default: <out>.timings.json)")
    p.add_argument("--manifest", help="run manifest JSON (default: <out>.manifest.json)")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("oracle-render", parents=[common], help="full-frame render of every view, then interlace")
    _add_render_inputs(p)
    p.add_argument("-o", "--out", required=True)
    p.add_argument("--raw")
    p.add_argument("--views-out", help="directory for per-view PNGs")
    p.set_defaults(func=cmd_oracle_render)

    p = sub.add_parser("deinterlace", parents=[common], help="extract one sparse view")
    p.add_argument("--image", required=True, help="interlaced PNG or raw float dump")
    _add_display(p)
    p.add_argument("--view", type=int, required=True)
    p.add_argument("-o", "--out", required=True)
    p.add_argument("--mask-out")
    p.set_defaults(func=cmd_deinterlace)

    p = sub.add_parser("metrics", parents=[common], help="PSNR / SSIM between two images")
    p.add_argument("a")
    p.add_argument("b")
    p.add_argument("--mask", help="PNG mask, nonzero = included")
    p.add_argument("--display", help="panel config: sizes raw dumps and adds a per-view breakdown")
    p.add_argument("-o", "--out")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("bench", parents=[common], help="timings and quality over cluster sizes")
    _add_render_inputs(p)
    p.add_argument("--cluster-sizes", type=_int_list, default=[1, 2, 4, 8])
    p.add_argument("--ablations", action="store_true", help="add --no-remap and --no-reuse --no-remap rows")
    p.add_argument("--repeats", type=int, default=1)
    p.add_argument("-o", "--out")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("coalesce-sim", parents=[common], help="warp memory-coalescing model of the blend stage")
    _add_render_inputs(p)
    p.add_argument("--cluster-size", type=int, default=8)
    p.add_argument("--no-reuse", action="store_true")
    p.add_argument("--mapping", choices=("raster", "remapped", "both"), default="both")
    p.add_argument("--warp-size", type=int, default=32)
    p.add_argument("--transaction-bytes", type=int, default=128)
    p.add_argument("--element-bytes", type=int, default=32)
    p.add_argument("-o", "--out")
    p.add_argument("--hist-csv")
    p.set_defaults(func=cmd_coalesce_sim)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # exits 2 with usage on bad arguments
    try:
        return args.func(args)
    except (LFRasterError, OSError, ValueError, KeyError) as exc:
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"lfraster {args.command}: error: {msg}", file=sys.stderr)
        return 1


run = main

if __name__ == "__main__":
    sys.exit(main())
