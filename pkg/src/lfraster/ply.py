"""Binary little-endian PLY in the INRIA 3DGS property layout."""
from __future__ import annotations

import re
import warnings
from pathlib import Path

import numpy as np

from .errors import MalformedHeader, NonFiniteValue, TruncatedBody, UnsupportedFormat
from .scene import GaussianScene, normalize_quaternions, sh_coeff_count

_PLY_TYPES = {
    "char": "i1", "int8": "i1",
    "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2",
    "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4",
    "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4",
    "double": "f8", "float64": "f8",
}

_REQUIRED = ["x", "y", "z", "f_dc_0", "f_dc_1", "f_dc_2", "opacity",
             "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3"]
_IGNORED = {"nx", "ny", "nz"}
_REST = re.compile(r"f_rest_(\d+)$")


def _parse_header(blob: bytes):
    if not blob.startswith(b"ply"):
        raise MalformedHeader("missing 'ply' magic")
    end = blob.find(b"end_header")
    if end < 0:
        raise MalformedHeader("missing end_header")
    nl = blob.find(b"\n", end)
    if nl < 0:
        raise MalformedHeader("end_header not terminated by newline")
    try:
        lines = blob[:end].decode("ascii").splitlines()
    except UnicodeDecodeError as exc:
        raise MalformedHeader("header is not ASCII") from exc

    fmt = None
    elements: list[tuple[str, int, list[tuple[str, str]]]] = []
    for raw in lines[1:]:
        parts = raw.split()
        if not parts or parts[0] in ("comment", "obj_info"):
            continue
        if parts[0] == "format":
            if len(parts) < 2:
                raise MalformedHeader(f"bad format line: {raw!r}")
            fmt = parts[1]
        elif parts[0] == "element":
            if len(parts) != 3 or not parts[2].isdigit():
                raise MalformedHeader(f"bad element line: {raw!r}")
            elements.append((parts[1], int(parts[2]), []))
        elif parts[0] == "property":
            if not elements:
                raise MalformedHeader("property before any element")
            if parts[1] == "list":
                raise UnsupportedFormat("list properties are not supported")
            if len(parts) != 3 or parts[1] not in _PLY_TYPES:
                raise MalformedHeader(f"bad property line: {raw!r}")
            elements[-1][2].append((parts[2], _PLY_TYPES[parts[1]]))
        else:
            raise MalformedHeader(f"unexpected header line: {raw!r}")

    if fmt is None:
        raise MalformedHeader("missing format line")
    if fmt != "binary_little_endian":
        raise UnsupportedFormat(f"only binary_little_endian is supported, got {fmt}")
    return elements, nl + 1


def load_ply(blob: bytes) -> GaussianScene:
    """Parse a 3DGS PLY blob into a scene (activations applied)."""
    elements, offset = _parse_header(blob)
    vertex = None
    for name, count, props in elements:
        dtype = np.dtype([(p, "<" + t) for p, t in props])
        if name == "vertex":
            vertex = (count, props, dtype, offset)
        offset += count * dtype.itemsize
    if vertex is None:
        raise MalformedHeader("no vertex element")
    if len(blob) < offset:
        raise TruncatedBody(f"body holds {len(blob)} bytes, header promises {offset}")

    count, props, dtype, start = vertex
    names = [p for p, _ in props]
    missing = [p for p in _REQUIRED if p not in names]
    if missing:
        raise MalformedHeader(f"missing vertex properties: {', '.join(missing)}")

    rest_idx = sorted(int(m.group(1)) for p in names if (m := _REST.match(p)))
    if rest_idx != list(range(len(rest_idx))):
        raise MalformedHeader("f_rest_* properties are not contiguous from 0")
    per_channel = len(rest_idx) // 3 + 1
    degree = next((d for d in range(4) if sh_coeff_count(d) == per_channel), None)
    if degree is None or len(rest_idx) % 3:
        raise MalformedHeader(f"{len(rest_idx)} f_rest properties match no SH degree in 0..3")

    known = set(_REQUIRED) | _IGNORED | {f"f_rest_{i}" for i in rest_idx}
    extra = [p for p in names if p not in known]
    if extra:
        warnings.warn(f"ignoring unknown PLY properties: {', '.join(extra)}", stacklevel=2)

    data = np.frombuffer(blob, dtype=dtype, count=count, offset=start)

    def col(*fields):
        return np.stack([data[f].astype(np.float64) for f in fields], axis=1) if count else np.zeros((0, len(fields)))

    means = col("x", "y", "z")
    dc = col("f_dc_0", "f_dc_1", "f_dc_2")
    rest = col(*[f"f_rest_{i}" for i in rest_idx]) if rest_idx else np.zeros((count, 0))
    logit = col("opacity")[:, 0]
    log_scale = col("scale_0", "scale_1", "scale_2")
    rot = col("rot_0", "rot_1", "rot_2", "rot_3")

    for label, arr in (("position", means), ("sh", dc), ("sh", rest), ("opacity", logit),
                       ("scale", log_scale), ("rotation", rot)):
        if not np.all(np.isfinite(arr)):
            raise NonFiniteValue(f"non-finite {label} value in PLY body")

    sh = np.empty((count, per_channel, 3))
    sh[:, 0] = dc
    # f_rest is channel-major: all R coefficients, then G, then B
    sh[:, 1:] = rest.reshape(count, 3, per_channel - 1).transpose(0, 2, 1)
    with np.errstate(over="ignore"):
        opacities = 1.0 / (1.0 + np.exp(-logit))
        scales = np.exp(log_scale)
    if not np.all(np.isfinite(scales)):
        raise NonFiniteValue("scale overflows after exp")
    return GaussianScene(
        means=means,
        rotations=normalize_quaternions(rot) if count else rot,
        scales=scales,
        opacities=opacities,
        sh=sh,
        sh_degree=degree,
    )


def save_ply(scene: GaussianScene) -> bytes:
    """Serialize a scene as a 3DGS PLY (logit opacity, log scale)."""
    m = len(scene)
    n_rest = 3 * (sh_coeff_count(scene.sh_degree) - 1)
    fields = ["x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2"]
    fields += [f"f_rest_{i}" for i in range(n_rest)]
    fields += ["opacity", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3"]

    header = ["ply", "format binary_little_endian 1.0", f"element vertex {m}"]
    header += [f"property float {f}" for f in fields]
    header.append("end_header")

    data = np.zeros(m, dtype=np.dtype([(f, "<f4") for f in fields]))
    for i, f in enumerate("xyz"):
        data[f] = scene.means[:, i]
    for c in range(3):
        data[f"f_dc_{c}"] = scene.sh[:, 0, c]
    rest = scene.sh[:, 1:].transpose(0, 2, 1).reshape(m, -1)
    for i in range(n_rest):
        data[f"f_rest_{i}"] = rest[:, i]
    o = np.clip(scene.opacities.astype(np.float64), 1e-12, 1 - 1e-12)
    data["opacity"] = np.log(o / (1.0 - o))
    log_scale = np.log(scene.scales.astype(np.float64))
    for i in range(3):
        data[f"scale_{i}"] = log_scale[:, i]
        data[f"rot_{i}"] = scene.rotations[:, i]
    data["rot_3"] = scene.rotations[:, 3]
    return ("\n".join(header) + "\n").encode("ascii") + data.tobytes()


def read_ply(path: str | Path) -> GaussianScene:
    return load_ply(Path(path).read_bytes())


def write_ply(path: str | Path, scene: GaussianScene) -> None:
    Path(path).write_bytes(save_ply(scene))
