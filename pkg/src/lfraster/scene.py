"""Gaussian scenes: storage, synthetic generation, covariance and SH color.

A scene is stored struct-of-arrays at float32 precision. SH coefficients are
held as ``(M, (deg+1)**2, 3)``: coefficient index first, RGB channel last,
so ``sh[:, 0]`` is the DC triplet.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .errors import DegreeMismatch, InvalidSpec, NonFiniteValue

SH_C0 = 0.28209479177387814
SH_C1 = 0.4886025119029199
SH_C2 = (
    1.0925484305920792,
    -1.0925484305920792,
    0.31539156525252005,
    -1.0925484305920792,
    0.5462742152960396,
)
SH_C3 = (
    -0.5900435899266435,
    2.890611442640554,
    -0.4570457994644658,
    0.3731763325901154,
    -0.4570457994644658,
    1.445305721320277,
    -0.5900435899266435,
)

LAYOUTS = ("grid", "sphere-shell", "uniform-box")


def sh_coeff_count(degree: int) -> int:
    return (degree + 1) ** 2


def sh_degree_from_count(n_coeffs: int) -> int:
    for deg in range(4):
        if (deg + 1) ** 2 == n_coeffs:
            return deg
    raise DegreeMismatch(f"{n_coeffs} SH coefficients per channel matches no degree in 0..3")


@dataclass(frozen=True)
class Gaussian3D:
    mean: np.ndarray
    rotation: np.ndarray  # (w, x, y, z)
    scale: np.ndarray
    opacity: float
    sh: np.ndarray  # ((deg+1)**2, 3)

    @property
    def sh_degree(self) -> int:
        return sh_degree_from_count(self.sh.shape[0])

    def covariance(self) -> np.ndarray:
        return covariance_from_params(self.rotation, self.scale)


@dataclass(frozen=True, eq=False)
class GaussianScene:
    """An ordered, immutable set of Gaussians sharing one SH degree."""

    means: np.ndarray
    rotations: np.ndarray
    scales: np.ndarray
    opacities: np.ndarray
    sh: np.ndarray
    sh_degree: int = field(default=0)

    def __post_init__(self) -> None:
        m = self.means.shape[0]
        arrays = {
            "means": (self.means, (m, 3)),
            "rotations": (self.rotations, (m, 4)),
            "scales": (self.scales, (m, 3)),
            "opacities": (self.opacities, (m,)),
            "sh": (self.sh, (m, sh_coeff_count(self.sh_degree), 3)),
        }
        for name, (arr, shape) in arrays.items():
            if arr.shape != shape:
                if name == "sh":
                    raise DegreeMismatch(
                        f"sh has shape {arr.shape}, expected {shape} for degree {self.sh_degree}"
                    )
                raise InvalidSpec(f"{name} has shape {arr.shape}, expected {shape}")
            if not np.all(np.isfinite(arr)):
                raise NonFiniteValue(f"non-finite value in {name}")
            arr = np.ascontiguousarray(arr, dtype=np.float32)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def __len__(self) -> int:
        return self.means.shape[0]

    def __getitem__(self, i: int) -> Gaussian3D:
        return Gaussian3D(
            mean=self.means[i],
            rotation=self.rotations[i],
            scale=self.scales[i],
            opacity=float(self.opacities[i]),
            sh=self.sh[i],
        )

    def __iter__(self) -> Iterator[Gaussian3D]:
        for i in range(len(self)):
            yield self[i]

    @property
    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        if len(self) == 0:
            zero = np.zeros(3, dtype=np.float32)
            return zero, zero
        return self.means.min(axis=0), self.means.max(axis=0)

    def covariances(self) -> np.ndarray:
        """World-space covariances, ``(M, 3, 3)`` float64."""
        return covariance_batch(self.rotations, self.scales)

    @classmethod
    def empty(cls, sh_degree: int = 0) -> "GaussianScene":
        n = sh_coeff_count(sh_degree)
        return cls(
            means=np.zeros((0, 3), np.float32),
            rotations=np.zeros((0, 4), np.float32),
            scales=np.zeros((0, 3), np.float32),
            opacities=np.zeros((0,), np.float32),
            sh=np.zeros((0, n, 3), np.float32),
            sh_degree=sh_degree,
        )

    @classmethod
    def from_gaussians(cls, gaussians: list[Gaussian3D], sh_degree: int | None = None) -> "GaussianScene":
        if not gaussians:
            return cls.empty(sh_degree or 0)
        deg = gaussians[0].sh_degree if sh_degree is None else sh_degree
        return cls(
            means=np.stack([g.mean for g in gaussians]),
            rotations=normalize_quaternions(np.stack([g.rotation for g in gaussians])),
            scales=np.stack([g.scale for g in gaussians]),
            opacities=np.array([g.opacity for g in gaussians]),
            sh=np.stack([g.sh for g in gaussians]),
            sh_degree=deg,
        )


def normalize_quaternions(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    norm = np.linalg.norm(q, axis=-1, keepdims=True)
    if np.any(norm == 0):
        raise NonFiniteValue("zero-length quaternion")
    return q / norm


def quaternion_to_matrix(q: np.ndarray) -> np.ndarray:
    """Rotation matrices for (w, x, y, z) quaternions; works on ``(..., 4)``."""
    q = normalize_quaternions(q)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    r = np.empty(q.shape[:-1] + (3, 3))
    r[..., 0, 0] = 1 - 2 * (y * y + z * z)
    r[..., 0, 1] = 2 * (x * y - w * z)
    r[..., 0, 2] = 2 * (x * z + w * y)
    r[..., 1, 0] = 2 * (x * y + w * z)
    r[..., 1, 1] = 1 - 2 * (x * x + z * z)
    r[..., 1, 2] = 2 * (y * z - w * x)
    r[..., 2, 0] = 2 * (x * z - w * y)
    r[..., 2, 1] = 2 * (y * z + w * x)
    r[..., 2, 2] = 1 - 2 * (x * x + y * y)
    return r


def covariance_batch(rotations: np.ndarray, scales: np.ndarray) -> np.ndarray:
    r = quaternion_to_matrix(rotations)
    m = r * np.asarray(scales, dtype=np.float64)[..., None, :]
    cov = m @ np.swapaxes(m, -1, -2)
    return 0.5 * (cov + np.swapaxes(cov, -1, -2))


def covariance_from_params(rotation, scale) -> np.ndarray:
    """Sigma = R S S^T R^T for a single Gaussian."""
    return covariance_batch(np.asarray(rotation)[None], np.asarray(scale)[None])[0]


def eval_sh_batch(sh: np.ndarray, degree: int, dirs: np.ndarray, clamp: bool = True) -> np.ndarray:
    """Evaluate real SH color for ``(M, n, 3)`` coefficients along ``(M, 3)`` unit directions."""
    sh = np.asarray(sh, dtype=np.float64)
    if sh.ndim != 3 or sh.shape[1] != sh_coeff_count(degree):
        raise DegreeMismatch(f"coefficients of shape {sh.shape} do not match degree {degree}")
    d = np.asarray(dirs, dtype=np.float64)
    result = SH_C0 * sh[:, 0]
    if degree > 0:
        x, y, z = (d[:, i : i + 1] for i in range(3))
        result = result - SH_C1 * y * sh[:, 1] + SH_C1 * z * sh[:, 2] - SH_C1 * x * sh[:, 3]
        if degree > 1:
            xx, yy, zz = x * x, y * y, z * z
            xy, yz, xz = x * y, y * z, x * z
            result = (
                result
                + SH_C2[0] * xy * sh[:, 4]
                + SH_C2[1] * yz * sh[:, 5]
                + SH_C2[2] * (2.0 * zz - xx - yy) * sh[:, 6]
                + SH_C2[3] * xz * sh[:, 7]
                + SH_C2[4] * (xx - yy) * sh[:, 8]
            )
            if degree > 2:
                result = (
                    result
                    + SH_C3[0] * y * (3.0 * xx - yy) * sh[:, 9]
                    + SH_C3[1] * xy * z * sh[:, 10]
                    + SH_C3[2] * y * (4.0 * zz - xx - yy) * sh[:, 11]
                    + SH_C3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy) * sh[:, 12]
                    + SH_C3[4] * x * (4.0 * zz - xx - yy) * sh[:, 13]
                    + SH_C3[5] * z * (xx - yy) * sh[:, 14]
                    + SH_C3[6] * x * (xx - 3.0 * yy) * sh[:, 15]
                )
    result = result + 0.5
    if clamp:
        result = np.clip(result, 0.0, 1.0)
    return result


def eval_sh(sh, degree: int, direction, clamp: bool = True) -> np.ndarray:
    """RGB color of one Gaussian's SH coefficients seen along ``direction``.

    ``sh`` may be ``((deg+1)**2, 3)`` or the flat channel-major form of
    ``3*(deg+1)**2`` scalars (all R coefficients, then G, then B).
    """
    sh = np.asarray(sh, dtype=np.float64)
    n = sh_coeff_count(degree)
    if sh.ndim == 1:
        if sh.size != 3 * n:
            raise DegreeMismatch(f"{sh.size} coefficients do not match degree {degree}")
        sh = sh.reshape(3, n).T
    if sh.shape != (n, 3):
        raise DegreeMismatch(f"coefficients of shape {sh.shape} do not match degree {degree}")
    return eval_sh_batch(sh[None], degree, np.asarray(direction, dtype=np.float64)[None], clamp)[0]


@dataclass(frozen=True)
class SyntheticSceneSpec:
    count: int
    layout: str = "uniform-box"
    extent: float = 1.0
    scale_range: tuple[float, float] = (0.02, 0.08)
    opacity_range: tuple[float, float] = (0.2, 0.9)
    sh_degree: int = 1
    seed: int = 0

    def validate(self) -> None:
        if self.count < 1:
            raise InvalidSpec("count must be >= 1")
        if self.layout not in LAYOUTS:
            raise InvalidSpec(f"layout must be one of {LAYOUTS}, got {self.layout!r}")
        if not self.extent > 0:
            raise InvalidSpec("extent must be positive")
        lo, hi = self.scale_range
        if not (0 < lo <= hi):
            raise InvalidSpec("scale_range must satisfy 0 < min <= max")
        lo, hi = self.opacity_range
        if not (0 <= lo <= hi <= 1):
            raise InvalidSpec("opacity_range must satisfy 0 <= min <= max <= 1")
        if self.sh_degree not in (0, 1, 2, 3):
            raise InvalidSpec("sh_degree must be in 0..3")
        if not 0 <= self.seed < 2**64:
            raise InvalidSpec("seed must be a 64-bit unsigned integer")


# muted primaries and secondaries; indexed by a spatial hash of the mean
_PALETTE = np.array(
    [
        [0.85, 0.25, 0.20],
        [0.20, 0.65, 0.30],
        [0.20, 0.35, 0.85],
        [0.90, 0.80, 0.20],
        [0.75, 0.30, 0.75],
        [0.25, 0.75, 0.80],
        [0.95, 0.55, 0.15],
        [0.60, 0.60, 0.60],
    ]
)


def _palette_index(means: np.ndarray, cell: float) -> np.ndarray:
    q = np.floor(means / cell).astype(np.int64)
    h = (q[:, 0] * 73856093) ^ (q[:, 1] * 19349663) ^ (q[:, 2] * 83492791)
    return np.mod(h, len(_PALETTE))


def generate_synthetic_scene(spec: SyntheticSceneSpec) -> GaussianScene:
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    n, ext = spec.count, spec.extent
    smin, smax = spec.scale_range

    if spec.layout == "grid":
        side = int(np.ceil(round(n ** (1.0 / 3.0), 9)))
        while side**3 < n:
            side += 1
        axis = np.linspace(-ext, ext, side) if side > 1 else np.zeros(1)
        gz, gy, gx = np.meshgrid(axis, axis, axis, indexing="ij")
        means = np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=1)[:n]
    elif spec.layout == "sphere-shell":
        d = rng.normal(size=(n, 3))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        radius = ext + rng.uniform(-smax, smax, size=(n, 1))
        means = d * radius
    else:
        means = rng.uniform(-ext, ext, size=(n, 3))

    rotations = normalize_quaternions(rng.normal(size=(n, 4)))
    scales = rng.uniform(smin, smax, size=(n, 3))
    opacities = rng.uniform(*spec.opacity_range, size=n)

    ncoef = sh_coeff_count(spec.sh_degree)
    sh = np.zeros((n, ncoef, 3))
    rgb = _PALETTE[_palette_index(means, cell=max(ext / 4.0, 1e-6))]
    sh[:, 0] = (rgb - 0.5) / SH_C0
    if ncoef > 1:
        sh[:, 1:] = rng.uniform(-0.1, 0.1, size=(n, ncoef - 1, 3))

    return GaussianScene(
        means=means,
        rotations=rotations,
        scales=scales,
        opacities=opacities,
        sh=sh,
        sh_degree=spec.sh_degree,
    )
