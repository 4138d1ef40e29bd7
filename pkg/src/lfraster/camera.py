"""Cameras, orbit rigs, view clustering and the projection operators.

Camera convention: ``X_cam = R @ X_world + t`` with +z forward, +x right
and +y down in the image. Pixel ``(x, y)`` has its center at
``(x + 0.5, y + 0.5)``.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DegenerateCovariance, InvalidSize, InvalidSpec
from .scene import Gaussian3D, covariance_batch, eval_sh_batch

LOW_PASS = 0.3
MIN_ALPHA = 1.0 / 255.0


@dataclass(frozen=True, eq=False)
class Camera:
    rotation: np.ndarray
    translation: np.ndarray
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    znear: float = 0.01

    def __post_init__(self) -> None:
        r = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if not np.allclose(r @ r.T, np.eye(3), atol=1e-5):
            raise InvalidSpec("camera rotation is not orthonormal")
        if not (self.fx > 0 and self.fy > 0 and self.znear > 0):
            raise InvalidSpec("fx, fy and znear must be positive")
        if self.width < 1 or self.height < 1:
            raise InvalidSpec("camera resolution must be positive")
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @property
    def position(self) -> np.ndarray:
        return -self.rotation.T @ self.translation

    @property
    def forward(self) -> np.ndarray:
        return self.rotation[2]

    def to_dict(self) -> dict:
        return {
            "rotation": self.rotation.reshape(-1).tolist(),
            "translation": self.translation.tolist(),
            "fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
            "width": self.width, "height": self.height, "znear": self.znear,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Camera":
        return cls(
            rotation=np.asarray(d["rotation"], dtype=np.float64).reshape(3, 3),
            translation=np.asarray(d["translation"], dtype=np.float64),
            fx=float(d["fx"]), fy=float(d["fy"]), cx=float(d["cx"]), cy=float(d["cy"]),
            width=int(d["width"]), height=int(d["height"]), znear=float(d.get("znear", 0.01)),
        )


def look_at_camera(position, target, up, fx, fy, cx, cy, width, height, znear=0.01) -> Camera:
    position = np.asarray(position, dtype=np.float64)
    z = np.asarray(target, dtype=np.float64) - position
    z /= np.linalg.norm(z)
    down = -np.asarray(up, dtype=np.float64)
    y = down - (down @ z) * z
    ny = np.linalg.norm(y)
    if ny < 1e-9:
        raise InvalidSpec("up vector is parallel to the viewing direction")
    y /= ny
    x = np.cross(y, z)
    rot = np.stack([x, y, z])
    return Camera(rot, -rot @ position, fx, fy, cx, cy, width, height, znear)


@dataclass(frozen=True)
class RigSpec:
    num_views: int
    angular_range: float = 53.0  # degrees, total fan
    orbit_radius: float = 5.0
    look_at: tuple[float, float, float] = (0.0, 0.0, 0.0)
    up: tuple[float, float, float] = (0.0, 1.0, 0.0)
    fov_y: float = 30.0  # degrees
    width: int = 192
    height: int = 108
    znear: float = 0.01

    def validate(self) -> None:
        if self.num_views < 1:
            raise InvalidSpec("num_views must be >= 1")
        if self.angular_range < 0:
            raise InvalidSpec("angular_range must be >= 0")
        if not self.orbit_radius > 0:
            raise InvalidSpec("orbit_radius must be > 0")
        if not 0 < self.fov_y < 180:
            raise InvalidSpec("fov_y must be in (0, 180) degrees")
        if self.width < 1 or self.height < 1:
            raise InvalidSpec("resolution must be positive")
        if np.linalg.norm(self.up) == 0:
            raise InvalidSpec("up must be non-zero")


def _arc_basis(up: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Centerline offset (camera sits at look_at + r*back) and the arc's lateral axis."""
    up = up / np.linalg.norm(up)
    ref = np.array([0.0, 0.0, 1.0]) if abs(up[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    back = -(ref - (ref @ up) * up)
    back /= np.linalg.norm(back)
    side = np.cross(up, back)
    return back, side


def generate_orbit_rig(spec: RigSpec) -> list[Camera]:
    """Inward-facing cameras evenly spaced on a horizontal arc around ``look_at``."""
    spec.validate()
    n = spec.num_views
    up = np.asarray(spec.up, dtype=np.float64)
    center = np.asarray(spec.look_at, dtype=np.float64)
    back, side = _arc_basis(up)
    half = math.radians(spec.angular_range) / 2.0
    fy = spec.height / (2.0 * math.tan(math.radians(spec.fov_y) / 2.0))
    cams = []
    for j in range(n):
        theta = 0.0 if n == 1 else -half + 2.0 * half * j / (n - 1)
        pos = center + spec.orbit_radius * (math.cos(theta) * back + math.sin(theta) * side)
        cams.append(
            look_at_camera(pos, center, up, fy, fy, spec.width / 2.0, spec.height / 2.0,
                           spec.width, spec.height, spec.znear)
        )
    return cams


def rig_to_json(cameras: list[Camera], spec: RigSpec | None = None) -> str:
    doc: dict = {"schema_version": 1, "cameras": [c.to_dict() for c in cameras]}
    if spec is not None:
        doc["generator"] = asdict(spec)
    return json.dumps(doc, indent=2)


def rig_from_json(text: str) -> list[Camera]:
    doc = json.loads(text)
    if doc.get("cameras"):
        return [Camera.from_dict(c) for c in doc["cameras"]]
    if "generator" in doc:
        g = dict(doc["generator"])
        for k in ("look_at", "up"):
            if k in g:
                g[k] = tuple(g[k])
        return generate_orbit_rig(RigSpec(**g))
    raise InvalidSpec("rig file holds neither cameras nor a generator section")


@dataclass(frozen=True, eq=False)
class Clustering:
    num_views: int
    cluster_size: int
    num_clusters: int
    assignment: np.ndarray  # view -> cluster
    representatives: np.ndarray  # cluster -> view id of its center camera
    padded_views: np.ndarray  # (K, cluster_size) view ids, trailing duplicates of N-1

    def views_of(self, k: int) -> np.ndarray:
        """Distinct views of cluster ``k`` (padding removed)."""
        return np.unique(self.padded_views[k])


def cluster_views(num_views: int, cluster_size: int) -> Clustering:
    if num_views < 1 or cluster_size < 1:
        raise InvalidSize("num_views and cluster_size must be >= 1")
    k = -(-num_views // cluster_size)
    padded = np.minimum(np.arange(k * cluster_size), num_views - 1).reshape(k, cluster_size)
    reps = padded[:, cluster_size // 2].copy()
    assignment = np.arange(num_views) // cluster_size
    for a in (padded, reps, assignment):
        a.setflags(write=False)
    return Clustering(num_views, cluster_size, k, assignment, reps, padded)


@dataclass(frozen=True)
class Conic2D:
    a: float
    b: float
    c: float
    radius: float
    compensation: float
    extent: tuple[float, float] = field(default=(0.0, 0.0))  # AABB half sizes (px)

    def quadratic(self, dx: float, dy: float) -> float:
        return self.a * dx * dx + 2.0 * self.b * dx * dy + self.c * dy * dy

    def covariance(self) -> np.ndarray:
        return np.linalg.inv(np.array([[self.a, self.b], [self.b, self.c]]))


@dataclass(frozen=True, eq=False)
class ProjectedGaussians:
    """Per-Gaussian screen-space attributes for one camera (float32)."""

    mean2d: np.ndarray  # (M, 2)
    depth: np.ndarray  # (M,) camera-space z
    conic: np.ndarray  # (M, 3) a, b, c
    eff_opacity: np.ndarray  # (M,)
    color: np.ndarray  # (M, 3)
    extent: np.ndarray  # (M, 2) half sizes of the cutoff ellipse's bounding box
    radius: np.ndarray  # (M,)
    compensation: np.ndarray  # (M,) low-pass opacity factor
    valid: np.ndarray  # (M,) bool
    degenerate: int = 0


def project_points(camera: Camera, means: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Pinhole projection of world points: (pixel coords float32, camera z float64)."""
    p = np.asarray(means, dtype=np.float64) @ camera.rotation.T + camera.translation
    z = p[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        u = camera.fx * p[:, 0] / z + camera.cx
        v = camera.fy * p[:, 1] / z + camera.cy
    return np.stack([u, v], axis=1).astype(np.float32), z


def project_mean(camera: Camera, mean) -> tuple[np.ndarray, float, bool]:
    mu, z = project_points(camera, np.asarray(mean, dtype=np.float64)[None])
    depth = float(z[0])
    return mu[0], depth, bool(depth >= camera.znear)


def project_gaussians(
    camera: Camera,
    means: np.ndarray,
    covariances: np.ndarray,
    opacities: np.ndarray,
    sh: np.ndarray,
    sh_degree: int,
) -> ProjectedGaussians:
    """EWA projection of conic, depth, color and cutoff extent for every Gaussian."""
    means = np.asarray(means, dtype=np.float64)
    m = means.shape[0]
    mean2d, _ = project_points(camera, means)
    p = means @ camera.rotation.T + camera.translation
    x, y, z = p[:, 0], p[:, 1], p[:, 2]
    front = z >= camera.znear
    zs = np.where(front, z, 1.0)

    jac = np.zeros((m, 2, 3))
    jac[:, 0, 0] = camera.fx / zs
    jac[:, 0, 2] = -camera.fx * x / (zs * zs)
    jac[:, 1, 1] = camera.fy / zs
    jac[:, 1, 2] = -camera.fy * y / (zs * zs)
    t = jac @ camera.rotation
    cov2d = t @ np.asarray(covariances, dtype=np.float64) @ np.swapaxes(t, 1, 2)

    s00, s01, s11 = cov2d[:, 0, 0], 0.5 * (cov2d[:, 0, 1] + cov2d[:, 1, 0]), cov2d[:, 1, 1]
    det0 = s00 * s11 - s01 * s01
    a, b, c = s00 + LOW_PASS, s01, s11 + LOW_PASS
    det = a * c - b * b
    ok = front & np.isfinite(det) & (det > 0)
    det_safe = np.where(ok, det, 1.0)
    comp = np.sqrt(np.maximum(det0, 0.0) / det_safe)
    eff = np.asarray(opacities, dtype=np.float64) * comp

    q_cut = 2.0 * np.log(np.maximum(255.0 * eff, 1.0))
    ok &= eff > MIN_ALPHA
    lam_max = 0.5 * (a + c) + np.sqrt(0.25 * (a - c) ** 2 + b * b)
    extent = np.stack([np.sqrt(q_cut * np.abs(a)), np.sqrt(q_cut * np.abs(c))], axis=1)
    radius = np.sqrt(q_cut * np.abs(lam_max))
    conic = np.stack([c / det_safe, -b / det_safe, a / det_safe], axis=1)

    dirs = means - camera.position
    dirs /= np.maximum(np.linalg.norm(dirs, axis=1, keepdims=True), 1e-12)
    color = eval_sh_batch(sh, sh_degree, dirs) if m else np.zeros((0, 3))

    degenerate = int(np.count_nonzero(front & ~(np.isfinite(det) & (det > 0))))
    return ProjectedGaussians(
        mean2d=mean2d,
        depth=z.astype(np.float32),
        conic=conic.astype(np.float32),
        eff_opacity=np.where(ok, eff, 0.0).astype(np.float32),
        color=color.astype(np.float32),
        extent=np.where(ok[:, None], extent, 0.0).astype(np.float32),
        radius=np.where(ok, radius, 0.0).astype(np.float32),
        compensation=comp.astype(np.float32),
        valid=ok,
        degenerate=degenerate,
    )


def project_shared(camera: Camera, gaussian: Gaussian3D) -> tuple[Conic2D, float, np.ndarray]:
    """Conic, depth and color of one Gaussian seen from ``camera``."""
    cov = covariance_batch(np.asarray(gaussian.rotation)[None], np.asarray(gaussian.scale)[None])
    mean = np.asarray(gaussian.mean, dtype=np.float64)[None]
    if not np.all(np.isfinite(mean)) or not np.all(np.isfinite(cov)):
        raise DegenerateCovariance("non-finite Gaussian parameters")
    proj = project_gaussians(camera, mean, cov, np.array([gaussian.opacity]),
                             np.asarray(gaussian.sh)[None], gaussian.sh_degree)
    a, b, c = (float(v) for v in proj.conic[0])
    if proj.degenerate or not (a > 0 and c > 0 and a * c - b * b > 0):
        raise DegenerateCovariance("projected covariance is not positive definite")
    depth = float(proj.depth[0])
    conic = Conic2D(
        a=a, b=b, c=c,
        radius=float(proj.radius[0]),
        compensation=float(proj.compensation[0]),
        extent=(float(proj.extent[0, 0]), float(proj.extent[0, 1])),
    )
    return conic, depth, proj.color[0]


def overlaps_image(mean2d: np.ndarray, extent: np.ndarray, width: int, height: int) -> np.ndarray:
    """True where the cutoff box intersects the image rectangle."""
    lo = mean2d - extent
    hi = mean2d + extent
    return (hi[:, 0] >= 0) & (lo[:, 0] <= width) & (hi[:, 1] >= 0) & (lo[:, 1] <= height)
