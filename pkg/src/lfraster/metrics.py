"""PSNR and SSIM on [0, 1] float images, with optional masks."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import correlate1d

from .display import InterlacedImage, ViewpointMatrix
from .errors import EmptyMask, SizeMismatch

WINDOW = 11
SIGMA = 1.5
C1 = 0.01**2
C2 = 0.03**2


@dataclass
class ImageMetricsReport:
    psnr: float  # +inf for identical inputs
    ssim: float
    mse: float
    masked_pixel_count: int
    per_view: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "schema_version": 1,
            "psnr_db": _json_db(self.psnr),
            "ssim": self.ssim,
            "mse": self.mse,
            "masked_pixel_count": self.masked_pixel_count,
            "per_view": [
                {**v, "psnr_db": _json_db(v["psnr_db"])} for v in self.per_view
            ],
        }


def _json_db(v: float):
    return "inf" if math.isinf(v) else v


def _as_array(img) -> np.ndarray:
    if isinstance(img, InterlacedImage):
        img = img.data
    a = np.asarray(img, dtype=np.float64)
    if a.ndim == 2:
        a = a[..., None]
    return a


def psnr_from_mse(mse: float) -> float:
    return math.inf if mse == 0 else 10.0 * math.log10(1.0 / mse)


def _gauss_kernel() -> np.ndarray:
    r = WINDOW // 2
    x = np.arange(-r, r + 1, dtype=np.float64)
    k = np.exp(-(x * x) / (2 * SIGMA * SIGMA))
    return k / k.sum()


def _blur(x: np.ndarray) -> np.ndarray:
    k = _gauss_kernel()
    return correlate1d(correlate1d(x, k, axis=0, mode="reflect"), k, axis=1, mode="reflect")


def ssim_map(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Per-pixel SSIM for each channel, ``(H, W, C)``; border of 5 px is unreliable."""
    mu_a, mu_b = _blur(a), _blur(b)
    va = _blur(a * a) - mu_a * mu_a
    vb = _blur(b * b) - mu_b * mu_b
    cov = _blur(a * b) - mu_a * mu_b
    num = (2 * mu_a * mu_b + C1) * (2 * cov + C2)
    den = (mu_a * mu_a + mu_b * mu_b + C1) * (va + vb + C2)
    return num / den


def _crop(x: np.ndarray) -> np.ndarray:
    pad = WINDOW // 2
    if x.shape[0] > 2 * pad and x.shape[1] > 2 * pad:
        return x[pad:-pad, pad:-pad]
    return x


def image_metrics(a, b, mask=None) -> ImageMetricsReport:
    """PSNR over (masked) entries and channel-averaged SSIM.

    ``mask`` may be per pixel ``(H, W)`` or per subpixel ``(H, W, C)``.
    SSIM is averaged over the valid (border-cropped) window centers that
    the mask selects.
    """
    a, b = _as_array(a), _as_array(b)
    if a.shape != b.shape:
        raise SizeMismatch(f"image shapes differ: {a.shape} vs {b.shape}")
    if mask is None:
        m = np.ones(a.shape, bool)
    else:
        m = np.asarray(mask, bool)
        if m.ndim == 2:
            m = np.broadcast_to(m[..., None], a.shape)
        if m.shape != a.shape:
            raise SizeMismatch(f"mask shape {m.shape} does not match image {a.shape}")
    count = int(np.count_nonzero(m))
    if count == 0:
        raise EmptyMask("mask selects no entries")
    diff = (a - b)[m]
    mse = float(np.sum(diff * diff, dtype=np.float64) / count)

    smap = _crop(ssim_map(a, b))
    sm = _crop(m)
    ssim = float(smap[sm].mean()) if sm.any() else float(ssim_map(a, b)[m].mean())
    return ImageMetricsReport(psnr=psnr_from_mse(mse), ssim=ssim, mse=mse, masked_pixel_count=count)


def lightfield_metrics(a, b, matrix: ViewpointMatrix) -> ImageMetricsReport:
    """Whole-panel metrics plus a masked per-view breakdown."""
    report = image_metrics(a, b)
    a, b = _as_array(a), _as_array(b)
    for j in range(matrix.config.num_views):
        mask = matrix.data == j
        n = int(np.count_nonzero(mask))
        if n == 0:
            report.per_view.append({"view": j, "psnr_db": math.inf, "ssim": 1.0, "mse": 0.0, "masked_pixel_count": 0})
            continue
        # sparse deinterlaced views: off-mask entries zeroed in both inputs
        va, vb = np.where(mask, a, 0.0), np.where(mask, b, 0.0)
        r = image_metrics(va, vb, mask)
        report.per_view.append(
            {"view": j, "psnr_db": r.psnr, "ssim": r.ssim, "mse": r.mse, "masked_pixel_count": n}
        )
    return report
