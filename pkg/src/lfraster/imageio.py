"""PNG and raw float image files."""
from __future__ import annotations

import io
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import SizeMismatch


def to_uint8(img: np.ndarray) -> np.ndarray:
    """[0, 1] floats to 8 bits, rounding half up."""
    a = np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0)
    return np.floor(a * 255.0 + 0.5).astype(np.uint8)


def png_bytes(img: np.ndarray) -> bytes:
    """Encode with fixed settings so identical pixels give identical files."""
    a = np.asarray(img)
    if a.dtype != np.uint8:
        a = to_uint8(a)
    if a.ndim == 3 and a.shape[2] == 1:
        a = a[..., 0]
    buf = io.BytesIO()
    Image.fromarray(a).save(buf, format="PNG", compress_level=6, optimize=False)
    return buf.getvalue()


def write_png(path: str | Path, img: np.ndarray) -> None:
    Path(path).write_bytes(png_bytes(img))


def read_png(path: str | Path) -> np.ndarray:
    """Float32 ``(H, W, 3)`` in [0, 1] (grayscale is expanded)."""
    with Image.open(path) as im:
        a = np.asarray(im.convert("RGB"), dtype=np.float32)
    return a / np.float32(255.0)


def write_raw(path: str | Path, img: np.ndarray) -> None:
    Path(path).write_bytes(np.ascontiguousarray(img, dtype="<f4").tobytes())


def read_raw(path: str | Path, width: int, height: int) -> np.ndarray:
    data = np.frombuffer(Path(path).read_bytes(), dtype="<f4")
    if data.size != width * height * 3:
        raise SizeMismatch(f"{path}: {data.size} floats, expected {width}x{height}x3")
    return data.reshape(height, width, 3).astype(np.float32)


def read_image(path: str | Path, width: int | None = None, height: int | None = None) -> np.ndarray:
    """PNG by content, anything else as a raw float dump of the given size."""
    p = Path(path)
    with open(p, "rb") as fh:
        magic = fh.read(8)
    if magic == b"\x89PNG\r\n\x1a\n":
        return read_png(p)
    if width is None or height is None:
        raise SizeMismatch(f"{path}: raw float images need an explicit width and height")
    return read_raw(p, width, height)
