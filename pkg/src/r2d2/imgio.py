"""Image file I/O: a tiny raw float32 container and 16-bit grayscale PNG.

Raw layout: magic "R2D2" + u32 width + u32 height + u32 dtype code (1 = f32),
all little-endian, followed by width*height float32 little-endian values in
row-major order. PNG pixels map to [0, 1] via value/65535.
"""

from __future__ import annotations

import io
import os
import struct
import tempfile

import numpy as np
from PIL import Image as PilImage

RAW_MAGIC = b"R2D2"
DTYPE_F32 = 1
_PNG_MAGIC = b"\x89PNG\r\n\x1a\n"
_HEADER = struct.Struct("<III")


class ImageIOError(Exception):
    """Missing, malformed, or non-finite image data."""


def atomic_write(path: str, data: bytes):
    """Write via a temp file in the same directory, then rename into place."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".r2d2tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _decode_raw(data: bytes, path: str) -> np.ndarray:
    if len(data) < 4 + _HEADER.size:
        raise ImageIOError(f"{path}: header truncated, got {len(data)} bytes")
    width, height, dtype_code = _HEADER.unpack_from(data, 4)
    if dtype_code != DTYPE_F32:
        raise ImageIOError(f"{path}: unsupported dtype code {dtype_code}")
    if width < 1 or height < 1:
        raise ImageIOError(f"{path}: zero dimension in header ({width}x{height})")
    expected = width * height * 4
    actual = len(data) - 4 - _HEADER.size
    if actual != expected:
        raise ImageIOError(f"{path}: expected {expected} payload bytes, got {actual}")
    img = np.frombuffer(data, dtype="<f4", offset=4 + _HEADER.size)
    return img.reshape(height, width).astype(np.float64)


def _decode_png(data: bytes, path: str) -> np.ndarray:
    img = PilImage.open(io.BytesIO(data))
    # 16-bit grayscale PNGs open as mode I;16 (or plain I on some builds).
    if img.mode not in ("I;16", "I;16B", "I"):
        raise ImageIOError(f"{path}: not 16-bit grayscale (PIL mode {img.mode})")
    arr = np.asarray(img, dtype=np.float64)
    if arr.min() < 0 or arr.max() > 65535:
        raise ImageIOError(f"{path}: pixel values outside the 16-bit range")
    return arr / 65535.0


def load_image(path: str) -> np.ndarray:
    """Load a raw f32 or 16-bit grayscale PNG image as float64 in [0, 1]."""
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise ImageIOError(f"{path}: {exc.strerror or exc}") from exc
    if data[:4] == RAW_MAGIC:
        img = _decode_raw(data, path)
    elif data[: len(_PNG_MAGIC)] == _PNG_MAGIC:
        img = _decode_png(data, path)
    else:
        raise ImageIOError(f"{path}: unknown format (magic {data[:4]!r})")
    if not np.all(np.isfinite(img)):
        raise ImageIOError(f"{path}: non-finite pixel values")
    return img


def _encode_raw(img: np.ndarray) -> bytes:
    rows, cols = img.shape
    header = RAW_MAGIC + _HEADER.pack(cols, rows, DTYPE_F32)
    return header + np.ascontiguousarray(img, dtype="<f4").tobytes()


def _encode_png(img: np.ndarray) -> bytes:
    clamped = np.clip(img, 0.0, 1.0)
    # Round half away from zero; values are nonnegative after the clamp.
    quantized = np.floor(clamped * 65535.0 + 0.5).astype(np.uint16)
    buf = io.BytesIO()
    PilImage.fromarray(quantized).save(buf, format="PNG")
    return buf.getvalue()


def save_image(img: np.ndarray, path: str, format: str | None = None):
    """Save as raw f32 (exact downcast) or PNG16 (clamp to [0,1], quantize).

    The format defaults from the extension (.raw / .png); writes are atomic.
    """
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2:
        raise ImageIOError(f"expected a 2-D image, got shape {img.shape}")
    if not np.all(np.isfinite(img)):
        raise ImageIOError("refusing to save non-finite pixel values")
    if format is None:
        ext = os.path.splitext(path)[1].lower()
        format = {".raw": "raw", ".png": "png"}.get(ext)
        if format is None:
            raise ImageIOError(f"cannot infer format from extension {ext!r}")
    if format == "raw":
        atomic_write(path, _encode_raw(img))
    elif format == "png":
        atomic_write(path, _encode_png(img))
    else:
        raise ImageIOError(f"unknown format {format!r}")
