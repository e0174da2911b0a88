"""Patch pipeline: white normalization, windowing, bicubic resampling, vectorization.

Images are ``(height, width, 3)`` float arrays with values in [0, 1].
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

PATCH_SHAPE = (25, 50, 3)
PATCH_SIZE = 25 * 50 * 3
RAW_HEADER = struct.Struct("<IIII")


class ImagingError(ValueError):
    pass


@dataclass(frozen=True)
class PatchGridSpec:
    window_h: int = 50
    window_w: int = 100
    stride_h: int = 25
    stride_w: int = 50

    def __post_init__(self):
        if not (1 <= self.stride_h <= self.window_h and 1 <= self.stride_w <= self.window_w):
            raise ImagingError("grid needs 1 <= stride <= window on both axes")

    @classmethod
    def half_overlap(cls, window_h: int, window_w: int) -> "PatchGridSpec":
        return cls(window_h, window_w, max(window_h // 2, 1), max(window_w // 2, 1))

    def count(self, height: int, width: int) -> int:
        if self.window_h > height or self.window_w > width:
            return 0
        return ((height - self.window_h) // self.stride_h + 1) * ((width - self.window_w) // self.stride_w + 1)


def check_image(img, channels: int | None = 3) -> np.ndarray:
    img = np.asarray(img, dtype=float)
    if img.ndim != 3 or img.shape[0] < 1 or img.shape[1] < 1:
        raise ImagingError(f"expected a (height, width, channels) image, got shape {img.shape}")
    if channels is not None and img.shape[2] != channels:
        raise ImagingError(f"expected {channels} channels, got {img.shape[2]}")
    return img


def white_normalize(img, white_region) -> np.ndarray:
    """Divide each channel by its mean over ``white_region`` and clamp to [0, 1].

    ``white_region`` is ``(top, left, height, width)`` in pixels.
    """
    img = check_image(img)
    top, left, h, w = (int(v) for v in white_region)
    if h < 1 or w < 1 or top < 0 or left < 0 or top + h > img.shape[0] or left + w > img.shape[1]:
        raise ImagingError(f"white region {white_region} outside image of shape {img.shape[:2]}")
    ref = img[top:top + h, left:left + w].reshape(-1, img.shape[2]).mean(axis=0)
    if np.any(ref <= 0):
        raise ImagingError("white region has a zero channel mean; cannot normalize")
    return np.clip(img / ref, 0.0, 1.0)


def decompose_patches(sub, grid: PatchGridSpec) -> list[np.ndarray]:
    """Windows at offsets ``(i*stride_h, j*stride_w)``, row-major order."""
    sub = check_image(sub, channels=None)
    H, W = sub.shape[:2]
    if grid.window_h > H or grid.window_w > W:
        raise ImagingError(f"window {grid.window_h}x{grid.window_w} larger than image {H}x{W}")
    patches = []
    for y in range(0, H - grid.window_h + 1, grid.stride_h):
        for x in range(0, W - grid.window_w + 1, grid.stride_w):
            patches.append(sub[y:y + grid.window_h, x:x + grid.window_w].copy())
    return patches


def cubic_kernel(t, a: float = -0.5):
    t = np.abs(np.asarray(t, dtype=float))
    t2, t3 = t * t, t * t * t
    near = (a + 2) * t3 - (a + 3) * t2 + 1
    far = a * t3 - 5 * a * t2 + 8 * a * t - 4 * a
    return np.where(t <= 1, near, np.where(t < 2, far, 0.0))


def _resample_matrix(n_in: int, n_out: int, a: float) -> np.ndarray:
    # pixel-center alignment; no antialiasing widening of the kernel
    scale = n_in / n_out
    src = (np.arange(n_out) + 0.5) * scale - 0.5
    base = np.floor(src).astype(int)
    M = np.zeros((n_out, n_in))
    for k in range(-1, 3):
        idx = base + k
        w = cubic_kernel(src - idx, a)
        np.add.at(M, (np.arange(n_out), np.clip(idx, 0, n_in - 1)), w)
    return M


def downscale_bicubic(p, factor: float = 0.5, a: float = -0.5) -> np.ndarray:
    """Separable bicubic resize with clamp-to-edge borders; output clamped to [0, 1]."""
    p = check_image(p, channels=None)
    H, W = p.shape[:2]
    out_h, out_w = H * factor, W * factor
    if not (float(out_h).is_integer() and float(out_w).is_integer()) or out_h < 1 or out_w < 1:
        raise ImagingError(f"cannot scale {H}x{W} by {factor} to whole pixel dimensions")
    Mh = _resample_matrix(H, int(out_h), a)
    Mw = _resample_matrix(W, int(out_w), a)
    out = np.tensordot(Mh, p, axes=(1, 0))
    out = np.einsum("lk,ikc->ilc", Mw, out)
    return np.clip(out, 0.0, 1.0)


def vectorize_patch(p) -> np.ndarray:
    """Stack the R, G and B planes (each row-major) into a 3750-vector."""
    p = np.asarray(p, dtype=float)
    if p.shape != PATCH_SHAPE:
        raise ImagingError(f"expected patch shape {PATCH_SHAPE}, got {p.shape}")
    return p.transpose(2, 0, 1).reshape(-1)


def unvectorize_patch(v, shape=PATCH_SHAPE) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    h, w, c = shape
    if v.shape != (h * w * c,):
        raise ImagingError(f"expected a vector of length {h * w * c}, got shape {v.shape}")
    return v.reshape(c, h, w).transpose(1, 2, 0)


def read_png(path) -> np.ndarray:
    from PIL import Image

    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.uint8)
    return arr.astype(float) / 255.0


def write_raw(path, img) -> None:
    """Raw float image: 16-byte little-endian header then float32 planes."""
    img = check_image(img, channels=None)
    h, w, c = img.shape
    payload = np.ascontiguousarray(img.transpose(2, 0, 1), dtype="<f4")
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(RAW_HEADER.pack(w, h, c, 0))
        fh.write(payload.tobytes())


def read_raw(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < RAW_HEADER.size:
        raise ImagingError(f"{path}: truncated header")
    w, h, c, _ = RAW_HEADER.unpack_from(data)
    expected = RAW_HEADER.size + 4 * w * h * c
    if len(data) != expected:
        raise ImagingError(f"{path}: expected {expected} bytes, found {len(data)}")
    planes = np.frombuffer(data, dtype="<f4", offset=RAW_HEADER.size).reshape(c, h, w)
    return planes.transpose(1, 2, 0).astype(float)
