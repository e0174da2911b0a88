"""Handcrafted color/texture features and descriptive image statistics."""

from __future__ import annotations

from dataclasses import astuple, dataclass

import numpy as np

from .imaging import check_image

BIN_CENTERS = np.array([0.125, 0.375, 0.625, 0.875])
DISPLACEMENTS = ((0, 1), (1, 0))
LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])
ENTROPY_WINDOW = 9
N_HANDCRAFTED = 71

TEXTURE_NAMES = ("mean", "contrast", "homogeneity", "energy", "variance", "correlation", "entropy")
COLOR_NAMES = tuple(f"color_{r}{g}{b}" for r in range(4) for g in range(4) for b in range(4))
FEATURE_NAMES = COLOR_NAMES + TEXTURE_NAMES
STAT_NAMES = ("mean_r", "sd_r", "mean_g", "sd_g", "mean_b", "sd_b", "luma", "local_entropy")


@dataclass(frozen=True)
class SumDiffHistograms:
    h_s: np.ndarray
    h_d: np.ndarray
    displacement: tuple[int, int]
    n_pairs: int


@dataclass(frozen=True)
class TextureFeatures:
    mean: float
    contrast: float
    homogeneity: float
    energy: float
    variance: float
    correlation: float
    entropy: float

    def as_array(self) -> np.ndarray:
        return np.array(astuple(self))


@dataclass(frozen=True)
class DescriptiveStats:
    mean_r: float
    sd_r: float
    mean_g: float
    sd_g: float
    mean_b: float
    sd_b: float
    luma: float
    local_entropy: float

    def as_array(self) -> np.ndarray:
        return np.array(astuple(self))


def color_bin_indices(p) -> np.ndarray:
    """Per-pixel index ``16 r + 4 g + b`` of the nearest uniform bin center."""
    p = check_image(p)
    q = np.abs(p[..., None] - BIN_CENTERS).argmin(axis=-1)
    return q[..., 0] * 16 + q[..., 1] * 4 + q[..., 2]


def color_histogram64(p) -> np.ndarray:
    idx = color_bin_indices(p).ravel()
    return np.bincount(idx, minlength=64) / idx.size


def to_gray_levels(p) -> np.ndarray:
    """Rec.601 luma quantized to integers 0..255."""
    p = check_image(p)
    return np.rint(np.clip(p @ LUMA_WEIGHTS, 0.0, 1.0) * 255.0).astype(np.int64)


def _overlap(gray: np.ndarray, delta) -> tuple[np.ndarray, np.ndarray]:
    dy, dx = delta
    H, W = gray.shape
    if abs(dy) >= H or abs(dx) >= W:
        raise ValueError(f"displacement {delta} leaves no overlap in a {H}x{W} image")
    ys = slice(max(0, -dy), H - max(0, dy))
    xs = slice(max(0, -dx), W - max(0, dx))
    yt = slice(max(0, dy), H + min(0, dy))
    xt = slice(max(0, dx), W + min(0, dx))
    return gray[ys, xs], gray[yt, xt]


def sum_diff_histograms(gray, delta) -> SumDiffHistograms:
    gray = np.asarray(gray, dtype=np.int64)
    if gray.ndim != 2:
        raise ValueError("expected a 2-D gray-level image")
    if gray.min() < 0 or gray.max() > 255:
        raise ValueError("gray levels must lie in 0..255")
    a, b = _overlap(gray, delta)
    n = a.size
    s = (a + b).ravel()
    d = (a - b).ravel()
    h_s = np.bincount(s, minlength=511) / n
    h_d = np.bincount(d + 255, minlength=511) / n
    return SumDiffHistograms(h_s, h_d, tuple(delta), n)


def _xlogx(h: np.ndarray) -> float:
    nz = h[h > 0]
    return float(np.sum(nz * np.log(nz)))


def texture_from_histograms(hist: SumDiffHistograms) -> TextureFeatures:
    i = np.arange(511, dtype=float)
    j = np.arange(-255, 256, dtype=float)
    h_s, h_d = hist.h_s, hist.h_d
    mu = 0.5 * float(i @ h_s)
    sum_var = float(((i - 2 * mu) ** 2) @ h_s)
    diff_sq = float((j * j) @ h_d)
    return TextureFeatures(
        mean=mu,
        contrast=diff_sq,
        homogeneity=float((1.0 / (1.0 + j * j)) @ h_d),
        energy=float(h_s @ h_s) * float(h_d @ h_d),
        variance=0.5 * (sum_var + diff_sq),
        correlation=0.5 * (sum_var - diff_sq),
        entropy=-_xlogx(h_s) - _xlogx(h_d),
    )


def sum_diff_texture(gray, delta=(0, 1)) -> tuple[SumDiffHistograms, TextureFeatures]:
    hist = sum_diff_histograms(gray, delta)
    return hist, texture_from_histograms(hist)


def local_entropy_map(gray, window: int = ENTROPY_WINDOW) -> np.ndarray:
    """Base-2 entropy of the 256-bin histogram of each clipped window."""
    gray = np.asarray(gray, dtype=np.int64)
    H, W = gray.shape
    r = window // 2
    padded = np.full((H + 2 * r, W + 2 * r), 256, dtype=np.int64)
    padded[r:r + H, r:r + W] = gray
    windows = np.lib.stride_tricks.sliding_window_view(padded, (window, window)).reshape(H * W, -1)
    # bin 256 collects the out-of-image padding and is dropped
    counts = np.zeros((H * W, 257))
    np.add.at(counts, (np.repeat(np.arange(H * W), windows.shape[1]), windows.ravel()), 1.0)
    counts = counts[:, :256]
    p = counts / counts.sum(axis=1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, p * np.log2(p), 0.0)
    return np.abs(-terms.sum(axis=1)).reshape(H, W)


def local_entropy_summary(gray, window: int = ENTROPY_WINDOW) -> tuple[np.ndarray, float, float]:
    emap = local_entropy_map(gray, window)
    return emap, float(emap.mean()), float(emap.std())


def luma_brightness(p) -> float:
    p = check_image(p)
    return float((p @ LUMA_WEIGHTS).mean())


def texture_features(p, displacements=DISPLACEMENTS) -> np.ndarray:
    gray = to_gray_levels(p)
    feats = [sum_diff_texture(gray, d)[1].as_array() for d in displacements]
    return np.mean(feats, axis=0)


def handcrafted_features(p) -> np.ndarray:
    """64 color-histogram bins followed by 7 displacement-averaged texture features."""
    return np.concatenate([color_histogram64(p), texture_features(p)])


def descriptive_stats(p) -> DescriptiveStats:
    p = check_image(p)
    flat = p.reshape(-1, 3)
    means, sds = flat.mean(axis=0), flat.std(axis=0)
    _, ent, _ = local_entropy_summary(to_gray_levels(p))
    return DescriptiveStats(means[0], sds[0], means[1], sds[1], means[2], sds[2],
                            luma_brightness(p), ent)
