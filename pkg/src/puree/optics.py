"""Beer-Lambert dilution model, cone-weighted rendering and synthetic patches.

A purée/water mixture is described by the two extinction spectra and a
relative purée concentration ``c_p``. Its absorbance is affine in ``c_p``
and the perceived channel value is the cone-weighted integral of the
transmitted fraction ``exp(-A)`` over 400-700 nm.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.ndimage import uniform_filter1d

VISIBLE = (400.0, 700.0)
EXPOSURE_GAINS = (0.5, 1.0, 2.0)


class SpectrumError(ValueError):
    """Malformed spectrum data or a wavelength outside a spectrum's domain."""


@dataclass(frozen=True)
class Spectrum:
    wavelengths_nm: np.ndarray
    values: np.ndarray
    name: str = ""

    def __post_init__(self):
        lam = np.asarray(self.wavelengths_nm, dtype=float)
        val = np.asarray(self.values, dtype=float)
        if lam.ndim != 1 or lam.shape != val.shape or lam.size < 2:
            raise SpectrumError("spectrum needs matching 1-D arrays with >= 2 samples")
        if not (np.all(np.isfinite(lam)) and np.all(np.isfinite(val))):
            raise SpectrumError("spectrum contains non-finite values")
        if np.any(np.diff(lam) <= 0):
            raise SpectrumError("wavelengths are non-increasing")
        if np.any(val < 0):
            raise SpectrumError("spectrum values must be nonnegative")
        object.__setattr__(self, "wavelengths_nm", lam)
        object.__setattr__(self, "values", val)

    @property
    def domain(self) -> tuple[float, float]:
        return float(self.wavelengths_nm[0]), float(self.wavelengths_nm[-1])

    def covers(self, lo: float, hi: float) -> bool:
        a, b = self.domain
        return a <= lo and hi <= b

    def __call__(self, lam):
        """Linear interpolation; raises outside the tabulated domain."""
        lam_arr = np.asarray(lam, dtype=float)
        a, b = self.domain
        if np.any(lam_arr < a) or np.any(lam_arr > b):
            raise SpectrumError(f"wavelength outside spectrum domain [{a:g}, {b:g}] nm")
        out = np.interp(lam_arr, self.wavelengths_nm, self.values)
        return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class ConeCurves:
    r: Spectrum
    g: Spectrum
    b: Spectrum

    def __post_init__(self):
        for name in ("r", "g", "b"):
            curve = getattr(self, name)
            if not curve.covers(*VISIBLE):
                raise SpectrumError(f"cone curve {name!r} does not cover 400-700 nm")
            object.__setattr__(self, name, _unit_visible_integral(curve))

    def channels(self) -> tuple[Spectrum, Spectrum, Spectrum]:
        return self.r, self.g, self.b


@dataclass(frozen=True)
class DilutionParams:
    c_p: float
    l: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.c_p <= 1.0:
            raise ValueError(f"c_p must lie in [0, 1], got {self.c_p}")
        if not self.l > 0:
            raise ValueError(f"path length must be positive, got {self.l}")

    @property
    def c_water(self) -> float:
        return 1.0 - self.c_p


@dataclass(frozen=True)
class SynthNoiseParams:
    color_noise_sd: float = 0.02
    texture_amplitude: float = 0.08
    texture_scale: float = 6.0
    exposure_gain: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if min(self.color_noise_sd, self.texture_amplitude, self.texture_scale) < 0:
            raise ValueError("noise parameters must be nonnegative")
        if not self.exposure_gain > 0:
            raise ValueError("exposure_gain must be positive")
        if self.seed < 0:
            raise ValueError("seed must be nonnegative")


def _visible_grid(lam: np.ndarray) -> np.ndarray:
    lo, hi = VISIBLE
    inner = lam[(lam > lo) & (lam < hi)]
    return np.concatenate(([lo], inner, [hi]))


def _unit_visible_integral(curve: Spectrum) -> Spectrum:
    grid = _visible_grid(curve.wavelengths_nm)
    area = np.trapezoid(curve(grid), grid)
    if area <= 0:
        raise SpectrumError("cone curve has zero area on 400-700 nm")
    return Spectrum(curve.wavelengths_nm, curve.values / area, curve.name)


def load_spectrum(path) -> Spectrum:
    """Read a ``wavelength_nm,value`` CSV with a mandatory header row."""
    path = Path(path)
    lam, val = [], []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["wavelength_nm", "value"]:
            raise SpectrumError(f"{path}: line 1: expected header 'wavelength_nm,value'")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 2:
                raise SpectrumError(f"{path}: line {lineno}: expected 2 columns, got {len(row)}")
            try:
                w, v = float(row[0]), float(row[1])
            except ValueError:
                raise SpectrumError(f"{path}: line {lineno}: malformed number in {row!r}") from None
            if not (np.isfinite(w) and np.isfinite(v)):
                raise SpectrumError(f"{path}: line {lineno}: non-finite value")
            if lam and w <= lam[-1]:
                raise SpectrumError(f"{path}: line {lineno}: non-increasing wavelength {w:g}")
            if v < 0:
                raise SpectrumError(f"{path}: line {lineno}: negative value {v:g}")
            lam.append(w)
            val.append(v)
    if len(lam) < 2:
        raise SpectrumError(f"{path}: need at least 2 data rows")
    return Spectrum(np.array(lam), np.array(val), path.stem)


def data_path(*parts: str) -> Path:
    """Location of a bundled data file."""
    return Path(str(resources.files("puree").joinpath("data", *parts)))


def bundled_flavors() -> list[str]:
    return sorted(p.stem for p in data_path("flavors").glob("*.csv"))


def load_water() -> Spectrum:
    return load_spectrum(data_path("water.csv"))


def load_flavor(name: str) -> Spectrum:
    path = data_path("flavors", f"{name}.csv")
    if not path.exists():
        raise SpectrumError(f"no bundled spectrum for flavor {name!r}")
    return load_spectrum(path)


def load_cones(paths=None) -> ConeCurves:
    if paths is None:
        paths = [data_path(f"cones_{c}.csv") for c in "rgb"]
    return ConeCurves(*(load_spectrum(p) for p in paths))


def mixture_absorbance(eps_p: Spectrum, eps_w: Spectrum, d: DilutionParams, lambda_nm):
    """Positive absorbance ``(eps_w (1 - c_p) + eps_p c_p) l`` at ``lambda_nm``.

    Accepts a scalar or an array of wavelengths.
    """
    return (eps_w(lambda_nm) * (1.0 - d.c_p) + eps_p(lambda_nm) * d.c_p) * d.l


def perceived_rgb(eps_p: Spectrum, eps_w: Spectrum, d: DilutionParams,
                  cones: ConeCurves) -> tuple[float, float, float]:
    """Cone-weighted transmittance per channel, trapezoid rule on the merged grid."""
    spectra = (eps_p, eps_w) + cones.channels()
    for s in spectra:
        if not s.covers(*VISIBLE):
            raise SpectrumError(f"spectrum {s.name or '?'} does not cover 400-700 nm")
    grid = _visible_grid(np.unique(np.concatenate([s.wavelengths_nm for s in spectra])))
    transmit = np.exp(-mixture_absorbance(eps_p, eps_w, d, grid))
    rgb = tuple(float(np.trapezoid(z(grid) * transmit, grid)) for z in cones.channels())
    return tuple(min(max(v, 0.0), 1.0) for v in rgb)


def texture_field(height: int, width: int, amplitude: float, scale: float,
                  rng: np.random.Generator) -> np.ndarray:
    """Smoothed Gaussian noise mapped onto ``1 +/- amplitude``."""
    noise = rng.standard_normal((height, width))
    if amplitude == 0:
        return np.ones((height, width))
    size = max(int(round(scale)), 1)
    for _ in range(3):
        noise = uniform_filter1d(noise, size, axis=0, mode="reflect")
        noise = uniform_filter1d(noise, size, axis=1, mode="reflect")
    noise = noise - noise.mean()
    peak = np.abs(noise).max()
    if peak > 0:
        noise = noise / peak
    return 1.0 + amplitude * noise


def render_dilution_patch(eps_p: Spectrum, eps_w: Spectrum, d: DilutionParams,
                          noise: SynthNoiseParams, height: int, width: int,
                          cones: ConeCurves | None = None) -> np.ndarray:
    """Render an ``(height, width, 3)`` patch in [0, 1], deterministic per seed."""
    if height < 1 or width < 1:
        raise ValueError("patch dimensions must be >= 1")
    cones = load_cones() if cones is None else cones
    base = np.asarray(perceived_rgb(eps_p, eps_w, d, cones))
    rng = np.random.default_rng(noise.seed)
    field = texture_field(height, width, noise.texture_amplitude, noise.texture_scale, rng)
    img = base[None, None, :] * field[:, :, None] * noise.exposure_gain
    if noise.color_noise_sd > 0:
        img = img + noise.color_noise_sd * rng.standard_normal(img.shape)
    return np.clip(img, 0.0, 1.0)
