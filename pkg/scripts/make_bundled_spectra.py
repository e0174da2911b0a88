"""Regenerate the tabulated spectra shipped under src/puree/data/.

The purée extinction curves are smooth stand-ins built from a few Gaussian
absorption bands per flavor (anthocyanin band near 540 nm for blueberry,
carotenoid bands near 450/480 nm for the orange flavors, and so on). Water
uses the visible pure-water absorption shape (Pope & Fry 1997, m^-1) scaled
by 0.1. Cone curves are the multi-lobe Gaussian fits of the CIE 1931
color-matching functions (Wyman, Sloan & Shirley 2013) with x->R, y->G, z->B,
each normalized to unit trapezoid integral on [400, 700] nm.

Run from the repository root:  python scripts/make_bundled_spectra.py
"""

from pathlib import Path

import numpy as np

DATA = Path(__file__).resolve().parents[1] / "src" / "puree" / "data"
GRID = np.arange(380.0, 781.0, 5.0)


def _g(lam, mu, s1, s2=None):
    s2 = s1 if s2 is None else s2
    s = np.where(lam < mu, s1, s2)
    return np.exp(-0.5 * ((lam - mu) / s) ** 2)


def _write(path, lam, values):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("wavelength_nm,value\n")
        for w, v in zip(lam, values):
            fh.write(f"{w:g},{v:.6g}\n")


def cones():
    x = (1.056 * _g(GRID, 599.8, 37.9, 31.0) + 0.362 * _g(GRID, 442.0, 16.0, 26.7)
         - 0.065 * _g(GRID, 501.1, 20.4, 26.2))
    y = 0.821 * _g(GRID, 568.8, 46.9, 40.5) + 0.286 * _g(GRID, 530.9, 16.3, 31.1)
    z = 1.217 * _g(GRID, 437.0, 11.8, 36.0) + 0.681 * _g(GRID, 459.0, 26.0, 13.8)
    inside = (GRID >= 400) & (GRID <= 700)
    out = {}
    for name, curve in (("r", x), ("g", y), ("b", z)):
        curve = np.clip(curve, 0.0, None)
        curve = curve / np.trapezoid(curve[inside], GRID[inside])
        out[name] = curve
    return out


def water():
    # Pope & Fry (1997) anchor points, m^-1
    anchors = np.array([
        [380, 0.0114], [400, 0.00663], [420, 0.00454], [440, 0.00635],
        [460, 0.00922], [480, 0.0145], [500, 0.0257], [520, 0.0477],
        [540, 0.0558], [560, 0.0708], [580, 0.108], [600, 0.244],
        [620, 0.289], [640, 0.319], [660, 0.41], [680, 0.465],
        [700, 0.65], [720, 1.17], [740, 2.47], [760, 2.55], [780, 2.36],
    ])
    logv = np.interp(GRID, anchors[:, 0], np.log(anchors[:, 1]))
    return 0.1 * np.exp(logv)


FLAVORS = {
    "apple": lambda l: 1.3 * _g(l, 425, 35) + 0.35 * _g(l, 470, 30) + 0.06,
    "apricot": lambda l: 2.2 * _g(l, 450, 35) + 0.8 * _g(l, 490, 25) + 0.04,
    "banana": lambda l: 0.7 * _g(l, 430, 40) + 0.03,
    "beef": lambda l: 0.6 * np.exp(-(l - 400) / 110) + 0.25 * _g(l, 540, 40) + 0.12,
    "blueberry": lambda l: 1.6 * _g(l, 540, 50) + 0.6 * _g(l, 430, 35) + 1.25,
    "carrot": lambda l: 2.6 * _g(l, 450, 25) + 2.4 * _g(l, 480, 22) + 0.8 * _g(l, 420, 30) + 0.08,
    "chicken": lambda l: 0.06 * np.exp(-(l - 400) / 70) + 0.01,
    "mango": lambda l: 2.8 * _g(l, 455, 38) + 0.6 * _g(l, 500, 20) + 0.05,
    "parsnip": lambda l: 0.8 * _g(l, 425, 40) + 0.05,
    "pea": lambda l: 1.1 * _g(l, 445, 40) + 0.9 * _g(l, 665, 30) + 0.35,
    "squash": lambda l: 1.9 * _g(l, 460, 40) + 0.3 * _g(l, 500, 25) + 0.1,
    "strawberry": lambda l: 1.9 * _g(l, 520, 45) + 0.5 * _g(l, 430, 30) + 0.3,
    "sweet_potato": lambda l: 2.2 * _g(l, 455, 40) + 0.2,
}


def main():
    for name, curve in cones().items():
        _write(DATA / f"cones_{name}.csv", GRID, curve)
    _write(DATA / "water.csv", GRID, water())
    for name, fn in FLAVORS.items():
        _write(DATA / "flavors" / f"{name}.csv", GRID, fn(GRID))


if __name__ == "__main__":
    main()
