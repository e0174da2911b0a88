"""Acceptance suite: one test per primary criterion, each printing a pass/fail line.

The end-to-end and determinism criteria share two full desk-profile runs
(about four minutes each on one CPU core).
"""

import time

import numpy as np
import pytest

from oracles import brute_color_counts, brute_pairs, brute_texture, random_images
from puree.evaluation import binary_collapse, metrics_from_confusion, position_folds
from puree.features import color_histogram64, luma_brightness, sum_diff_histograms, sum_diff_texture, to_gray_levels
from puree.harness.config import ExperimentConfig
from puree.harness.experiment import run_full_experiment
from puree.modelio import read_sidecar
from puree.neural import autoencoder_for, gradient_check, init_stack
from puree.optics import (DilutionParams, Spectrum, load_cones, load_flavor, load_water,
                          mixture_absorbance, perceived_rgb)

LUMA = np.array([0.299, 0.587, 0.114])
pytestmark = pytest.mark.slow


@pytest.fixture(scope="module")
def desk_runs(tmp_path_factory):
    runs = []
    for name in ("a", "b"):
        out = tmp_path_factory.mktemp(f"desk_{name}")
        t0 = time.perf_counter()
        result = run_full_experiment(ExperimentConfig(), out_dir=out)
        runs.append((result, time.perf_counter() - t0, out))
    return runs


def test_gradient_correctness(record_criterion):
    t0 = time.perf_counter()
    rng = np.random.default_rng(11)
    net = init_stack(5, (6, 4, 3, 2))
    for layer in net.layers:
        layer.b[:] = rng.normal(0, 0.1, layer.b.shape)
    x = rng.random((8, 6))
    y = rng.integers(0, 2, 8)
    errors = {"fine-tune 6-4-3-2": gradient_check(net, x, y, epsilon=1e-4, weight_decay=1e-4)}
    codes = x
    for k, enc in enumerate(net.encoders):
        ae = autoencoder_for(enc, seed=20 + k)
        errors[f"AE {enc.n_in}-{enc.n_out}-{enc.n_in}"] = gradient_check(ae, codes, epsilon=1e-4, weight_decay=1e-4)
        codes = ae.encode(codes)
    elapsed = time.perf_counter() - t0
    worst = max(errors.values())
    ok = worst < 1e-5 and elapsed < 5
    record_criterion("gradient correctness", ok, f"max relative error {worst:.2e} (< 1e-5), {elapsed:.2f} s (< 5 s)")
    assert ok, errors


def test_feature_oracles(record_criterion):
    mismatches = 0
    worst = 0.0
    for p in random_images(50, seed=99):
        counts = brute_color_counts(p)
        mismatches += int(not all(round(v * 64) == counts.get(k, 0) for k, v in enumerate(color_histogram64(p))))
        gray = to_gray_levels(p)
        for delta in ((0, 1), (1, 0)):
            hist = sum_diff_histograms(gray, delta)
            sums, diffs = brute_pairs(gray, delta)
            n = hist.n_pairs
            mismatches += int({i: round(c * n) for i, c in enumerate(hist.h_s) if c} != dict(sums))
            mismatches += int({j - 255: round(c * n) for j, c in enumerate(hist.h_d) if c} != dict(diffs))
            got = sum_diff_texture(gray, delta)[1].as_array()
            ref = np.array(brute_texture(sums, diffs))
            worst = max(worst, float(np.max(np.abs(got - ref) / np.maximum(1.0, np.abs(ref)))))
    closed = []
    for k in (0, 128, 255):
        f = sum_diff_texture(np.full((8, 8), k))[1]
        closed.append(f.contrast == 0 and f.homogeneity == 1 and f.energy == 1 and f.entropy == 0)
    ok = mismatches == 0 and worst < 1e-9 and all(closed)
    record_criterion("feature oracles", ok,
                     f"{mismatches} histogram count mismatches on 50 images, texture max rel diff {worst:.1e}, "
                     f"constant-image closed forms {'hold' if all(closed) else 'fail'}")
    assert ok


def test_descriptive_stat_anchor(record_criterion):
    anchors = {"blueberry-20%": ((0.622, 0.512, 0.449), 0.538),
               "apple-20%": ((0.879, 0.861, 0.849), 0.865),
               "chicken-20%": ((0.992, 0.990, 0.981), 0.99)}
    diffs = {k: abs(luma_brightness(np.broadcast_to(m, (4, 4, 3))) - s) for k, (m, s) in anchors.items()}
    ok = all(d <= 0.015 for d in diffs.values())
    record_criterion("descriptive-stat anchor", ok,
                     ", ".join(f"{k} |diff| {d:.4f}" for k, d in diffs.items()) + " (<= 0.015)")
    assert ok


def test_optical_model(record_criterion):
    eps_p, eps_w, cones = load_flavor("blueberry"), load_water(), load_cones()
    collinear = 0.0
    for lam in np.linspace(400, 700, 31):
        a = [mixture_absorbance(eps_p, eps_w, DilutionParams(c, 1.7), lam) for c in (0.1, 0.45, 0.8)]
        collinear = max(collinear, abs(a[1] - 0.5 * (a[0] + a[2])))
    zero = Spectrum(np.array([300.0, 900.0]), np.zeros(2))
    white = np.abs(np.subtract(perceived_rgb(zero, zero, DilutionParams(0.5), cones), 1)).max()
    lumas = [LUMA @ perceived_rgb(eps_p, eps_w, DilutionParams(c), cones) for c in (0.2, 0.4, 0.6, 0.8, 1.0)]
    decreasing = bool(np.all(np.diff(lumas) < 0))
    ok = collinear <= 1e-12 and white <= 1e-9 and decreasing
    record_criterion("optical model", ok,
                     f"collinearity residual {collinear:.1e} (<= 1e-12), white error {white:.1e} (<= 1e-9), "
                     f"blueberry luma {' > '.join(f'{v:.3f}' for v in lumas)}")
    assert ok


def test_protocol_integrity(record_criterion, desk_runs):
    positions = np.repeat(np.arange(1, 7), 45)
    plan = position_folds(positions)
    covered = sorted(f.test_position for f in plan) == [1, 2, 3, 4, 5, 6]
    disjoint = all(not set(plan.split(positions, f)[0]) & set(plan.split(positions, f)[1]) for f in plan)
    fixture = np.array([[8, 2], [1, 9]])
    m2 = metrics_from_confusion(fixture)
    five = np.array([[5, 1, 0, 0, 0], [2, 6, 1, 0, 0], [0, 0, 7, 0, 1], [0, 0, 0, 9, 0], [0, 1, 0, 0, 4]])
    m5 = metrics_from_confusion(five)
    hand = all(
        np.isclose(m5.sensitivity[k], tp / (tp + fn)) and np.isclose(m5.specificity[k], tn / (tn + fp))
        for k in range(5) for (tp, fn), (fp, tn) in [binary_collapse(five, k)])
    metrics_ok = np.isclose(m2.sensitivity[0], 0.8) and np.isclose(m2.specificity[0], 0.9) and hand
    leakage = [r.report["leakage"] for r, _, _ in desk_runs]
    clean = all(l["violations"] == 0 and l["fits_checked"] > 0 for l in leakage)
    ok = covered and disjoint and metrics_ok and clean
    record_criterion("protocol integrity", ok,
                     f"6 folds cover positions once: {covered and disjoint}; 2x2 fixture sens "
                     f"{m2.sensitivity[0]:.1f} spec {m2.specificity[0]:.1f}; leakage violations "
                     f"{[l['violations'] for l in leakage]} over {leakage[0]['fits_checked']} checked fits")
    assert ok


def test_end_to_end_synthetic(record_criterion, desk_runs):
    result, elapsed, _ = desk_runs[0]
    acc = {f: result.report["per_flavor"][f]["softmax/auto"]["accuracy"]["mean"] for f in ("blueberry", "chicken")}
    rows = len(result.report["table1"])
    ok = result.ok and rows == 7 and acc["blueberry"] >= 0.90 and acc["chicken"] < acc["blueberry"] and elapsed <= 600
    record_criterion("end-to-end synthetic", ok,
                     f"DNN fold-mean accuracy blueberry {acc['blueberry']:.3f} (>= 0.90), chicken "
                     f"{acc['chicken']:.3f} (< blueberry), {rows} method rows, runtime {elapsed:.0f} s (<= 600 s)")
    assert ok


def test_determinism(record_criterion, desk_runs):
    names = ("report.json", "table1.csv", "per_flavor_auto.csv", "per_flavor_hand.csv")
    (_, _, a), (_, _, b) = desk_runs
    same = {n: (a / n).read_bytes() == (b / n).read_bytes() for n in names}
    ok = all(same.values())
    record_criterion("determinism", ok, f"byte-identical across two runs: {same}")
    assert ok


def test_general_nets_similar_losses(desk_runs):
    # supplementary: independently seeded general nets land on similar reconstruction losses.
    # AE1 is still far from converged after the desk schedule and its seeds sit on shifted
    # copies of the same slow curve (about 18% apart), so its bound is looser than AE2's 10%.
    _, _, out = desk_runs[0]
    sidecars = [read_sidecar(p) for p in sorted((out / "models").glob("*.pmdl"))]
    assert len(sidecars) == 5 and len({s["seed"] for s in sidecars}) == 5
    ae1, ae2 = np.array([s["final_losses"] for s in sidecars]).T
    assert ae2.max() <= 1.1 * ae2.min()
    assert ae1.max() <= 1.25 * ae1.min()
