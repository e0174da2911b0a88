"""Synthetic dilution dataset: rendering, patch files and the manifest."""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from ..imaging import (decompose_patches, downscale_bicubic, read_raw, vectorize_patch,
                       white_normalize, write_raw)
from ..optics import (DilutionParams, Spectrum, SynthNoiseParams, load_cones, load_spectrum,
                      render_dilution_patch)
from .config import ExperimentConfig, derive_seed

MANIFEST_VERSION = 1


@dataclass
class Manifest:
    records: list[dict]
    root: Path
    meta: dict

    @property
    def n_samples(self) -> int:
        return len({(r["flavor"], r["label"], r["position"]) for r in self.records})

    def column(self, key) -> np.ndarray:
        return np.array([r[key] for r in self.records])

    def flavors(self) -> list[str]:
        return list(dict.fromkeys(r["flavor"] for r in self.records))

    def patch_path(self, rec) -> Path:
        return self.root / rec["path"]


def sample_noise(cfg: ExperimentConfig, flavor: str, label: int, position: int) -> SynthNoiseParams:
    s = cfg.synth
    c_p = s.dilutions[label]
    amp = s.texture_amplitude * (c_p if s.texture_follows_concentration else 1.0)
    gains = s.exposure_gains
    return SynthNoiseParams(
        color_noise_sd=s.color_noise_sd,
        texture_amplitude=amp,
        texture_scale=s.texture_scale,
        exposure_gain=gains[(position - 1) % len(gains)],
        seed=derive_seed(cfg.master_seed, "synth", flavor, label, position),
    )


_WHITE = Spectrum(np.array([300.0, 900.0]), np.zeros(2), "white-target")


def render_sample(cfg: ExperimentConfig, eps_p, eps_w, cones, flavor, label, position):
    """Render one sample subimage and return its downscaled patches.

    A non-absorbing white strip is exposed alongside the sample and used as
    the white reference, so under-exposure is corrected while clipped
    over-exposure survives normalization.
    """
    s = cfg.synth
    noise = sample_noise(cfg, flavor, label, position)
    d = DilutionParams(s.dilutions[label], s.path_length)
    sub = render_dilution_patch(eps_p, eps_w, d, noise, s.subimage_h, s.subimage_w, cones)
    if s.white_target_rows > 0:
        white_noise = replace(noise, texture_amplitude=0.0,
                              seed=derive_seed(cfg.master_seed, "white", flavor, label, position))
        white = render_dilution_patch(_WHITE, _WHITE, d, white_noise, s.white_target_rows,
                                      s.subimage_w, cones)
        frame = np.concatenate([white, sub], axis=0)
        frame = white_normalize(frame, (0, 0, s.white_target_rows, s.subimage_w))
        sub = frame[s.white_target_rows:]
    patches = [downscale_bicubic(p, cfg.downscale) for p in decompose_patches(sub, cfg.grid)]
    return noise, patches


def generate_synthetic_dataset(cfg: ExperimentConfig, out_dir=None) -> Manifest:
    """Render every (flavor, dilution, position) sample, write patch files and manifest.json."""
    cfg.validate_files()
    root = Path(out_dir or cfg.output_dir)
    eps_w = load_spectrum(cfg.water_path())
    cones = load_cones(cfg.cone_paths())
    records = []
    for flavor in cfg.flavors:
        eps_p = load_spectrum(cfg.flavor_path(flavor))
        for label, c_p in enumerate(cfg.synth.dilutions):
            for position in range(1, cfg.synth.positions + 1):
                noise, patches = render_sample(cfg, eps_p, eps_w, cones, flavor, label, position)
                for k, patch in enumerate(patches):
                    rel = f"patches/{flavor}/c{int(round(c_p * 100)):03d}_p{position}_k{k:02d}.raw"
                    write_raw(root / rel, patch)
                    records.append({
                        "id": f"{flavor}/c{int(round(c_p * 100)):03d}/p{position}/k{k:02d}",
                        "flavor": flavor,
                        "dilution": c_p,
                        "label": label,
                        "position": position,
                        "patch_index": k,
                        "exposure_gain": noise.exposure_gain,
                        "seed": noise.seed,
                        "path": rel,
                    })
    per_sample = len(records) // max(1, len(cfg.flavors) * len(cfg.synth.dilutions) * cfg.synth.positions)
    meta = {
        "version": MANIFEST_VERSION,
        "master_seed": cfg.master_seed,
        "flavors": list(cfg.flavors),
        "dilutions": list(cfg.synth.dilutions),
        "positions": cfg.synth.positions,
        "patches_per_sample": per_sample,
        "n_samples": len(cfg.flavors) * len(cfg.synth.dilutions) * cfg.synth.positions,
        "n_patches": len(records),
    }
    manifest = Manifest(records, root, meta)
    write_manifest(root / "manifest.json", manifest)
    return manifest


def write_manifest(path, manifest: Manifest) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    body = {"meta": manifest.meta, "records": manifest.records}
    path.write_text(json.dumps(body, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def load_manifest(path) -> Manifest:
    path = Path(path)
    body = json.loads(path.read_text(encoding="utf-8"))
    if body.get("meta", {}).get("version") != MANIFEST_VERSION:
        raise ValueError(f"{path}: unsupported manifest version")
    seen = set()
    for r in body["records"]:
        key = (r["flavor"], r["label"], r["position"], r["patch_index"])
        if key in seen:
            raise ValueError(f"{path}: duplicate record {key}")
        seen.add(key)
    return Manifest(body["records"], path.parent, body["meta"])


def load_patches(manifest: Manifest) -> np.ndarray:
    """All patches as an ``(n, 25, 50, 3)`` array in manifest order."""
    return np.stack([read_raw(manifest.patch_path(r)) for r in manifest.records])


def patch_vectors(patches) -> np.ndarray:
    return np.stack([vectorize_patch(p) for p in patches])
