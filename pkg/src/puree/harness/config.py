"""Experiment configuration, profiles and seed derivation."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from ..imaging import PatchGridSpec
from ..neural import TrainConfig
from ..optics import EXPOSURE_GAINS, bundled_flavors, data_path

DILUTIONS = (0.2, 0.4, 0.6, 0.8, 1.0)
DESK_FLAVORS = ("blueberry", "carrot", "chicken")
SEED_ENV = "PUREE_SEED"


def derive_seed(master: int, *path) -> int:
    """Child seed from the master seed and a component path (63-bit)."""
    key = "/".join([str(int(master))] + [str(p) for p in path]).encode("utf-8")
    return int.from_bytes(hashlib.sha256(key).digest()[:8], "little") >> 1


@dataclass
class SynthConfig:
    subimage_h: int = 100
    subimage_w: int = 200
    path_length: float = 1.0
    color_noise_sd: float = 0.02
    texture_amplitude: float = 0.08
    texture_scale: float = 6.0
    # texture amplitude is scaled by c_p so concentrated samples look rougher
    texture_follows_concentration: bool = True
    exposure_gains: tuple = EXPOSURE_GAINS
    white_target_rows: int = 10
    positions: int = 6
    dilutions: tuple = DILUTIONS


@dataclass
class ClassifierConfig:
    rf_trees: int = 10
    rf_max_depth: int = 20
    repeats: int = 5
    svm_lambda: float = 1e-3
    svm_iterations_per_sample: int = 20


@dataclass
class ExperimentConfig:
    profile: str = "desk"
    flavors: tuple = DESK_FLAVORS
    flavor_spectra: dict = field(default_factory=dict)
    water_spectrum: str | None = None
    cone_spectra: list | None = None
    grid: PatchGridSpec = field(default_factory=PatchGridSpec)
    downscale: float = 0.5
    synth: SynthConfig = field(default_factory=SynthConfig)
    n_nets: int = 5
    dims: tuple = (3750, 100, 50, 5)
    # the 3750-input layer saturates at larger steps under the summed reconstruction loss
    ae1: TrainConfig = field(default_factory=lambda: TrainConfig(epochs=40, learning_rate=0.001))
    ae2: TrainConfig = field(default_factory=lambda: TrainConfig(epochs=60, learning_rate=0.05))
    head: TrainConfig = field(default_factory=lambda: TrainConfig(epochs=200, learning_rate=0.02))
    finetune: TrainConfig = field(default_factory=lambda: TrainConfig(epochs=30, learning_rate=0.01))
    classifiers: ClassifierConfig = field(default_factory=ClassifierConfig)
    aggregation: str = "patch"
    output_dir: str = "puree_run"
    master_seed: int = 20170601

    def __post_init__(self):
        if self.profile not in ("desk", "full"):
            raise ValueError(f"unknown profile {self.profile!r}")
        if self.aggregation not in ("patch", "mode"):
            raise ValueError("aggregation must be 'patch' or 'mode'")
        if self.n_nets < 1:
            raise ValueError("need at least one general network")
        self.flavors = tuple(self.flavors)
        self.dims = tuple(self.dims)

    # ------------------------------------------------------------ spectra paths

    def flavor_path(self, name: str) -> Path:
        if name in self.flavor_spectra:
            return Path(self.flavor_spectra[name])
        return data_path("flavors", f"{name}.csv")

    def water_path(self) -> Path:
        return Path(self.water_spectrum) if self.water_spectrum else data_path("water.csv")

    def cone_paths(self) -> list[Path]:
        if self.cone_spectra:
            return [Path(p) for p in self.cone_spectra]
        return [data_path(f"cones_{c}.csv") for c in "rgb"]

    def validate_files(self) -> None:
        missing = [str(p) for p in [self.water_path(), *self.cone_paths(),
                                    *(self.flavor_path(f) for f in self.flavors)] if not p.exists()]
        if missing:
            raise FileNotFoundError(f"spectrum files not found: {missing}")

    # ------------------------------------------------------------ (de)serialization

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["flavors"] = list(self.flavors)
        d["dims"] = list(self.dims)
        d["synth"]["exposure_gains"] = list(self.synth.exposure_gains)
        d["synth"]["dilutions"] = list(self.synth.dilutions)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        base = profile_defaults(d.get("profile", "desk"))
        nested = {"grid": PatchGridSpec, "synth": SynthConfig, "classifiers": ClassifierConfig,
                  "ae1": TrainConfig, "ae2": TrainConfig, "head": TrainConfig,
                  "finetune": TrainConfig}
        kwargs = {}
        for f in dataclasses.fields(cls):
            if f.name not in d:
                kwargs[f.name] = getattr(base, f.name)
                continue
            value = d.pop(f.name)
            if f.name in nested and isinstance(value, dict):
                current = dataclasses.asdict(getattr(base, f.name))
                unknown = set(value) - set(current)
                if unknown:
                    raise ValueError(f"unknown keys in {f.name!r}: {sorted(unknown)}")
                current.update(value)
                if f.name == "synth":
                    current["exposure_gains"] = tuple(current["exposure_gains"])
                    current["dilutions"] = tuple(current["dilutions"])
                value = nested[f.name](**current)
            kwargs[f.name] = value
        if d:
            raise ValueError(f"unknown config keys: {sorted(d)}")
        return cls(**kwargs)


def profile_defaults(profile: str) -> ExperimentConfig:
    if profile == "desk":
        return ExperimentConfig()
    if profile == "full":
        return ExperimentConfig(
            profile="full",
            flavors=tuple(bundled_flavors()),
            ae1=TrainConfig(epochs=200, learning_rate=0.001),
            ae2=TrainConfig(epochs=200, learning_rate=0.05),
            head=TrainConfig(epochs=200, learning_rate=0.02),
            finetune=TrainConfig(epochs=100, learning_rate=0.01),
        )
    raise ValueError(f"unknown profile {profile!r}")


def load_config(path=None, profile: str | None = None, env=None) -> ExperimentConfig:
    """Read a JSON config (all keys optional); ``PUREE_SEED`` overrides the master seed."""
    d = {}
    if path is not None:
        d = json.loads(Path(path).read_text(encoding="utf-8"))
    if profile is not None:
        d["profile"] = profile
    cfg = ExperimentConfig.from_dict(d)
    env = os.environ if env is None else env
    if env.get(SEED_ENV):
        cfg.master_seed = int(env[SEED_ENV])
    return cfg
