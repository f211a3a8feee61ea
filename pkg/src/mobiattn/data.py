"""Directory datasets (one subdirectory of PGM/PPM images per class) and a synthetic generator."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DatasetError, ParameterError
from .imageio import read_image, write_image
from .preprocess import minmax_normalize, resize
from .rng import Xoshiro256pp, derive_seed

IMAGE_SUFFIXES = (".pgm", ".ppm")
SPLITS = ("train", "val", "test")


@dataclass
class Sample:
    path: Path
    label: int
    split: str


@dataclass
class DatasetIndex:
    root: Path
    class_names: list[str]
    samples: list[Sample]
    seed: int

    def split(self, name: str) -> list[Sample]:
        if name not in SPLITS:
            raise ParameterError(f"unknown split {name!r}")
        return [s for s in self.samples if s.split == name]

    def counts(self, name: str) -> list[int]:
        out = [0] * len(self.class_names)
        for s in self.split(name):
            out[s.label] += 1
        return out


def scan_dataset(root: str | os.PathLike, train_fraction: float = 0.8, seed: int = 0,
                 val_fraction: float = 0.0) -> DatasetIndex:
    """Index ``root/<class>/<image>`` and assign a stratified, seeded split.

    Classes are labeled in lexicographic order of their directory names.
    Per class, ``round(train_fraction * n)`` shuffled samples go to train,
    the rest to test; ``val_fraction`` of the train share is moved to val.
    """
    if not 0.0 < train_fraction <= 1.0:
        raise ParameterError(f"train_fraction must lie in (0, 1], got {train_fraction}")
    if not 0.0 <= val_fraction < 1.0:
        raise ParameterError(f"val_fraction must lie in [0, 1), got {val_fraction}")
    root = Path(root)
    if not root.is_dir():
        raise DatasetError(f"{root}: dataset root does not exist")
    class_dirs = sorted(p for p in root.iterdir() if p.is_dir())
    if not class_dirs:
        raise DatasetError(f"{root}: no class subdirectories")
    samples = []
    for label, cdir in enumerate(class_dirs):
        files = sorted(p for p in cdir.iterdir() if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES)
        if not files:
            raise DatasetError(f"{cdir}: class directory has no PGM/PPM images")
        rng = Xoshiro256pp(derive_seed(seed, label))
        order = [files[i] for i in rng.permutation(len(files))]
        n_train = int(round(train_fraction * len(files)))
        n_val = int(round(val_fraction * n_train))
        for i, path in enumerate(order):
            split = "val" if i < n_val else "train" if i < n_train else "test"
            samples.append(Sample(path, label, split))
    samples.sort(key=lambda s: (s.label, s.path.name))
    return DatasetIndex(root, [d.name for d in class_dirs], samples, seed)


def load_images(samples: list[Sample], shape: tuple[int, int, int]) -> tuple[np.ndarray, np.ndarray]:
    """Read, min-max scale to [0, 1] and resize to ``shape`` (C, H, W).

    Grayscale files are replicated to three channels when the model wants RGB.
    """
    c, h, w = shape
    images = np.zeros((len(samples), c, h, w))
    labels = np.zeros(len(samples), dtype=np.int64)
    for i, s in enumerate(samples):
        img = read_image(s.path)
        if img.shape[0] != c:
            if img.shape[0] == 1 and c == 3:
                img = np.repeat(img, 3, axis=0)
            else:
                raise DatasetError(f"{s.path}: image has {img.shape[0]} channels, model expects {c}")
        images[i] = resize(minmax_normalize(img), h, w)
        labels[i] = s.label
    return images, labels


def _prototype(rng: Xoshiro256pp, channels: int, size: int, components: int = 4) -> np.ndarray:
    """Smooth pattern: per channel, a sum of random low-frequency cosines mapped to [0.1, 0.9]."""
    yy, xx = np.meshgrid(np.linspace(0.0, 1.0, size), np.linspace(0.0, 1.0, size), indexing="ij")
    out = np.zeros((channels, size, size))
    for ch in range(channels):
        acc = np.zeros((size, size))
        for _ in range(components):
            fy = rng.uniform(0.5, 2.5)
            fx = rng.uniform(0.5, 2.5)
            phase = rng.uniform(0.0, 2.0 * math.pi)
            amp = rng.uniform(0.5, 1.0)
            acc += amp * np.cos(2.0 * math.pi * (fy * yy + fx * xx) + phase)
        lo, hi = acc.min(), acc.max()
        out[ch] = 0.1 + 0.8 * (acc - lo) / (hi - lo) if hi > lo else 0.5
    return out


def synth_dataset(out_dir: str | os.PathLike, classes: int = 5, per_class: int = 100, size: int = 32,
                  noise: float = 0.05, seed: int = 0, channels: int = 3) -> list[str]:
    """Write ``out_dir/class_XX/img_YYYY.ppm`` (or .pgm for one channel); returns class names.

    Each class is a seeded smooth prototype. Every sample adds a uniform
    brightness jitter in [-noise, noise] and per-pixel uniform noise of
    the same amplitude, so ``noise=0`` reproduces the prototype exactly.
    """
    if classes < 2 or per_class < 2 or size < 1 or channels not in (1, 3):
        raise ParameterError("synth_dataset: need classes >= 2, per_class >= 2, size >= 1, channels 1 or 3")
    if noise < 0:
        raise ParameterError("synth_dataset: noise must be >= 0")
    out = Path(out_dir)
    suffix = ".ppm" if channels == 3 else ".pgm"
    names = [f"class_{c:02d}" for c in range(classes)]
    for c, name in enumerate(names):
        proto = _prototype(Xoshiro256pp(derive_seed(seed, 0, c)), channels, size)
        cdir = out / name
        cdir.mkdir(parents=True, exist_ok=True)
        for i in range(per_class):
            img = proto
            if noise > 0:
                rng = Xoshiro256pp(derive_seed(seed, 1, c, i))
                shift = rng.uniform(-noise, noise)
                img = proto + shift + rng.uniform_array(proto.size, -noise, noise).reshape(proto.shape)
            write_image(cdir / f"img_{i:04d}{suffix}", img)
    return names
