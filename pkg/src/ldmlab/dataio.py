"""IDX (MNIST) reading and writing, the noise protocol, synthetic mixtures."""
from __future__ import annotations

import gzip
import json
import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801

MNIST_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


class IDXFormatError(ValueError):
    def __init__(self, path, offset: int, msg: str):
        super().__init__(f"{path}: byte {offset}: {msg}")
        self.offset = offset


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    split: str = "train"
    n_classes: int = 10
    provenance: str = ""

    def __post_init__(self):
        if self.features.shape[0] != self.labels.shape[0]:
            raise ValueError("feature and label counts differ")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.n_classes):
            raise ValueError("label outside class range")

    def __len__(self) -> int:
        return self.labels.shape[0]


def _read_bytes(path: Path) -> bytes:
    with open(path, "rb") as fh:
        head = fh.read(2)
    opener = gzip.open if head == b"\x1f\x8b" else open
    with opener(path, "rb") as fh:
        return fh.read()


def read_idx(path: str | Path, magic: int) -> np.ndarray:
    """Parse an IDX file of unsigned bytes (``.gz`` accepted)."""
    path = Path(path)
    raw = _read_bytes(path)
    if len(raw) < 4:
        raise IDXFormatError(path, len(raw), "file shorter than the magic number")
    (got,) = struct.unpack(">I", raw[:4])
    if got != magic:
        raise IDXFormatError(path, 0, f"bad magic 0x{got:08x}, expected 0x{magic:08x}")
    ndim = magic & 0xFF
    head = 4 + 4 * ndim
    if len(raw) < head:
        raise IDXFormatError(path, len(raw), f"truncated header, need {head} bytes")
    dims = struct.unpack(">" + "I" * ndim, raw[4:head])
    n = int(np.prod(dims, dtype=np.int64))
    if len(raw) < head + n:
        raise IDXFormatError(path, len(raw), f"truncated payload, need {head + n} bytes")
    return np.frombuffer(raw, dtype=np.uint8, count=n, offset=head).reshape(dims)


def write_idx(path: str | Path, array: np.ndarray, compress: bool = False) -> None:
    array = np.asarray(array, dtype=np.uint8)
    magic = 0x00000800 | array.ndim
    payload = struct.pack(">I", magic) + struct.pack(">" + "I" * array.ndim, *array.shape) + array.tobytes()
    opener = gzip.open if compress else open
    with opener(path, "wb") as fh:
        fh.write(payload)


def load_idx(images: str | Path, labels: str | Path, split: str = "train") -> Dataset:
    """Images flattened to rows and scaled by 1/255."""
    img = read_idx(images, IMAGE_MAGIC)
    lab = read_idx(labels, LABEL_MAGIC)
    if img.shape[0] != lab.shape[0]:
        raise ValueError(f"{img.shape[0]} images but {lab.shape[0]} labels")
    feats = img.reshape(img.shape[0], -1).astype(np.float64) / 255.0
    return Dataset(feats, lab.astype(np.int64), split, 10, f"idx:{Path(images).name}")


def _find(data_dir: Path, stem: str) -> Path:
    for name in (stem, stem + ".gz"):
        if (data_dir / name).exists():
            return data_dir / name
    raise FileNotFoundError(f"{stem}[.gz] not found in {data_dir}")


def load_mnist(data_dir: str | Path, split: str) -> Dataset:
    data_dir = Path(data_dir)
    img, lab = MNIST_FILES[split]
    return load_idx(_find(data_dir, img), _find(data_dir, lab), split)


def add_gaussian_noise(data: Dataset, seed, std: float = 1.0) -> Dataset:
    """Add i.i.d. N(0, std^2) noise to every feature; no clipping."""
    rng = np.random.default_rng(seed)
    noisy = data.features + std * rng.standard_normal(data.features.shape)
    return replace(data, features=noisy, provenance=f"{data.provenance}+noise(seed={seed!r})")


def synth_mixture(means, covs, n: int, seed, weights=None) -> Dataset:
    """Labeled Gaussian mixture; ``means[c]`` and ``covs[c]`` per class."""
    means = np.asarray(means, dtype=np.float64)
    covs = np.asarray(covs, dtype=np.float64)
    n_classes, d = means.shape
    if covs.shape != (n_classes, d, d):
        raise ValueError(f"covariances must have shape ({n_classes}, {d}, {d})")
    factors = []
    for c in range(n_classes):
        cov = covs[c]
        if not np.allclose(cov, cov.T):
            raise ValueError(f"class {c} covariance is not symmetric")
        vals, vecs = np.linalg.eigh(cov)
        if vals.min() < -1e-10 * max(1.0, abs(vals).max()):
            raise ValueError(f"class {c} covariance is not positive semi-definite")
        factors.append(vecs * np.sqrt(np.clip(vals, 0, None)))
    weights = np.full(n_classes, 1.0 / n_classes) if weights is None else np.asarray(weights, dtype=np.float64)
    rng = np.random.default_rng(seed)
    labels = rng.choice(n_classes, size=n, p=weights)
    z = rng.standard_normal((n, d))
    feats = np.empty((n, d))
    for c in range(n_classes):
        rows = labels == c
        feats[rows] = means[c] + z[rows] @ factors[c].T
    return Dataset(feats, labels.astype(np.int64), "synthetic", n_classes, f"synth(seed={seed!r})")


def load_synth_spec(path: str | Path) -> Dataset:
    """JSON with ``means``, ``covs``, ``n``, ``seed`` and optional ``weights``."""
    obj = json.loads(Path(path).read_text())
    return synth_mixture(obj["means"], obj["covs"], int(obj["n"]), obj.get("seed", 0), obj.get("weights"))
