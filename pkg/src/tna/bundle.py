"""Feature-bundle storage, split management, and the synthetic generator.

A bundle is a directory holding manifest.json plus raw little-endian
arrays: features.bin (float32, row-major m x n), labels.bin (uint32),
weights.bin (float32, row-major C x n, one class vector per row),
bias.bin (float32, length C). Storage is single precision; computation is
done in double precision after load.

A documented debug path imports features from CSV with the exact column
order: label, z_0, ..., z_{n-1}.
"""

from __future__ import annotations

import csv as _csv
import json
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import LastLayer
from .errors import ChecksumError, DomainError, FormatVersionError, TruncatedFileError
from .rng import SeededRng

FORMAT_VERSION = 1

# canonical acceptance fixture
SYNTH_A = dict(n=512, num_classes=20, m=10_000, class_separation=3.0,
               weight_scale=3.0, noise_sigma=1.0, seed=7)


@dataclass
class FeatureBundle:
    features: np.ndarray  # m x n, float32 values
    labels: np.ndarray  # m, int
    layer: LastLayer
    splits: dict[str, np.ndarray]  # named index lists ("calibration", "test")
    metadata: dict[str, str] = field(default_factory=dict)
    access_counts: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        m = self.features.shape[0]
        if self.labels.shape != (m,):
            raise DomainError("labels length does not match feature rows")
        if self.labels.min(initial=0) < 0 or (m and self.labels.max() >= self.layer.num_classes):
            raise DomainError("labels must lie in [0, C)")
        for name, idx in self.splits.items():
            idx = np.asarray(idx, dtype=np.int64)
            if idx.size and (idx.min() < 0 or idx.max() >= m):
                raise DomainError(f"split '{name}' has out-of-range indices")
            self.splits[name] = idx
        cal = set(self.splits.get("calibration", np.array([], dtype=np.int64)).tolist())
        test = set(self.splits.get("test", np.array([], dtype=np.int64)).tolist())
        if cal & test:
            raise DomainError("calibration and test splits overlap")
        for name in self.splits:
            self.access_counts.setdefault(name, 0)

    @property
    def m(self) -> int:
        return self.features.shape[0]

    @property
    def n(self) -> int:
        return self.features.shape[1]

    @property
    def num_classes(self) -> int:
        return self.layer.num_classes

    def split_view(self, name: str):
        """(features, labels) of a named split; counts the access."""
        if name not in self.splits:
            raise DomainError(f"no split named '{name}'")
        self.access_counts[name] += 1
        idx = self.splits[name]
        return np.asarray(self.features[idx], dtype=float), self.labels[idx].copy()

    def split_size(self, name: str) -> int:
        if name not in self.splits:
            raise DomainError(f"no split named '{name}'")
        return int(self.splits[name].size)


def _array_specs(bundle: FeatureBundle):
    return {
        "features": (bundle.features.astype("<f4"), "features.bin", "<f4", [bundle.m, bundle.n]),
        "labels": (bundle.labels.astype("<u4"), "labels.bin", "<u4", [bundle.m]),
        # stored row-per-class (C x n), the layout exporters naturally emit
        "weights": (bundle.layer.weights.T.astype("<f4"), "weights.bin", "<f4",
                    [bundle.num_classes, bundle.n]),
        "bias": (bundle.layer.bias.astype("<f4"), "bias.bin", "<f4", [bundle.num_classes]),
    }


def save_bundle(bundle: FeatureBundle, path) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    arrays = {}
    for name, (arr, fname, dtype, shape) in _array_specs(bundle).items():
        payload = np.ascontiguousarray(arr).tobytes()
        (path / fname).write_bytes(payload)
        arrays[name] = {
            "file": fname,
            "dtype": dtype,
            "shape": shape,
            "offset": 0,
            "byte_length": len(payload),
            "crc32": zlib.crc32(payload),
        }
    manifest = {
        "format_version": FORMAT_VERSION,
        "endianness": "little",
        "m": bundle.m,
        "n": bundle.n,
        "C": bundle.num_classes,
        "arrays": arrays,
        "splits": {k: v.tolist() for k, v in bundle.splits.items()},
        "metadata": bundle.metadata,
    }
    with open(path / "manifest.json", "w") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _read_array(path: Path, name: str, spec) -> np.ndarray:
    fpath = path / spec["file"]
    if not fpath.exists():
        raise TruncatedFileError(f"array '{name}': missing file {spec['file']}")
    payload = fpath.read_bytes()[spec["offset"] : spec["offset"] + spec["byte_length"]]
    if len(payload) < spec["byte_length"]:
        raise TruncatedFileError(
            f"array '{name}': expected {spec['byte_length']} bytes, found {len(payload)}"
        )
    if zlib.crc32(payload) != spec["crc32"]:
        raise ChecksumError(f"array '{name}': CRC-32 mismatch")
    return np.frombuffer(payload, dtype=spec["dtype"]).reshape(spec["shape"])


def load_bundle(path) -> FeatureBundle:
    path = Path(path)
    with open(path / "manifest.json") as fh:
        manifest = json.load(fh)
    if manifest.get("format_version") != FORMAT_VERSION:
        raise FormatVersionError(
            f"unsupported bundle format version: {manifest.get('format_version')}"
        )
    arrays = {name: _read_array(path, name, spec) for name, spec in manifest["arrays"].items()}
    layer = LastLayer(
        weights=arrays["weights"].astype(float).T,  # back to columns-per-class
        bias=arrays["bias"].astype(float),
    )
    return FeatureBundle(
        features=arrays["features"].copy(),
        labels=arrays["labels"].astype(np.int64),
        layer=layer,
        splits={k: np.asarray(v, dtype=np.int64) for k, v in manifest["splits"].items()},
        metadata=dict(manifest.get("metadata", {})),
    )


def import_csv(csv_path, layer: LastLayer, splits=None, metadata=None) -> FeatureBundle:
    """Debug import: rows of `label, z_0..z_{n-1}` plus an explicit layer."""
    rows = []
    labels = []
    with open(csv_path, newline="") as fh:
        for rec in _csv.reader(fh):
            if not rec:
                continue
            labels.append(int(rec[0]))
            rows.append(np.array(rec[1:], dtype=np.float32))
    if not rows:
        raise DomainError("CSV file holds no samples")
    features = np.vstack(rows)
    if features.shape[1] != layer.n:
        raise DomainError(f"CSV feature dim {features.shape[1]} does not match layer n={layer.n}")
    return FeatureBundle(
        features=features,
        labels=np.asarray(labels, dtype=np.int64),
        layer=layer,
        splits=dict(splits or {}),
        metadata=dict(metadata or {"source": "csv"}),
    )


def synth_generate(n, num_classes, m, class_separation, weight_scale, noise_sigma, seed) -> FeatureBundle:
    """Synthetic overconfident-classifier fixture.

    Class mean directions are uniform on the unit sphere; features are
    separation * mean + Gaussian noise; class vectors point along the
    means with zero bias. ``weight_scale`` is measured relative to the
    calibration-neutral norm (the NLL-optimal temperature fitted on the
    excluded train pool), so weight_scale = 1 is approximately calibrated
    and weight_scale > 1 sharpens the softmax into overconfidence without
    moving the argmax. Sample indices are split 60/20/20 into the unused
    train pool, "calibration", and "test".
    """
    if n < 2 or num_classes < 2 or m < num_classes:
        raise DomainError("need n >= 2, C >= 2 and m >= C")
    if class_separation < 0 or weight_scale <= 0 or noise_sigma < 0:
        raise DomainError("degenerate generator parameters")
    gen = SeededRng(seed).generator
    means = gen.standard_normal((num_classes, n))
    means /= np.linalg.norm(means, axis=1, keepdims=True)
    labels = gen.integers(0, num_classes, size=m)
    features = class_separation * means[labels] + noise_sigma * gen.standard_normal((m, n))
    features = features.astype(np.float32)
    perm = gen.permutation(m)
    n_train = int(0.6 * m)
    n_cal = int(0.2 * m)
    splits = {
        "calibration": np.sort(perm[n_train : n_train + n_cal]),
        "test": np.sort(perm[n_train + n_cal :]),
    }
    # neutral scale: unit class vectors, temperature fitted on the train pool
    from .calibration import fit_temperature

    train = perm[:n_train]
    base_logits = features[train].astype(float) @ means.T
    t0 = fit_temperature(base_logits, labels[train]).T
    layer = LastLayer(
        weights=((weight_scale / t0) * means.T).astype(np.float32).astype(float),
        bias=np.zeros(num_classes),
    )
    metadata = {
        "source": "synthetic",
        "n": str(n),
        "C": str(num_classes),
        "m": str(m),
        "class_separation": str(class_separation),
        "weight_scale": str(weight_scale),
        "noise_sigma": str(noise_sigma),
        "seed": str(seed),
    }
    return FeatureBundle(
        features=features,
        labels=labels.astype(np.int64),
        layer=layer,
        splits=splits,
        metadata=metadata,
    )


def save_averaged_weight(aw, path) -> None:
    """Persist an averaged weight as raw float64 arrays plus tilt.json."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    arrays = {}
    for name, arr in (("weights", aw.weights), ("bias", aw.bias), ("transform", aw.transform)):
        payload = np.ascontiguousarray(arr.astype("<f8")).tobytes()
        (path / f"{name}.bin").write_bytes(payload)
        arrays[name] = {
            "file": f"{name}.bin",
            "dtype": "<f8",
            "shape": list(arr.shape),
            "offset": 0,
            "byte_length": len(payload),
            "crc32": zlib.crc32(payload),
        }
    doc = {
        "format_version": FORMAT_VERSION,
        "endianness": "little",
        "arrays": arrays,
        "provenance": aw.provenance,
    }
    with open(path / "tilt.json", "w") as fh:
        json.dump(doc, fh, sort_keys=True, indent=2)
        fh.write("\n")


def load_averaged_weight(path):
    from .core import AveragedWeight

    path = Path(path)
    with open(path / "tilt.json") as fh:
        doc = json.load(fh)
    if doc.get("format_version") != FORMAT_VERSION:
        raise FormatVersionError(f"unsupported tilt format version: {doc.get('format_version')}")
    arrays = {name: _read_array(path, name, spec) for name, spec in doc["arrays"].items()}
    return AveragedWeight(
        weights=arrays["weights"].astype(float),
        bias=arrays["bias"].astype(float),
        transform=arrays["transform"].astype(float),
        provenance=list(doc.get("provenance", [])),
    )


def make_synth_a(**overrides) -> FeatureBundle:
    """The canonical acceptance fixture (overridable for ablations)."""
    params = dict(SYNTH_A)
    params.update(overrides)
    return synth_generate(**params)
