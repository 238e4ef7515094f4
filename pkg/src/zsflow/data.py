"""Datasets: toy simulation, manifest-driven loading, and preprocessing.

A dataset directory holds a JSON manifest naming three files:

* an embeddings CSV: one row per class, the class's attribute vector;
* a features file: one row per sample, either CSV decimal text or the raw
  binary layout below;
* a splits CSV with header ``label,split``: row i carries the integer label
  and split tag of feature row i. Tags are train_seen / test_seen /
  test_unseen.

The binary feature layout is: magic ``ZSFB``, uint32 version, uint64 rows,
uint64 cols, then row-major little-endian float64 values.

Preprocessing follows the training contract: min-max statistics are fit on
train_seen rows only, and features are zero-padded on the right until the
width is even and strictly larger than the embedding width.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import ContractError, DataError

MANIFEST_FORMAT_VERSION = 1
FEATURE_BINARY_MAGIC = b"ZSFB"
FEATURE_BINARY_VERSION = 1

SPLIT_TRAIN_SEEN = "train_seen"
SPLIT_TEST_SEEN = "test_seen"
SPLIT_TEST_UNSEEN = "test_unseen"
SPLITS = (SPLIT_TRAIN_SEEN, SPLIT_TEST_SEEN, SPLIT_TEST_UNSEEN)

# %.17g round-trips float64 exactly through decimal text.
_CSV_FORMAT = "%.17g"


@dataclass
class ZslDataset:
    """Visual features, labels, per-class embeddings, and the seen/unseen
    partition. Immutable by convention; preprocessing returns new instances."""

    name: str
    visual: np.ndarray          # (n_samples, visual_dim) float64
    labels: np.ndarray          # (n_samples,) int64 class ids
    class_embeddings: np.ndarray  # (n_classes, semantic_dim) float64
    class_names: list[str]
    seen_classes: np.ndarray    # sorted int64 ids
    unseen_classes: np.ndarray  # sorted int64 ids, disjoint from seen
    split: np.ndarray           # (n_samples,) unicode split tags
    pad_width: int = 0

    @property
    def visual_dim(self) -> int:
        return self.visual.shape[1]

    @property
    def semantic_dim(self) -> int:
        return self.class_embeddings.shape[1]

    @property
    def n_classes(self) -> int:
        return self.class_embeddings.shape[0]

    def indices(self, split_tag: str) -> np.ndarray:
        return np.flatnonzero(self.split == split_tag)

    def features_of(self, split_tag: str) -> np.ndarray:
        return self.visual[self.indices(split_tag)]

    def labels_of(self, split_tag: str) -> np.ndarray:
        return self.labels[self.indices(split_tag)]

    def seen_class_means(self) -> tuple[np.ndarray, np.ndarray]:
        """Per seen class, the mean train_seen feature vector."""
        idx = self.indices(SPLIT_TRAIN_SEEN)
        means = np.empty((len(self.seen_classes), self.visual_dim))
        for k, cid in enumerate(self.seen_classes):
            rows = idx[self.labels[idx] == cid]
            if rows.size == 0:
                raise DataError(f"seen class {cid} has no train_seen samples")
            means[k] = self.visual[rows].mean(axis=0)
        return self.seen_classes.copy(), means

    def embeddings_for(self, class_ids: np.ndarray) -> np.ndarray:
        return self.class_embeddings[np.asarray(class_ids, dtype=np.int64)]

    def validate(self) -> None:
        n = self.visual.shape[0]
        if self.labels.shape != (n,) or self.split.shape != (n,):
            raise DataError("labels/split length does not match feature rows")
        seen = set(self.seen_classes.tolist())
        unseen = set(self.unseen_classes.tolist())
        if seen & unseen:
            raise DataError(f"seen/unseen class sets overlap: {sorted(seen & unseen)}")
        if seen | unseen != set(range(self.n_classes)):
            raise DataError("seen+unseen ids must cover exactly 0..n_classes-1")
        if len(self.class_names) != self.n_classes:
            raise DataError(
                f"{len(self.class_names)} class names for {self.n_classes} classes")
        for i in range(n):
            tag = self.split[i]
            label = int(self.labels[i])
            if tag not in SPLITS:
                raise DataError(f"sample {i}: unknown split tag {tag!r}")
            if label not in seen and label not in unseen:
                raise DataError(f"sample {i}: unknown label {label}")
            if tag == SPLIT_TEST_UNSEEN and label not in unseen:
                raise DataError(
                    f"sample {i}: split {tag} but label {label} is a seen class")
            if tag != SPLIT_TEST_UNSEEN and label not in seen:
                raise DataError(
                    f"sample {i}: split {tag} but label {label} is an unseen class")
        if not np.isfinite(self.visual).all():
            raise DataError("non-finite feature values")
        if not np.isfinite(self.class_embeddings).all():
            raise DataError("non-finite embedding values")


@dataclass
class ScalingStats:
    """Per-dimension min and max taken over train_seen features only."""

    minimum: np.ndarray
    maximum: np.ndarray

    def __post_init__(self):
        if np.any(self.maximum < self.minimum):
            raise ContractError("scaling stats with max < min")


TOY_CLASS_NAMES = ["A", "B", "C", "D"]
TOY_ATTRIBUTES = np.array([[0.0, 1.0], [0.0, 0.0], [1.0, 0.0], [1.0, 1.0]])
TOY_NOISE_VARIANCE = 1.0 / 3.0
TOY_TRAIN_FRACTION = 0.8


def toy_generate(n_per_class: int, seed: int = 0) -> ZslDataset:
    """Four-class 2-D simulation with one unseen class.

    Attributes are the corners of the unit square; samples are drawn around
    2c - 1 with isotropic Gaussian noise of variance 1/3 and padded with two
    zero columns. Seen samples split 80/20 into train/test; the class with
    attribute (1, 1) is entirely test_unseen.
    """
    if n_per_class < 1:
        raise ContractError("need at least one sample per class")
    rng = np.random.default_rng(seed)
    features, labels, split = [], [], []
    for cid, attr in enumerate(TOY_ATTRIBUTES):
        center = 2.0 * attr - 1.0
        noise = rng.normal(0.0, np.sqrt(TOY_NOISE_VARIANCE), size=(n_per_class, 2))
        features.append(center[None, :] + noise)
        labels.append(np.full(n_per_class, cid, dtype=np.int64))
        if cid == 3:
            split.append(np.full(n_per_class, SPLIT_TEST_UNSEEN, dtype="<U16"))
        else:
            n_train = int(round(TOY_TRAIN_FRACTION * n_per_class))
            tags = np.full(n_per_class, SPLIT_TEST_SEEN, dtype="<U16")
            tags[:n_train] = SPLIT_TRAIN_SEEN
            split.append(tags)
    dataset = ZslDataset(
        name="toy",
        visual=np.concatenate(features, axis=0),
        labels=np.concatenate(labels),
        class_embeddings=TOY_ATTRIBUTES.copy(),
        class_names=list(TOY_CLASS_NAMES),
        seen_classes=np.array([0, 1, 2], dtype=np.int64),
        unseen_classes=np.array([3], dtype=np.int64),
        split=np.concatenate(split),
    )
    dataset = pad_to_even(dataset)
    dataset.validate()
    return dataset


def pad_to_even(dataset: ZslDataset) -> ZslDataset:
    """Append zero columns until the width is even and exceeds the embedding
    width; the pad count is recorded on the returned dataset."""
    width = dataset.visual_dim
    target = width
    while target % 2 != 0 or target <= dataset.semantic_dim:
        target += 1
    if target == width:
        return dataset
    padded = np.zeros((dataset.visual.shape[0], target))
    padded[:, :width] = dataset.visual
    return replace(dataset, visual=padded,
                   pad_width=dataset.pad_width + (target - width))


def fit_minmax(dataset: ZslDataset) -> ScalingStats:
    train = dataset.features_of(SPLIT_TRAIN_SEEN)
    if train.shape[0] == 0:
        raise ContractError("cannot fit scaling statistics: train_seen is empty")
    return ScalingStats(minimum=train.min(axis=0), maximum=train.max(axis=0))


def apply_minmax(dataset: ZslDataset, stats: ScalingStats) -> ZslDataset:
    """x' = (x - min) / (max - min) on every split; constant dimensions map
    to 0. Test values outside the train range are left unclipped."""
    span = stats.maximum - stats.minimum
    safe = np.where(span == 0.0, 1.0, span)
    scaled = (dataset.visual - stats.minimum[None, :]) / safe[None, :]
    scaled[:, span == 0.0] = 0.0
    return replace(dataset, visual=scaled)


def fit_apply_minmax(dataset: ZslDataset) -> tuple[ZslDataset, ScalingStats]:
    stats = fit_minmax(dataset)
    return apply_minmax(dataset, stats), stats


# ---------------------------------------------------------------------------
# Manifest IO


def write_feature_binary(path, features: np.ndarray) -> None:
    rows, cols = features.shape
    with open(path, "wb") as fh:
        fh.write(FEATURE_BINARY_MAGIC)
        fh.write(struct.pack("<I", FEATURE_BINARY_VERSION))
        fh.write(struct.pack("<QQ", rows, cols))
        fh.write(np.ascontiguousarray(features, dtype="<f8").tobytes())


def read_feature_binary(path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != FEATURE_BINARY_MAGIC:
            raise DataError(f"{path}: bad magic {magic!r}")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != FEATURE_BINARY_VERSION:
            raise DataError(f"{path}: unsupported binary version {version}")
        rows, cols = struct.unpack("<QQ", fh.read(16))
        payload = fh.read(rows * cols * 8)
        if len(payload) != rows * cols * 8:
            raise DataError(f"{path}: truncated feature payload")
        return np.frombuffer(payload, dtype="<f8").astype(np.float64).reshape(rows, cols)


def save_dataset(dataset: ZslDataset, directory, features_format: str = "csv") -> Path:
    """Write manifest + embeddings/features/splits files; returns the manifest
    path. ``features_format`` is ``csv`` or ``binary``."""
    if features_format not in ("csv", "binary"):
        raise ContractError(f"unknown features format {features_format!r}")
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    embeddings_file = "embeddings.csv"
    splits_file = "splits.csv"
    features_file = "features.csv" if features_format == "csv" else "features.bin"
    np.savetxt(directory / embeddings_file, dataset.class_embeddings,
               fmt=_CSV_FORMAT, delimiter=",")
    if features_format == "csv":
        np.savetxt(directory / features_file, dataset.visual,
                   fmt=_CSV_FORMAT, delimiter=",")
    else:
        write_feature_binary(directory / features_file, dataset.visual)
    with open(directory / splits_file, "w") as fh:
        fh.write("label,split\n")
        for label, tag in zip(dataset.labels, dataset.split):
            fh.write(f"{int(label)},{tag}\n")
    manifest = {
        "format_version": MANIFEST_FORMAT_VERSION,
        "name": dataset.name,
        "class_names": dataset.class_names,
        "seen_classes": [int(c) for c in dataset.seen_classes],
        "unseen_classes": [int(c) for c in dataset.unseen_classes],
        "embeddings_file": embeddings_file,
        "features_file": features_file,
        "features_format": features_format,
        "splits_file": splits_file,
        "pad_width": dataset.pad_width,
    }
    manifest_path = directory / "manifest.json"
    with open(manifest_path, "w") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    return manifest_path


def load_dataset(manifest_path) -> ZslDataset:
    """Load and validate a dataset from its manifest."""
    manifest_path = Path(manifest_path)
    if not manifest_path.exists():
        raise DataError(f"manifest not found: {manifest_path}")
    try:
        with open(manifest_path) as fh:
            manifest = json.load(fh)
    except json.JSONDecodeError as err:
        raise DataError(f"{manifest_path}: invalid JSON ({err})") from err
    version = manifest.get("format_version")
    if version != MANIFEST_FORMAT_VERSION:
        raise DataError(f"{manifest_path}: unsupported manifest version {version}")
    base = manifest_path.parent
    for key in ("embeddings_file", "features_file", "splits_file"):
        if key not in manifest:
            raise DataError(f"{manifest_path}: missing {key}")
        if not (base / manifest[key]).exists():
            raise DataError(f"{manifest_path}: referenced file missing: {manifest[key]}")

    embeddings = np.loadtxt(base / manifest["embeddings_file"],
                            delimiter=",", ndmin=2, dtype=np.float64)
    if manifest.get("features_format", "csv") == "binary":
        features = read_feature_binary(base / manifest["features_file"])
    else:
        features = np.loadtxt(base / manifest["features_file"],
                              delimiter=",", ndmin=2, dtype=np.float64)

    labels, tags = [], []
    with open(base / manifest["splits_file"]) as fh:
        header = fh.readline().strip()
        if header != "label,split":
            raise DataError(f"splits file: expected header 'label,split', got {header!r}")
        for line_no, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            try:
                label_text, tag = line.split(",")
                labels.append(int(label_text))
            except ValueError as err:
                raise DataError(f"splits file line {line_no}: {line!r}") from err
            tags.append(tag)
    if len(labels) != features.shape[0]:
        raise DataError(
            f"{len(labels)} split rows for {features.shape[0]} feature rows")

    dataset = ZslDataset(
        name=manifest.get("name", manifest_path.parent.name),
        visual=features,
        labels=np.array(labels, dtype=np.int64),
        class_embeddings=embeddings,
        class_names=[str(n) for n in manifest["class_names"]],
        seen_classes=np.array(sorted(manifest["seen_classes"]), dtype=np.int64),
        unseen_classes=np.array(sorted(manifest["unseen_classes"]), dtype=np.int64),
        split=np.array(tags),
        pad_width=int(manifest.get("pad_width", 0)),
    )
    dataset.validate()
    return dataset
