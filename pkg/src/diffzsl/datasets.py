"""Feature sets: synthetic benchmark generation, file ingestion, splits.

A FeatureSet carries base feature rows, per-row labels and train/test
flags, and a per-class semantics table with seen/unseen flags. Unseen
classes have no training rows by invariant. The synthetic generator
draws class semantics on the unit sphere and maps them linearly to
feature-space class means, so semantics genuinely determine features
and zero-shot transfer is achievable by construction.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np

from .container import ContainerError, read_container, write_container
from .numerics import Rng

TRAIN, TEST = 0, 1


class FeatureFileError(ValueError):
    """Base class for ingestion failures."""


class MalformedHeaderError(FeatureFileError):
    pass


class DimensionMismatchError(FeatureFileError):
    pass


class UnknownClassError(FeatureFileError):
    pass


class MissingSemanticsError(FeatureFileError):
    pass


class SplitViolationError(FeatureFileError):
    pass


@dataclass(frozen=True)
class FeatureSet:
    features: np.ndarray      # (n, d_v) float32
    labels: np.ndarray        # (n,) int32 class ids
    split: np.ndarray         # (n,) uint8, 0 = train, 1 = test
    class_ids: np.ndarray     # (C,) int32, sorted
    semantics: np.ndarray     # (C, d_a) float32, row-aligned with class_ids
    seen: np.ndarray          # (C,) bool

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        n, d_v = self.features.shape
        if self.labels.shape != (n,) or self.split.shape != (n,):
            raise DimensionMismatchError("labels/split length must match feature rows")
        if self.semantics.shape[0] != self.class_ids.shape[0]:
            raise MissingSemanticsError("every class id needs a semantics row")
        if self.seen.shape != self.class_ids.shape:
            raise DimensionMismatchError("seen flags must align with class ids")
        if not np.all(np.diff(self.class_ids) > 0):
            raise MalformedHeaderError("class ids must be sorted and unique")
        if not np.all(np.isfinite(self.features)):
            raise FeatureFileError("non-finite feature values")
        idx = np.searchsorted(self.class_ids, self.labels)
        bad = (idx >= self.class_ids.size) | (self.class_ids[np.minimum(idx, self.class_ids.size - 1)] != self.labels)
        if np.any(bad):
            raise UnknownClassError(f"unknown class id {int(self.labels[np.argmax(bad)])} in labels")
        unseen_ids = set(self.class_ids[~self.seen].tolist())
        train_labels = set(self.labels[self.split == TRAIN].tolist())
        offenders = train_labels & unseen_ids
        if offenders:
            raise SplitViolationError(f"unseen class in train split: {sorted(offenders)}")

    # -- lookups ----------------------------------------------------------

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d_v(self) -> int:
        return self.features.shape[1]

    @property
    def d_a(self) -> int:
        return self.semantics.shape[1]

    @property
    def seen_class_ids(self) -> np.ndarray:
        return self.class_ids[self.seen]

    @property
    def unseen_class_ids(self) -> np.ndarray:
        return self.class_ids[~self.seen]

    def class_index(self, labels: np.ndarray) -> np.ndarray:
        idx = np.searchsorted(self.class_ids, labels)
        return idx

    def semantics_for(self, labels: np.ndarray) -> np.ndarray:
        return self.semantics[self.class_index(np.asarray(labels))]

    def semantics_of_class(self, class_id: int) -> np.ndarray:
        return self.semantics[int(np.searchsorted(self.class_ids, class_id))]

    @property
    def train_indices(self) -> np.ndarray:
        return np.flatnonzero(self.split == TRAIN)

    @property
    def seen_test_indices(self) -> np.ndarray:
        seen_set = np.isin(self.labels, self.seen_class_ids)
        return np.flatnonzero(seen_set & (self.split == TEST))

    @property
    def unseen_indices(self) -> np.ndarray:
        return np.flatnonzero(np.isin(self.labels, self.unseen_class_ids))

    # -- persistence -------------------------------------------------------

    def save(self, path) -> None:
        header = {
            "version": 1,
            "kind": "features",
            "n": int(self.n),
            "d_v": int(self.d_v),
            "d_a": int(self.d_a),
            "classes": [
                {"id": int(c), "seen": bool(s)}
                for c, s in zip(self.class_ids, self.seen)
            ],
        }
        write_container(path, header, [
            ("features", self.features.astype(np.float32)),
            ("labels", self.labels.astype(np.int32)),
            ("split", self.split.astype(np.uint8)),
            ("semantics", self.semantics.astype(np.float32)),
        ])


def load_features(path) -> FeatureSet:
    try:
        header, arrays = read_container(path)
    except ContainerError as exc:
        raise MalformedHeaderError(str(exc)) from exc
    if header.get("kind") != "features":
        raise MalformedHeaderError(f"{path}: not a feature file")
    try:
        classes = header["classes"]
        n, d_v, d_a = int(header["n"]), int(header["d_v"]), int(header["d_a"])
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedHeaderError(f"{path}: malformed header: {exc}") from exc
    features = arrays["features"]
    if features.shape != (n, d_v):
        raise DimensionMismatchError(
            f"{path}: feature block shape {features.shape} != header ({n}, {d_v})"
        )
    semantics = arrays["semantics"]
    if semantics.shape != (len(classes), d_a):
        raise DimensionMismatchError(
            f"{path}: semantics shape {semantics.shape} != ({len(classes)}, {d_a})"
        )
    class_ids = np.asarray([c["id"] for c in classes], dtype=np.int32)
    seen = np.asarray([bool(c["seen"]) for c in classes], dtype=bool)
    order = np.argsort(class_ids)
    return FeatureSet(
        features=features.astype(np.float32),
        labels=arrays["labels"].astype(np.int32),
        split=arrays["split"].astype(np.uint8),
        class_ids=class_ids[order],
        semantics=semantics[order].astype(np.float32),
        seen=seen[order],
    )


def load_features_csv(features_path, semantics_path) -> FeatureSet:
    """Hand-fixture import: rows `y,split,v_0..`; semantics `y,seen,a_0..`."""
    sem_rows = {}
    seen_rows = {}
    with open(semantics_path, newline="") as fh:
        reader = csv.reader(fh)
        head = next(reader, None)
        if head is None or head[0] != "y" or head[1] != "seen":
            raise MalformedHeaderError(f"{semantics_path}: expected header y,seen,a_0..")
        for row in reader:
            cid = int(row[0])
            seen_rows[cid] = row[1].strip() in ("1", "true", "seen")
            sem_rows[cid] = [float(v) for v in row[2:]]
    feats, labels, split = [], [], []
    with open(features_path, newline="") as fh:
        reader = csv.reader(fh)
        head = next(reader, None)
        if head is None or head[0] != "y" or head[1] != "split":
            raise MalformedHeaderError(f"{features_path}: expected header y,split,v_0..")
        for row in reader:
            cid = int(row[0])
            if cid not in sem_rows:
                raise MissingSemanticsError(f"{features_path}: no semantics row for class {cid}")
            labels.append(cid)
            split.append(TRAIN if row[1].strip() == "train" else TEST)
            feats.append([float(v) for v in row[2:]])
    class_ids = np.asarray(sorted(sem_rows), dtype=np.int32)
    return FeatureSet(
        features=np.asarray(feats, dtype=np.float32),
        labels=np.asarray(labels, dtype=np.int32),
        split=np.asarray(split, dtype=np.uint8),
        class_ids=class_ids,
        semantics=np.asarray([sem_rows[c] for c in class_ids], dtype=np.float32),
        seen=np.asarray([seen_rows[c] for c in class_ids], dtype=bool),
    )


@dataclass(frozen=True)
class SyntheticSpec:
    n_seen_classes: int = 10
    n_unseen_classes: int = 5
    d_v: int = 24
    d_a: int = 8
    samples_per_class: int = 200
    cluster_spread: float = 0.3
    semantic_noise: float = 0.0
    subclusters: int = 1          # >1 plants sub-means inside each class
    train_fraction: float = 0.8   # train share of each seen class
    seed: int = 0

    def validate(self) -> None:
        if min(self.n_seen_classes, self.n_unseen_classes, self.d_v, self.d_a,
               self.samples_per_class, self.subclusters) < 1:
            raise ValueError("all synthetic counts must be >= 1")
        if self.cluster_spread < 0 or self.semantic_noise < 0:
            raise ValueError("spreads must be non-negative")
        if not 0.0 < self.train_fraction <= 1.0:
            raise ValueError("train_fraction must lie in (0, 1]")


def gen_synthetic(spec: SyntheticSpec) -> FeatureSet:
    """Deterministic synthetic benchmark with built-in visual-semantic link."""
    spec.validate()
    rng = Rng(spec.seed)
    n_classes = spec.n_seen_classes + spec.n_unseen_classes
    a = rng.normal((n_classes, spec.d_a))
    a /= np.linalg.norm(a, axis=1, keepdims=True)
    mapping = rng.normal((spec.d_a, spec.d_v)) / np.sqrt(spec.d_a)
    a_used = a + spec.semantic_noise * rng.normal(a.shape)
    means = a_used @ mapping

    sub_offsets = rng.normal((n_classes, spec.subclusters, spec.d_v))
    sub_offsets *= 3.0 * spec.cluster_spread

    feats, labels, split = [], [], []
    n_train = max(1, int(round(spec.train_fraction * spec.samples_per_class)))
    for c in range(n_classes):
        noise = rng.normal((spec.samples_per_class, spec.d_v)) * spec.cluster_spread
        sub = sub_offsets[c, np.arange(spec.samples_per_class) % spec.subclusters]
        if spec.subclusters == 1:
            sub = np.zeros_like(sub)
        rows = means[c] + sub + noise
        feats.append(rows)
        labels.append(np.full(spec.samples_per_class, c, dtype=np.int32))
        if c < spec.n_seen_classes:
            flags = np.full(spec.samples_per_class, TEST, dtype=np.uint8)
            flags[:n_train] = TRAIN
        else:
            flags = np.full(spec.samples_per_class, TEST, dtype=np.uint8)
        split.append(flags)

    return FeatureSet(
        features=np.concatenate(feats).astype(np.float32),
        labels=np.concatenate(labels),
        split=np.concatenate(split),
        class_ids=np.arange(n_classes, dtype=np.int32),
        semantics=a.astype(np.float32),
        seen=np.arange(n_classes) < spec.n_seen_classes,
    )


def subsample_train(fs: FeatureSet, ratio: float, rng: Rng) -> FeatureSet:
    """Keep ceil(ratio * n_c) training rows per seen class; tests untouched."""
    if not 0.0 < ratio <= 1.0:
        raise ValueError("ratio must lie in (0, 1]")
    if ratio == 1.0:
        return fs
    keep = np.ones(fs.n, dtype=bool)
    for cid in fs.seen_class_ids:
        rows = np.flatnonzero((fs.labels == cid) & (fs.split == TRAIN))
        n_keep = int(np.ceil(ratio * rows.size))
        drop = rng.permutation(rows.size)[n_keep:]
        keep[rows[drop]] = False
    return FeatureSet(
        features=fs.features[keep],
        labels=fs.labels[keep],
        split=fs.split[keep],
        class_ids=fs.class_ids,
        semantics=fs.semantics,
        seen=fs.seen,
    )
