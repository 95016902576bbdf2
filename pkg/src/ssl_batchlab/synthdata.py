"""Synthetic classification datasets, class-balanced splits and label masking.

Ground-truth labels are always kept on the :class:`Dataset`.  Which of them
count as *observed* is decided by the labeled index sets of a
:class:`DataSplit`; the rest stay reachable through
:meth:`Dataset.privileged_labels` for diagnostics only.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, SplitError

DATASET_HEADER = "ssl-batchlab-dataset v1"
MISSING = -1

KINDS = ("moons", "blobs")
TASK_DEFS = ("membership", "sign_x0", "sign_x1")


@dataclass(frozen=True)
class DatasetSpec:
    kind: str = "moons"
    n: int = 1000
    noise_sigma: float = 0.15
    num_classes: tuple = (2,)
    seed: int = 0
    task_defs: tuple = ("membership",)
    blob_radius: float = 2.0

    def validate(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown dataset kind {self.kind!r}", key="data.kind")
        if self.n <= 0:
            raise ConfigError("dataset size must be positive", key="data.n")
        if self.noise_sigma < 0:
            raise ConfigError("noise_sigma must be >= 0", key="data.noise_sigma")
        if len(self.task_defs) < 1 or len(self.task_defs) != len(self.num_classes):
            raise ConfigError("need one num_classes entry per task", key="data.num_classes")
        for t, (rule, c) in enumerate(zip(self.task_defs, self.num_classes)):
            if rule not in TASK_DEFS:
                raise ConfigError(f"unknown task rule {rule!r}", key=f"data.task_defs[{t}]")
            if c < 2:
                raise ConfigError("every task needs at least 2 classes", key=f"data.num_classes[{t}]")
            if rule == "membership" and self.kind == "moons" and c != 2:
                raise ConfigError("moons membership has exactly 2 classes", key=f"data.num_classes[{t}]")
            if rule.startswith("sign") and c != 2:
                raise ConfigError("sign rules have exactly 2 classes", key=f"data.num_classes[{t}]")


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray  # (n, d) float64
    labels: np.ndarray  # (n, T) int64, full ground truth
    num_classes: tuple

    def __post_init__(self):
        self.features.setflags(write=False)
        self.labels.setflags(write=False)

    def __len__(self):
        return self.features.shape[0]

    @property
    def ids(self):
        return np.arange(len(self), dtype=np.int64)

    @property
    def num_tasks(self):
        return self.labels.shape[1]

    @property
    def dim(self):
        return self.features.shape[1]

    def privileged_labels(self, task=0):
        """True labels including the ones masked out for training."""
        return self.labels[:, task]

    def observed_labels(self, split):
        """Label table with every label outside ``split.labeled_idx`` masked."""
        out = np.full_like(self.labels, MISSING)
        for t, idx in enumerate(split.labeled_idx):
            out[idx, t] = self.labels[idx, t]
        return out


@dataclass(frozen=True)
class DataSplit:
    train_idx: np.ndarray
    val_idx: np.ndarray
    test_idx: np.ndarray
    labeled_idx: tuple = field(default_factory=tuple)

    def with_labeled(self, labeled_idx):
        return DataSplit(self.train_idx, self.val_idx, self.test_idx, tuple(labeled_idx))

    def labeled_table(self, n):
        """Boolean (n, T) table: is sample i labeled for task t."""
        table = np.zeros((n, len(self.labeled_idx)), dtype=bool)
        for t, idx in enumerate(self.labeled_idx):
            table[idx, t] = True
        return table


def _moons(n, noise, rng):
    n0 = n - n // 2
    n1 = n // 2
    t0 = rng.uniform(0.0, np.pi, n0)
    t1 = rng.uniform(0.0, np.pi, n1)
    # centred so the horizontal midline sits at x0 = 0
    upper = np.column_stack([np.cos(t0) - 0.5, np.sin(t0) - 0.25])
    lower = np.column_stack([0.5 - np.cos(t1), 0.25 - np.sin(t1)])
    X = np.vstack([upper, lower])
    y = np.concatenate([np.zeros(n0, dtype=np.int64), np.ones(n1, dtype=np.int64)])
    X = X + rng.normal(0.0, noise, X.shape)
    return X, y


def _blobs(n, n_classes, noise, radius, rng):
    y = np.arange(n, dtype=np.int64) % n_classes
    angles = 2.0 * np.pi * np.arange(n_classes) / n_classes
    centers = radius * np.column_stack([np.cos(angles), np.sin(angles)])
    X = centers[y] + rng.normal(0.0, noise, (n, 2))
    return X, y


def generate(spec: DatasetSpec) -> Dataset:
    """Draw a fully labeled dataset; identical output for identical specs."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    if spec.kind == "moons":
        X, member = _moons(spec.n, spec.noise_sigma, rng)
    else:
        X, member = _blobs(spec.n, spec.num_classes[0], spec.noise_sigma, spec.blob_radius, rng)
    cols = []
    for rule in spec.task_defs:
        if rule == "membership":
            cols.append(member)
        elif rule == "sign_x0":
            cols.append((X[:, 0] > 0).astype(np.int64))
        else:
            cols.append((X[:, 1] > 0).astype(np.int64))
    order = rng.permutation(spec.n)
    return Dataset(
        np.ascontiguousarray(X[order]),
        np.ascontiguousarray(np.column_stack(cols)[order]),
        tuple(int(c) for c in spec.num_classes),
    )


def balanced_pick(candidates, labels, count, num_classes, rng):
    """Pick ``count`` candidates with per-class counts differing by at most one.

    Which classes receive the extra sample when ``count`` is not divisible by
    ``num_classes`` is decided by ``rng``.
    """
    candidates = np.asarray(candidates, dtype=np.int64)
    base, extra = divmod(int(count), num_classes)
    lucky = set(rng.permutation(num_classes)[:extra].tolist())
    chosen = []
    for c in range(num_classes):
        want = base + (1 if c in lucky else 0)
        pool = candidates[labels[candidates] == c]
        if want > len(pool):
            raise SplitError(f"class {c} has {len(pool)} samples, {want} requested")
        chosen.append(rng.permutation(pool)[:want])
    return np.sort(np.concatenate(chosen)) if chosen else np.empty(0, dtype=np.int64)


def split(dataset: Dataset, val_fraction: float, seed: int, n_test: int = 0) -> DataSplit:
    """Class-balanced test / validation hold-outs; everything else is train.

    ``n_test`` samples are held out first, then ``round(val_fraction * rest)``
    for validation.  Balancing uses task 0.
    """
    if not 0.0 <= val_fraction < 1.0:
        raise ConfigError("val_fraction must lie in [0, 1)", key="data.val_fraction")
    if not 0 <= n_test < len(dataset):
        raise ConfigError("n_test must be smaller than the dataset", key="data.n_test")
    rng = np.random.default_rng(seed)
    y = dataset.labels[:, 0]
    C = dataset.num_classes[0]
    all_idx = dataset.ids
    test_idx = balanced_pick(all_idx, y, n_test, C, rng)
    rest = np.setdiff1d(all_idx, test_idx)
    n_val = int(round(val_fraction * len(rest)))
    val_idx = balanced_pick(rest, y, n_val, C, rng)
    train_idx = np.setdiff1d(rest, val_idx)
    return DataSplit(train_idx, val_idx, test_idx, ())


def select_labeled(dataset: Dataset, split: DataSplit, n_labeled_per_task, seed: int) -> DataSplit:
    """Class-balanced labeled subsets of the training indices, one per task."""
    if len(n_labeled_per_task) != dataset.num_tasks:
        raise ConfigError("need one labeled count per task", key="data.n_labeled")
    rng = np.random.default_rng(seed)
    labeled = []
    for t, n_t in enumerate(n_labeled_per_task):
        if n_t > len(split.train_idx):
            raise SplitError(f"task {t}: {n_t} labels requested from {len(split.train_idx)} training samples")
        labeled.append(balanced_pick(split.train_idx, dataset.labels[:, t], n_t, dataset.num_classes[t], rng))
    return split.with_labeled(labeled)


def standardize(dataset: Dataset, split: DataSplit):
    """Zero-mean, unit-variance features using training-split statistics.

    Returns the new dataset together with ``(mean, std)``.
    """
    train = dataset.features[split.train_idx]
    mean = train.mean(axis=0)
    std = train.std(axis=0)
    std[std == 0] = 1.0
    X = (dataset.features - mean) / std
    return Dataset(np.ascontiguousarray(X), dataset.labels.copy(), dataset.num_classes), (mean, std)


def write_dataset(path, dataset: Dataset, split: DataSplit | None = None):
    """Cache a dataset as text; labels outside ``split.labeled_idx`` are written as ``-``."""
    labels = dataset.labels if split is None else dataset.observed_labels(split)
    lines = [DATASET_HEADER]
    for i in range(len(dataset)):
        feats = ",".join(repr(float(v)) for v in dataset.features[i])
        labs = ",".join("-" if v == MISSING else str(int(v)) for v in labels[i])
        lines.append(f"{i},{feats},{labs}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_dataset(path, num_classes=None):
    """Read a cached dataset; masked labels come back as ``MISSING`` (-1)."""
    text = Path(path).read_text().splitlines()
    if not text or text[0].strip() != DATASET_HEADER:
        raise ConfigError(f"{path}: not a {DATASET_HEADER} file")
    feats, labs = [], []
    for lineno, line in enumerate(text[1:], start=2):
        if not line.strip():
            continue
        fields = line.split(",")
        k = len(fields)
        while k > 1 and (fields[k - 1] == "-" or fields[k - 1].isdigit()):
            k -= 1
        if int(fields[0]) != len(feats):
            raise ConfigError(f"{path}:{lineno}: ids must be consecutive")
        feats.append([float(v) for v in fields[1:k]])
        labs.append([MISSING if v == "-" else int(v) for v in fields[k:]])
    labels = np.array(labs, dtype=np.int64)
    if num_classes is None:
        num_classes = tuple(max(2, int(labels[:, t].max()) + 1) for t in range(labels.shape[1]))
    return Dataset(np.array(feats, dtype=np.float64), labels, tuple(num_classes))
