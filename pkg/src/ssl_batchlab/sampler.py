"""Mini-batch index streams for implicit, explicit and multi-task explicit sampling.

Implicit sampling shuffles the whole training set each epoch and cuts it
into batches.  Explicit sampling keeps one shuffled stream per label
configuration and fills a fixed share of every batch from each; a stream
that runs dry is reshuffled and restarted independently of the others.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, InfeasibleError

MODES = ("implicit", "explicit", "explicit_multitask")
POOLS = ("all", "labeled")


@dataclass
class SamplerConfig:
    mode: str = "implicit"
    batch_size: int = 64
    labeled_fraction: float = 0.5
    group_sizes: dict | None = None
    pool: str = "all"

    def validate(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown sampler mode {self.mode!r}", key="sampler.mode")
        if self.pool not in POOLS:
            raise ConfigError(f"unknown pool {self.pool!r}", key="sampler.pool")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1", key="sampler.batch_size")
        if self.mode == "explicit":
            n_l = labeled_count(self.labeled_fraction, self.batch_size)
            if not 0.0 < self.labeled_fraction < 1.0 or not 1 <= n_l <= self.batch_size - 1:
                raise ConfigError(
                    f"labeled_fraction {self.labeled_fraction} gives {n_l} labeled rows "
                    f"out of {self.batch_size}",
                    key="sampler.labeled_fraction",
                )


@dataclass
class Batch:
    indices: np.ndarray
    labeled_mask: np.ndarray  # (B, T) bool
    configuration: np.ndarray = field(default=None)  # per-row label-configuration mask

    def __len__(self):
        return len(self.indices)


def labeled_count(r, batch_size):
    """Labeled rows per explicit batch: ``r * B`` rounded half up."""
    return int(math.floor(r * batch_size + 0.5))


def configuration_of(table):
    """Integer label-configuration mask per row; bit t set = labeled for task t."""
    table = np.asarray(table, dtype=bool)
    weights = 1 << np.arange(table.shape[1], dtype=np.int64)
    return table.astype(np.int64) @ weights


def configuration_name(mask, T):
    """Bit string with task 0 first, e.g. ``"10"`` = labeled for task 0 only."""
    return "".join("1" if (mask >> t) & 1 else "0" for t in range(T))


def _as_rng(rng):
    return np.random.default_rng(rng)


def _table_for(indices, labeled_table):
    if labeled_table is None:
        return np.zeros((len(indices), 1), dtype=bool)
    return labeled_table[indices]


class CyclingStream:
    """Endless draws from a fixed pool, reshuffling whenever it is exhausted.

    Within every full pass each member appears exactly once, so after any
    number of draws the per-member counts differ by at most one.
    """

    def __init__(self, pool, rng):
        self.pool = np.asarray(pool, dtype=np.int64)
        if len(self.pool) == 0:
            raise ConfigError("cannot cycle over an empty index set")
        self.rng = rng
        self._order = self.rng.permutation(self.pool)
        self._pos = 0

    def take(self, k):
        out = np.empty(k, dtype=np.int64)
        filled = 0
        while filled < k:
            if self._pos == len(self._order):
                self._order = self.rng.permutation(self.pool)
                self._pos = 0
            step = min(k - filled, len(self._order) - self._pos)
            out[filled:filled + step] = self._order[self._pos:self._pos + step]
            self._pos += step
            filled += step
        return out


class ImplicitSampler:
    """Uniform sampling: a fresh permutation per epoch, trailing partial batch dropped."""

    def __init__(self, train_idx, batch_size, rng, labeled_table=None):
        self.train_idx = np.asarray(train_idx, dtype=np.int64)
        if len(self.train_idx) < batch_size:
            raise ConfigError(
                f"implicit sampling needs at least {batch_size} samples, got {len(self.train_idx)}",
                key="sampler.batch_size",
            )
        self.batch_size = batch_size
        self.rng = _as_rng(rng)
        self.labeled_table = labeled_table

    def epoch(self):
        B = self.batch_size
        perm = self.rng.permutation(self.train_idx)
        batches = []
        for start in range(0, len(perm) - B + 1, B):
            idx = perm[start:start + B]
            table = _table_for(idx, self.labeled_table)
            batches.append(Batch(idx, table, configuration_of(table)))
        return batches

    def __iter__(self):
        while True:
            yield from self.epoch()


class GroupedSampler:
    """Explicit sampling: ``group_sizes[c]`` rows per batch from configuration ``c``.

    Groups are filled in descending configuration order (fully labeled
    first, fully unlabeled last); each group owns an rng spawned from the
    parent, in that same order.
    """

    def __init__(self, partition, group_sizes, rng, labeled_table=None):
        partition = {int(k): np.asarray(v, dtype=np.int64) for k, v in partition.items() if len(v)}
        sizes = {int(k): int(v) for k, v in group_sizes.items()}
        if set(sizes) != set(partition):
            raise ConfigError(
                f"group_sizes covers configurations {sorted(sizes)}, "
                f"partition has {sorted(partition)}",
                key="sampler.group_sizes",
            )
        if any(v < 1 for v in sizes.values()):
            raise ConfigError("every group needs at least one row per batch", key="sampler.group_sizes")
        self.order = sorted(partition, reverse=True)
        self.sizes = [sizes[c] for c in self.order]
        self.batch_size = sum(self.sizes)
        children = _as_rng(rng).spawn(len(self.order))
        self.streams = [CyclingStream(partition[c], g) for c, g in zip(self.order, children)]
        self.labeled_table = labeled_table
        self._config_col = np.repeat(np.array(self.order, dtype=np.int64), self.sizes)

    def next_batch(self):
        idx = np.concatenate([s.take(k) for s, k in zip(self.streams, self.sizes)])
        if self.labeled_table is None:
            T = max(1, max(self.order).bit_length())
            table = ((self._config_col[:, None] >> np.arange(T)) & 1).astype(bool)
        else:
            table = self.labeled_table[idx]
        return Batch(idx, table, self._config_col.copy())

    def __iter__(self):
        while True:
            yield self.next_batch()


def implicit_epoch(train_idx, B, rng, labeled_table=None):
    """One epoch of uniformly sampled batches of size ``B``."""
    return ImplicitSampler(train_idx, B, rng, labeled_table).epoch()


def explicit_stream(labeled_idx, unlabeled_idx, B, r, rng, num_steps, labeled_table=None):
    """``num_steps`` batches with ``round(r*B)`` labeled rows each."""
    if len(labeled_idx) == 0:
        raise ConfigError("explicit sampling needs labeled samples", key="data.n_labeled")
    n_l = labeled_count(r, B)
    if not 1 <= n_l <= B - 1:
        raise ConfigError(f"r={r} gives {n_l} labeled rows out of {B}", key="sampler.labeled_fraction")
    if len(unlabeled_idx) == 0:
        raise ConfigError("explicit sampling needs unlabeled samples")
    sampler = GroupedSampler({1: labeled_idx, 0: unlabeled_idx}, {1: n_l, 0: B - n_l}, rng, labeled_table)
    return [sampler.next_batch() for _ in range(num_steps)]


def multitask_partition(split, T=None):
    """Training indices grouped by label configuration; empty groups omitted."""
    T = len(split.labeled_idx) if T is None else T
    if T < 1:
        raise ConfigError("need at least one task")
    train = np.asarray(split.train_idx, dtype=np.int64)
    table = np.zeros((len(train), T), dtype=bool)
    for t in range(T):
        table[:, t] = np.isin(train, split.labeled_idx[t])
    conf = configuration_of(table)
    return {int(c): train[conf == c] for c in np.unique(conf)}


def default_group_sizes(partition, B):
    """Proportional-to-availability sizes, at least one row per configuration."""
    keys = sorted(partition, reverse=True)
    if len(keys) > B:
        raise InfeasibleError(
            f"{len(keys)} label configurations do not fit in a batch of {B}"
        )
    counts = np.array([len(partition[k]) for k in keys], dtype=float)
    quota = B * counts / counts.sum()
    alloc = np.maximum(1, np.floor(quota)).astype(int)
    while alloc.sum() > B:
        excess = np.where(alloc > 1, alloc - quota, -np.inf)
        alloc[int(np.argmax(excess))] -= 1
    while alloc.sum() < B:
        alloc[int(np.argmax(quota - alloc))] += 1
    return {k: int(a) for k, a in zip(keys, alloc)}


def explicit_multitask_stream(partition, group_sizes, rng, num_steps, labeled_table=None):
    non_empty = {k: v for k, v in partition.items() if len(v)}
    B = sum(group_sizes.values())
    if len(non_empty) > B:
        raise InfeasibleError(
            f"{len(non_empty)} label configurations do not fit in a batch of {B}"
        )
    sampler = GroupedSampler(non_empty, group_sizes, rng, labeled_table)
    return [sampler.next_batch() for _ in range(num_steps)]


def make_sampler(cfg: SamplerConfig, split, n_total, rng):
    """Build the endless batch iterator a training run draws from."""
    cfg.validate()
    table = split.labeled_table(n_total)
    if cfg.pool == "labeled":
        pool = np.unique(np.concatenate(split.labeled_idx))
    else:
        pool = split.train_idx
    if cfg.mode == "implicit":
        return ImplicitSampler(pool, cfg.batch_size, rng, table)
    if cfg.mode == "explicit":
        if len(split.labeled_idx) != 1:
            raise ConfigError("explicit mode is single-task; use explicit_multitask", key="sampler.mode")
        labeled = np.intersect1d(pool, split.labeled_idx[0])
        unlabeled = np.setdiff1d(pool, labeled)
        if len(labeled) == 0:
            raise ConfigError("explicit sampling needs labeled samples", key="data.n_labeled")
        if len(unlabeled) == 0:
            raise ConfigError("explicit sampling needs unlabeled samples", key="sampler.pool")
        n_l = labeled_count(cfg.labeled_fraction, cfg.batch_size)
        return GroupedSampler({1: labeled, 0: unlabeled}, {1: n_l, 0: cfg.batch_size - n_l}, rng, table)
    partition = multitask_partition(split)
    if cfg.pool == "labeled":
        partition = {k: np.intersect1d(v, pool) for k, v in partition.items()}
        partition = {k: v for k, v in partition.items() if len(v)}
    if cfg.group_sizes is None:
        sizes = default_group_sizes(partition, cfg.batch_size)
    else:
        # config keys are bit strings with task 0 first
        sizes = {_bits_to_mask(k) if isinstance(k, str) else int(k): int(v)
                 for k, v in cfg.group_sizes.items()}
        if sum(sizes.values()) != cfg.batch_size:
            raise ConfigError("group_sizes must sum to batch_size", key="sampler.group_sizes")
    if len(partition) > cfg.batch_size:
        raise InfeasibleError(
            f"{len(partition)} label configurations do not fit in a batch of {cfg.batch_size}"
        )
    return GroupedSampler(partition, sizes, rng, table)


def _bits_to_mask(bits):
    return sum(1 << t for t, ch in enumerate(bits) if ch == "1")


# -- budget ---------------------------------------------------------------


@dataclass
class BudgetLedger:
    train_size: int
    budget_samples: int
    samples_seen: int = 0

    @property
    def epochs_elapsed(self):
        return self.samples_seen / self.train_size

    def consume(self, n):
        self.samples_seen += n


def budget_samples(train_size, epochs, multiplier=1):
    """Total samples allowed for ``epochs`` passes over ``train_size`` samples."""
    return int(round(train_size * epochs * multiplier))


def budget_check(ledger: BudgetLedger, B):
    """True while another batch of ``B`` still fits in the budget."""
    return ledger.samples_seen + B <= ledger.budget_samples


def budget_steps(budget, B):
    return budget // B


# -- audit ----------------------------------------------------------------


def exposure_counts(batches, n_total):
    counts = np.zeros(n_total, dtype=np.int64)
    for b in batches:
        np.add.at(counts, b.indices, 1)
    return counts


def expected_exposure(cfg: SamplerConfig, split, n_total, steps):
    """Expected draws per training sample over ``steps`` batches."""
    table = split.labeled_table(n_total)
    if cfg.pool == "labeled":
        pool = np.unique(np.concatenate(split.labeled_idx))
    else:
        pool = np.asarray(split.train_idx)
    expected = np.zeros(n_total)
    if cfg.mode == "implicit":
        expected[pool] = steps * cfg.batch_size / len(pool)
        return expected, configuration_of(table)
    sampler = make_sampler(cfg, split, n_total, 0)
    for conf, size, stream in zip(sampler.order, sampler.sizes, sampler.streams):
        expected[stream.pool] = steps * size / len(stream.pool)
    return expected, configuration_of(table)
