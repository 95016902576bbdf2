from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ssl_batchlab.errors import ConfigError, InfeasibleError
from ssl_batchlab.sampler import (
    BudgetLedger,
    CyclingStream,
    SamplerConfig,
    budget_check,
    budget_samples,
    configuration_name,
    default_group_sizes,
    explicit_multitask_stream,
    explicit_stream,
    exposure_counts,
    implicit_epoch,
    labeled_count,
    make_sampler,
    multitask_partition,
)
from ssl_batchlab.synthdata import DataSplit

LABELED = np.arange(4)
UNLABELED = np.arange(4, 20)


def tiny_split():
    return DataSplit(np.arange(20), np.empty(0, int), np.empty(0, int), (LABELED,))


def test_tiny_explicit_exposure():
    batches = explicit_stream(LABELED, UNLABELED, 4, 0.5, 0, 5)
    counts = exposure_counts(batches, 20)
    assert counts[:4].mean() == 2.5
    assert counts[4:].mean() == 0.625
    assert counts[:4].mean() / counts[4:].mean() == 4.0
    assert all(len(b) == 4 and b.labeled_mask[:, 0].sum() == 2 for b in batches)


def test_tiny_implicit_exposure():
    batches = implicit_epoch(np.arange(20), 4, 0)
    assert len(batches) == 5
    assert exposure_counts(batches, 20).tolist() == [1] * 20
    imp_labeled = exposure_counts(batches, 20)[:4].mean()
    exp_labeled = exposure_counts(explicit_stream(LABELED, UNLABELED, 4, 0.5, 0, 5), 20)[:4].mean()
    assert exp_labeled / imp_labeled == 2.5


def test_implicit_drops_remainder():
    batches = implicit_epoch(np.arange(20), 6, 1)
    assert len(batches) == 3
    counts = exposure_counts(batches, 20)
    assert counts.sum() == 18 and counts.max() == 1


def test_implicit_too_small_pool():
    with pytest.raises(ConfigError):
        implicit_epoch(np.arange(3), 4, 0)


def test_implicit_labeled_mask_follows_table():
    table = np.zeros((20, 1), bool)
    table[:4] = True
    for b in implicit_epoch(np.arange(20), 4, 3, table):
        assert np.array_equal(b.labeled_mask[:, 0], b.indices < 4)


def test_short_labeled_stream_wraps_fairly():
    (b,) = explicit_stream(np.array([7, 9]), np.arange(10, 30), 4, 0.5, 0, 1)
    assert sorted(b.indices[:2].tolist()) == [7, 9]


def test_explicit_requires_labels():
    with pytest.raises(ConfigError):
        explicit_stream(np.array([], int), UNLABELED, 4, 0.5, 0, 1)
    with pytest.raises(ConfigError):
        explicit_stream(LABELED, UNLABELED, 4, 0.05, 0, 1)


@pytest.mark.parametrize("r,B,expected", [(0.5, 4, 2), (0.125, 8, 1), (0.3, 5, 2), (0.25, 6, 2), (0.1, 64, 6)])
def test_labeled_count_rounds_half_up(r, B, expected):
    assert labeled_count(r, B) == expected


def test_cycling_stream_reshuffles_per_pass():
    s = CyclingStream(np.arange(5), np.random.default_rng(0))
    draws = s.take(15)
    for k in range(3):
        assert sorted(draws[5 * k:5 * k + 5].tolist()) == list(range(5))


@settings(max_examples=200, deadline=None)
@given(
    n_l=st.integers(1, 30),
    n_u=st.integers(1, 60),
    B=st.integers(2, 16),
    r=st.floats(0.05, 0.95),
    steps=st.integers(0, 40),
    seed=st.integers(0, 2**32 - 1),
)
def test_explicit_fairness_property(n_l, n_u, B, r, steps, seed):
    n_lab = labeled_count(r, B)
    if not 1 <= n_lab <= B - 1:
        return
    lab = np.arange(n_l)
    unl = np.arange(n_l, n_l + n_u)
    batches = explicit_stream(lab, unl, B, r, seed, steps)
    counts = exposure_counts(batches, n_l + n_u)
    assert counts[:n_l].max() - counts[:n_l].min() <= 1
    assert counts[n_l:].max() - counts[n_l:].min() <= 1
    assert counts[:n_l].sum() == steps * n_lab
    again = explicit_stream(lab, unl, B, r, seed, steps)
    assert all(np.array_equal(a.indices, b.indices) for a, b in zip(batches, again))


def two_task_split():
    train = np.arange(20)
    return DataSplit(train, np.empty(0, int), np.empty(0, int), (np.array([0, 1, 2, 3]), np.array([2, 3, 4, 5])))


def test_partition_small_has_four_configurations():
    part = multitask_partition(two_task_split())
    assert sorted(part) == [0, 1, 2, 3]
    assert part[3].tolist() == [2, 3]
    assert part[1].tolist() == [0, 1]
    assert part[2].tolist() == [4, 5]
    assert len(part[0]) == 14
    assert configuration_name(1, 2) == "10"


def test_partition_single_task_recovers_labeled_unlabeled():
    part = multitask_partition(tiny_split(), 1)
    assert sorted(part) == [0, 1]
    assert part[1].tolist() == [0, 1, 2, 3]


def test_partition_omits_empty_configuration():
    sp = DataSplit(np.arange(10), np.empty(0, int), np.empty(0, int), (np.array([0, 1]), np.array([2, 3])))
    assert sorted(multitask_partition(sp)) == [0, 1, 2]


def test_multitask_stream_small():
    part = multitask_partition(two_task_split())
    batches = explicit_multitask_stream(part, {3: 2, 2: 2, 1: 2, 0: 2}, 0, 6)
    for b in batches:
        assert len(b) == 8
        assert Counter(b.configuration.tolist()) == {3: 2, 2: 2, 1: 2, 0: 2}
        assert b.labeled_mask[:, 0].sum() == 4 and b.labeled_mask[:, 1].sum() == 4


def test_multitask_infeasible_when_too_many_groups():
    part = {c: np.array([c]) for c in range(1024)}
    with pytest.raises(InfeasibleError):
        default_group_sizes(part, 512)
    with pytest.raises(InfeasibleError):
        explicit_multitask_stream(part, {c: 1 for c in range(512)}, 0, 1)


def test_multitask_group_mismatch():
    part = multitask_partition(two_task_split())
    with pytest.raises(ConfigError):
        explicit_multitask_stream(part, {3: 4, 0: 4}, 0, 1)


def test_single_task_multitask_equals_explicit():
    part = multitask_partition(tiny_split(), 1)
    a = explicit_multitask_stream(part, {1: 2, 0: 2}, 42, 9)
    b = explicit_stream(LABELED, UNLABELED, 4, 0.5, 42, 9)
    for x, y in zip(a, b):
        assert np.array_equal(x.indices, y.indices)


def test_default_group_sizes_floor_one():
    part = {3: np.arange(2), 2: np.arange(2), 1: np.arange(2), 0: np.arange(994)}
    sizes = default_group_sizes(part, 8)
    assert sum(sizes.values()) == 8
    assert min(sizes.values()) == 1
    assert sizes[0] == 5


def test_make_sampler_modes():
    sp = tiny_split()
    it = iter(make_sampler(SamplerConfig("explicit", 4, 0.5), sp, 20, 0))
    assert next(it).labeled_mask[:, 0].sum() == 2
    it = iter(make_sampler(SamplerConfig("implicit", 4), sp, 20, 0))
    assert sum(len(next(it)) for _ in range(10)) == 40
    it = iter(make_sampler(SamplerConfig("implicit", 4, pool="labeled"), sp, 20, 0))
    assert set(next(it).indices.tolist()) == {0, 1, 2, 3}
    mt = make_sampler(SamplerConfig("explicit_multitask", 8, group_sizes={"11": 2, "01": 2, "10": 2, "00": 2}),
                      two_task_split(), 20, 0)
    assert dict(zip(mt.order, mt.sizes)) == {3: 2, 2: 2, 1: 2, 0: 2}


def test_sampler_config_validation():
    with pytest.raises(ConfigError):
        SamplerConfig("foo").validate()
    with pytest.raises(ConfigError):
        SamplerConfig("explicit", 4, 0.01).validate()


def test_budget_large_pool_numbers():
    assert budget_samples(45_000, 1000) == 45_000_000
    assert budget_samples(45_000, 1000, multiplier=6) == 6 * 45_000_000
    # 2**20 steps of a 64 labeled + 64 unlabeled batch: every row counts
    ledger = BudgetLedger(45_000, 10**9)
    ledger.consume(2**20 * 128)
    assert round(ledger.samples_seen / 1e6) == 134


def test_budget_check_semantics():
    ledger = BudgetLedger(100, 0)
    assert not budget_check(ledger, 1)
    ledger = BudgetLedger(100, 10)
    seen = 0
    while budget_check(ledger, 4):
        ledger.consume(4)
        seen += 4
    assert seen == 8 and ledger.epochs_elapsed == 0.08
