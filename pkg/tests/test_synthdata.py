import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ssl_batchlab.errors import ConfigError, SplitError
from ssl_batchlab.synthdata import (
    DatasetSpec,
    Dataset,
    balanced_pick,
    generate,
    read_dataset,
    select_labeled,
    split,
    standardize,
    write_dataset,
)


def moons(n=20, seed=0, tasks=("membership",), noise=0.15):
    return generate(DatasetSpec("moons", n, noise, (2,) * len(tasks), seed, tasks))


def test_moons_toy_set_is_balanced():
    ds = moons(20)
    assert len(ds) == 20
    assert np.bincount(ds.labels[:, 0]).tolist() == [10, 10]
    assert ds.num_classes == (2,)


def test_zero_samples_rejected():
    with pytest.raises(ConfigError):
        generate(DatasetSpec("blobs", 0, 0.1, (3,), 0))


@pytest.mark.parametrize("kind,rule", [("spirals", "membership"), ("moons", "parity")])
def test_unknown_kind_or_rule_rejected(kind, rule):
    with pytest.raises(ConfigError):
        generate(DatasetSpec(kind, 10, 0.1, (2,), 0, (rule,)))


def test_generation_is_deterministic():
    a = moons(1000, seed=7)
    b = moons(1000, seed=7)
    assert a.features.tobytes() == b.features.tobytes()
    assert a.labels.tobytes() == b.labels.tobytes()
    assert moons(1000, seed=8).features.tobytes() != a.features.tobytes()


def test_blobs_classes_round_robin():
    ds = generate(DatasetSpec("blobs", 31, 0.2, (4,), 3))
    assert np.bincount(ds.labels[:, 0]).tolist() == [8, 8, 8, 7]
    assert np.all(np.isfinite(ds.features))


def test_sign_task_matches_coordinate():
    ds = moons(200, tasks=("membership", "sign_x0"))
    assert np.array_equal(ds.labels[:, 1], (ds.features[:, 0] > 0).astype(int))


def test_tiny_labeled_selection():
    ds = moons(20)
    sp = split(ds, 0.0, 0)
    sp = select_labeled(ds, sp, [4], 0)
    assert np.bincount(ds.labels[sp.labeled_idx[0], 0], minlength=2).tolist() == [2, 2]


def test_odd_request_balances_within_one():
    ds = moons(20)
    sp = select_labeled(ds, split(ds, 0.0, 0), [3], 1)
    counts = sorted(np.bincount(ds.labels[sp.labeled_idx[0], 0], minlength=2).tolist())
    assert counts == [1, 2]


def test_two_tasks_small():
    ds = moons(20, tasks=("membership", "sign_x0"), seed=3)
    sp = select_labeled(ds, split(ds, 0.0, 0), [4, 4], 0)
    for t in range(2):
        assert np.bincount(ds.labels[sp.labeled_idx[t], t], minlength=2).tolist() == [2, 2]


def test_too_many_labels_for_a_class():
    ds = moons(20)
    with pytest.raises(SplitError):
        select_labeled(ds, split(ds, 0.0, 0), [22], 0)
    with pytest.raises(SplitError):
        balanced_pick(np.arange(20), ds.labels[:, 0], 21, 2, np.random.default_rng(0))


def test_split_sizes_and_disjointness():
    ds = moons(1000, seed=1)
    sp = split(ds, 0.1, 5)
    assert len(sp.train_idx) == 900 and len(sp.val_idx) == 100 and len(sp.test_idx) == 0
    assert np.bincount(ds.labels[sp.val_idx, 0]).tolist() == [50, 50]
    sp2 = split(ds, 0.1, 5)
    assert np.array_equal(sp.train_idx, sp2.train_idx) and np.array_equal(sp.val_idx, sp2.val_idx)


def test_split_with_test_holdout_partitions():
    ds = moons(1200, seed=1)
    sp = split(ds, 0.1, 5, n_test=200)
    parts = np.concatenate([sp.train_idx, sp.val_idx, sp.test_idx])
    assert sorted(parts.tolist()) == list(range(1200))
    assert len(sp.test_idx) == 200 and len(sp.val_idx) == 100


def test_zero_val_fraction():
    ds = moons(100)
    assert len(split(ds, 0.0, 0).val_idx) == 0
    with pytest.raises(ConfigError):
        split(ds, 1.0, 0)


def test_masking_is_non_destructive():
    ds = moons(100)
    sp = select_labeled(ds, split(ds, 0.1, 0), [6], 0)
    obs = ds.observed_labels(sp)
    masked = obs[:, 0] == -1
    assert masked.sum() == 100 - 6
    assert np.array_equal(ds.privileged_labels(0), moons(100).labels[:, 0])
    assert np.array_equal(obs[~masked, 0], ds.labels[~masked, 0])


def test_standardize_uses_train_statistics():
    ds = moons(500, seed=2)
    sp = split(ds, 0.2, 0)
    std_ds, (mean, sd) = standardize(ds, sp)
    train = std_ds.features[sp.train_idx]
    np.testing.assert_allclose(train.mean(axis=0), 0, atol=1e-12)
    np.testing.assert_allclose(train.std(axis=0), 1, atol=1e-12)
    assert np.array_equal(std_ds.labels, ds.labels)


def test_dataset_is_immutable():
    ds = moons(10)
    with pytest.raises(ValueError):
        ds.features[0, 0] = 1.0


def test_cache_round_trip(tmp_path):
    ds = moons(30, tasks=("membership", "sign_x1"), seed=4)
    sp = select_labeled(ds, split(ds, 0.0, 0), [4, 2], 0)
    path = tmp_path / "ds.txt"
    write_dataset(path, ds, sp)
    lines = path.read_text().splitlines()
    assert lines[0] == "ssl-batchlab-dataset v1"
    back = read_dataset(path, num_classes=(2, 2))
    assert back.features.tobytes() == ds.features.tobytes()
    assert np.array_equal(back.labels, ds.observed_labels(sp))
    full = tmp_path / "full.txt"
    write_dataset(full, ds)
    assert np.array_equal(read_dataset(full).labels, ds.labels)


def test_cache_bad_header(tmp_path):
    p = tmp_path / "x.txt"
    p.write_text("nope\n")
    with pytest.raises(ConfigError):
        read_dataset(p)


@settings(max_examples=60, deadline=None)
@given(
    n=st.integers(20, 300),
    C=st.integers(2, 5),
    frac=st.floats(0.0, 0.5),
    n_lab=st.integers(0, 15),
    seed=st.integers(0, 2**31),
)
def test_pipeline_properties(n, C, frac, n_lab, seed):
    spec = DatasetSpec("blobs", n, 0.3, (C,), seed)
    ds = generate(spec)
    sp = split(ds, frac, seed)
    n_lab = min(n_lab, min(np.bincount(ds.labels[sp.train_idx, 0], minlength=C)) * C)
    sp = select_labeled(ds, sp, [n_lab], seed + 1)
    assert set(sp.labeled_idx[0]) <= set(sp.train_idx)
    assert not set(sp.train_idx) & set(sp.val_idx)
    counts = np.bincount(ds.labels[sp.labeled_idx[0], 0], minlength=C)
    assert np.all(np.abs(counts - n_lab / C) < 1)
    again = select_labeled(ds, split(generate(spec), frac, seed), [n_lab], seed + 1)
    assert np.array_equal(again.labeled_idx[0], sp.labeled_idx[0])
