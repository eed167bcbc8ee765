import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dlb.datagen import DistributionSpec, generate
from dlb.errors import DuplicateKey, TooFewKeys
from dlb.hashing import hash_keys
from dlb.metrics import bin_of, std_metric
from dlb.model import HierConfig
from dlb.trainer import LabeledSet, make_disperse_labels, make_mapping_labels, partition_for_leaves, train

key_sets = st.lists(st.floats(-1e9, 1e9, allow_nan=False), min_size=1, max_size=300, unique=True)


def test_mapping_label_examples():
    assert make_mapping_labels([0.1, 0.5, 0.9], 300).tolist() == [0, 100, 200]
    assert make_mapping_labels([0.9, 0.1, 0.5], 300).tolist() == [200, 0, 100]
    assert make_mapping_labels([42.0], 300).tolist() == [0]
    with pytest.raises(DuplicateKey):
        make_mapping_labels([1.0, 2.0, 1.0], 300)


def test_disperse_label_examples():
    def tag(label, C, T=300):
        return make_disperse_labels([label], (C,), T)[0][0]
    assert tag(0, 3) == 1
    assert tag(100, 2) == math.floor(100 / 150) + 1 == 1
    assert tag(299.9, 3) == 3
    assert tag(300, 3) == 3  # clamped


@given(key_sets, st.sampled_from([300, 1024, 2 ** 32]))
def test_labels_are_evenly_spaced_and_monotone(keys, T):
    labels = make_mapping_labels(keys, T)
    order = np.argsort(keys)
    assert np.all(np.diff(labels[order]) > 0)
    assert np.allclose(np.sort(labels), np.arange(len(keys)) * T / len(keys))
    assert labels.max() < T


@given(key_sets, st.sampled_from([(1,), (4,), (2, 2), (3, 2)]))
def test_partition_properties(keys, fanouts):
    T = 6 * 2 ** 20
    labeled = LabeledSet.build(keys, fanouts, T)
    parts = partition_for_leaves(labeled, fanouts)
    t = T // math.prod(fanouts)
    seen = np.concatenate([idx for idx, _ in parts])
    assert sorted(seen.tolist()) == list(range(len(labeled.keys)))
    for leaf, (idx, mu) in enumerate(parts, start=1):
        assert np.all((0 <= mu) & (mu < t))
        lab = labeled.mapping_labels[idx]
        assert np.all(((leaf - 1) * t <= lab) & (lab < leaf * t))
    if fanouts == (1,):
        assert np.array_equal(parts[0][1], labeled.mapping_labels)


@given(key_sets)
def test_disperse_tags_nest(keys):
    fanouts = (2, 3, 2)
    labeled = LabeledSet.build(keys, fanouts, 12 * 1024)
    top, mid, leaf = labeled.disperse_labels
    assert np.all((mid - 1) // 3 + 1 == top)
    assert np.all((leaf - 1) // 2 + 1 == mid)


def test_uniform_training_drops_loss_100x():
    keys = generate(DistributionSpec("uniform", count=4000, seed=1))
    _, report = train(keys, HierConfig((4,), 2 ** 32), epochs=100, seed=3)
    assert report.loss_curve[-1] < report.loss_curve[0] / 100
    assert report.total_loss < report.loss_curve[0] / 100


def test_seeded_runs_identical():
    keys = generate(DistributionSpec("normal", count=1500, seed=5))
    m1, r1 = train(keys, epochs=3, seed=9)
    m2, r2 = train(keys, epochs=3, seed=9)
    m3, r3 = train(keys, epochs=3, seed=9, workers=2)
    assert r1.loss_curve == r2.loss_curve == r3.loss_curve
    assert r1.to_csv() == r2.to_csv()
    assert np.array_equal(m1(keys), m3(keys))
    _, r4 = train(keys, epochs=3, seed=10)
    assert r4.loss_curve != r1.loss_curve


def test_report_csv_shape():
    keys = generate(DistributionSpec("uniform", count=500, seed=2))
    _, report = train(keys, epochs=2, seed=1)
    lines = report.to_csv().splitlines()
    assert lines[0] == "epoch,total_loss" and len(lines) == 4


def test_too_few_keys():
    with pytest.raises(TooFewKeys):
        train([1.0, 2.0, 3.0], HierConfig((2, 2, 2, 2)), epochs=1)
    with pytest.raises(TooFewKeys):
        train([1.0, 1.0, 1.0], HierConfig((1,)), epochs=1)


@pytest.fixture(scope="module")
def lognormal_fit():
    keys = generate(DistributionSpec("lognormal", count=100_000, seed=13))
    model, _ = train(keys, seed=13)
    return keys, model


def test_lognormal_model_beats_bkdr(lognormal_fit):
    keys, model = lognormal_fit
    T = model.config.T
    learned = np.bincount(bin_of(model(keys), 64, T), minlength=64)
    hashed = np.bincount(bin_of(hash_keys(keys, "bkdr", T), 64, T), minlength=64)
    assert std_metric(learned) < std_metric(hashed)


def test_trained_model_is_nearly_monotone(lognormal_fit):
    keys, model = lognormal_fit
    positions = model(np.sort(np.unique(keys)))
    assert np.mean(np.diff(positions) >= 0) >= 0.95
