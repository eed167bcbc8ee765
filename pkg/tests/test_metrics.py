import numpy as np
import pytest
from hypothesis import given, strategies as st

from dlb.datagen import DistributionSpec, generate
from dlb.hashing import hash_keys
from dlb.metrics import compare_table, rows_to_csv, sorted_bin_counts, spread, std_metric

loads = st.lists(st.integers(0, 10 ** 6), min_size=1, max_size=100)


def test_std_examples():
    assert std_metric([2, 2, 2, 2]) == 0.0
    assert std_metric([0, 4]) == 2.0
    assert std_metric([1, 3]) == 1.0


@given(loads, st.integers(0, 1000), st.integers(1, 20))
def test_std_translation_and_scaling(lv, shift, k):
    base = std_metric(lv)
    assert std_metric([v + shift for v in lv]) == pytest.approx(base, rel=1e-9, abs=1e-6)
    assert std_metric([v * k for v in lv]) == pytest.approx(k * base, rel=1e-9, abs=1e-6)
    assert (std_metric(lv) == 0) == (len(set(lv)) == 1)


def test_sorted_bin_counts_stub_mapper():
    T, n = 1024, 8
    keys = np.arange(800)
    counts = sorted_bin_counts(keys, lambda k: (np.asarray(k) % n) * (T // n), n, T)
    assert counts.tolist() == [100] * 8


@given(st.lists(st.integers(0, 2 ** 32 - 1), min_size=1, max_size=300), st.randoms())
def test_bin_counts_conserve_and_ignore_order(positions, rnd):
    ident = lambda k: np.asarray(k)
    counts = sorted_bin_counts(positions, ident, 32, 2 ** 32)
    assert counts.sum() == len(positions)
    assert np.all(np.diff(counts) >= 0)
    shuffled = list(positions)
    rnd.shuffle(shuffled)
    assert np.array_equal(counts, sorted_bin_counts(shuffled, ident, 32, 2 ** 32))


@pytest.mark.parametrize("hash_name", ["bkdr", "murmur3", "fnv1a"])
def test_normal_keys_skew_under_hashing(hash_name):
    keys = generate(DistributionSpec("normal", count=10240, seed=7))
    counts = sorted_bin_counts(keys, lambda k: hash_keys(k, hash_name, 2 ** 32), 32, 2 ** 32)
    assert spread(counts) >= 0.15


def test_compare_table_ratios():
    rows = compare_table({"dlb": [[78, 0]], "ch-fnv1a": [[337, 0]]})
    by = {r["method"]: r for r in rows}
    # std of [2s, 0] is s
    assert by["dlb"]["mean_std"] == 39.0
    assert by["ch-fnv1a"]["ratio_vs_dlb"] == pytest.approx(337 / 78)
    assert by["ch-fnv1a"]["excess_ratio_vs_dlb"] == pytest.approx((337 - 78) / 78)
    assert round(by["ch-fnv1a"]["ratio_vs_dlb"], 2) == 4.32
    assert round(by["ch-fnv1a"]["excess_ratio_vs_dlb"], 2) == 3.32


def test_compare_table_runs():
    rows = compare_table({"a": [[1, 3], [0, 4]], "b": [[1, 3], [0, 4]], "c": [[0, 4]]}, reference="a")
    a, b, c = rows
    assert a["mean_std"] == b["mean_std"] == 1.5 and a["min"] == 1.0 and a["max"] == 2.0
    assert c["runs"] == 1 and c["mean_std"] == c["min"] == c["max"] == 2.0
    with pytest.raises(ValueError):
        compare_table({"a": [[1]]})


def test_rows_to_csv():
    text = rows_to_csv([{"method": "x", "mean_std": 0.1, "n": 3}], ["method", "mean_std"])
    assert text == "method,mean_std\nx,0.1\n"
