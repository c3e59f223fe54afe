import numpy as np
import pytest
from hypothesis import given, strategies as st

from statind.classification import BinaryClassification, ClassificationError, is_refinement
from statind.hybrid import FundamentalClassification, improve_classification, split_counts


def fixture(seed=0, d=21):
    names = ["big"] * 40 + [f"s{j}" for j in range(9) for _ in range(3 + j % 3)]
    rng = np.random.default_rng(seed)
    return rng.normal(size=(len(names), d)), FundamentalClassification.from_names(names)


def test_split_counts():
    assert split_counts([40, 3, 29, 30, 31], 21).tolist() == [2, 0, 1, 2, 2]


def test_small_subindustries_pass_through():
    rng = np.random.default_rng(1)
    names = [f"g{i % 4}" for i in range(40)]
    fc = FundamentalClassification.from_names(names)
    out = improve_classification(rng.normal(size=(40, 21)), fc, num_try=5, seed=0)
    assert np.array_equal(out.membership, fc.membership)


def test_forty_stock_subindustry_splits():
    x, fc = fixture()
    out = improve_classification(x, fc, num_try=10, seed=3)
    big = fc.membership[:, 0] > 0
    n_big = len({c for c in out.cluster_of[big]})
    assert 1 <= n_big <= 2
    # column accounting: one extra column per extra piece of the split
    assert out.n_clusters == fc.membership.shape[1] + n_big - 1
    assert is_refinement(out, BinaryClassification(fc.membership))
    # the untouched columns come through verbatim, after the split block
    assert out.membership[:, n_big:].tobytes() == fc.membership[:, 1:].tobytes()


@given(st.integers(0, 10_000))
def test_refinement_property(seed):
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, 4, size=70)
    fc = FundamentalClassification.from_names([f"a{v}" for v in labels])
    out = improve_classification(rng.normal(size=(70, 11)), fc, num_try=3, seed=seed)
    assert out.n_clusters >= fc.membership.shape[1]
    assert is_refinement(out, BinaryClassification(fc.membership))


def test_row_sum_check():
    m = np.array([[1, 0], [1, 1], [0, 1]])
    with pytest.raises(ClassificationError, match="row 1"):
        FundamentalClassification(m)


def test_panel_mismatch():
    x, fc = fixture()
    with pytest.raises(ClassificationError):
        improve_classification(x[:-1], fc)


def test_deterministic():
    x, fc = fixture(2)
    a = improve_classification(x, fc, num_try=5, seed=1)
    b = improve_classification(x, fc, num_try=5, seed=1)
    assert a == b
