import numpy as np
import pytest
from hypothesis import given, strategies as st

from dpknockoffs.knockoff import AugmentedMatrix, augment, sample_knockoffs
from dpknockoffs.model import DataError, DesignDistribution, generate_design


def test_knockoffs_bounded_and_reproducible():
    dist = DesignDistribution("truncated-uniform", b=2.0)
    a = sample_knockoffs(100, 3, dist, seed=5)
    b = sample_knockoffs(100, 3, dist, seed=5)
    np.testing.assert_array_equal(a, b)
    assert np.max(np.abs(a)) <= 2.0


def test_knockoffs_uncorrelated_with_design():
    n = 20_000
    dist = DesignDistribution()
    X = generate_design(n, 2, dist, seed=11)
    Xk = sample_knockoffs(n, 2, dist, seed=11)
    for j in range(2):
        assert abs(np.corrcoef(X[:, j], Xk[:, j])[0, 1]) < 4 / np.sqrt(n)


def test_augment_shape():
    A = augment(np.ones((2, 1)), np.zeros((2, 1)), np.array([3.0, 4.0]))
    assert A.A.shape == (2, 3) and A.p == 1


@given(st.integers(1, 20), st.integers(1, 6), st.integers(0, 1000))
def test_split_roundtrip(n, p, seed):
    rng = np.random.default_rng(seed)
    X, Xk, y = rng.normal(size=(n, p)), rng.normal(size=(n, p)), rng.normal(size=n)
    A = augment(X, Xk, y)
    assert A.A.shape[1] == 2 * p + 1
    X2, Xk2, y2 = A.split()
    np.testing.assert_array_equal(X2, X)
    np.testing.assert_array_equal(Xk2, Xk)
    np.testing.assert_array_equal(y2, y)


def test_augment_rejects_degenerate():
    with pytest.raises(DataError):
        augment(np.zeros((2, 0)), np.zeros((2, 0)), np.zeros(2))
    with pytest.raises(DataError):
        augment(np.zeros((2, 1)), np.zeros((3, 1)), np.zeros(2))
    with pytest.raises(DataError):
        sample_knockoffs(0, 2, DesignDistribution())
