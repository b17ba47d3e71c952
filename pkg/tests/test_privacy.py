import io
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from dpknockoffs.knockoff import augment
from dpknockoffs.privacy import (
    PrivacyBudget, PrivatizedData, RowNormError, compute_w, gaussian_noise_sigma,
    gaussian_privatize_moments, jlt_privatize,
)

# Independent scalar evaluations (log(4/0.01) = log 400, log(1.25/0.01) = log 125).
W2_B1_EPS1_R1500 = 560.2403198786966
SIGMA_NOISE_B1_EPS02 = 21.973424260461318


def _data(n=60, p=3, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.choice([-1.0, 1.0], size=(n, p))
    Xk = rng.choice([-1.0, 1.0], size=(n, p))
    y = X[:, 0] + rng.normal(size=n)
    return augment(X, Xk, y)


def test_compute_w_example():
    assert compute_w(1.0, 1.0, 0.01, 1500) ** 2 == pytest.approx(W2_B1_EPS1_R1500, rel=1e-12)


def test_compute_w_scaling():
    assert compute_w(1.0, 1e12, 0.01, 10) < 1e-4
    w1, w2 = compute_w(1.0, 2.0, 0.05, 40), compute_w(2.0, 2.0, 0.05, 40)
    assert w2**2 == pytest.approx(4 * w1**2)


@pytest.mark.parametrize("eps,delta", [(0.0, 0.01), (1.0, 0.0), (1.0, 0.5)])
def test_budget_validation(eps, delta):
    with pytest.raises(ValueError):
        PrivacyBudget(eps, delta)


def test_release_shape_and_params():
    A = _data()
    priv = jlt_privatize(A, PrivacyBudget(1.0, 0.01), 25, seed=1, B=10.0)
    assert priv.Astar.shape == (25, 7)
    assert priv.params.w == pytest.approx(compute_w(10.0, 1.0, 0.01, 25))


def test_identity_projection_pads():
    A = _data(n=8, p=2)
    r = 8 + 5
    priv = jlt_privatize(A, PrivacyBudget(1.0, 0.01), r, B=10.0, w=0.0, projection=np.eye(r))
    np.testing.assert_array_equal(priv.Astar[:8], A.A)
    np.testing.assert_array_equal(priv.Astar[8:], 0.0)


def test_full_projection_matches_explicit_product():
    A = _data(n=700, p=2)
    priv = jlt_privatize(A, PrivacyBudget(2.0, 0.01), 30, seed=3, B=10.0, keep="full")
    stacked = np.vstack([A.A, priv.w * np.eye(5)])
    np.testing.assert_allclose(priv.Astar, priv.R @ stacked, atol=1e-10)
    ident = jlt_privatize(A, PrivacyBudget(2.0, 0.01), 30, seed=3, B=10.0, keep="identity")
    np.testing.assert_array_equal(ident.R_aug, priv.R[:, 700:])
    assert priv.R.shape == (30, 705)


@given(st.integers(1, 400), st.integers(0, 50))
def test_release_independent_of_chunking(block, seed):
    A = _data(n=600, p=2, seed=seed)
    budget = PrivacyBudget(1.0, 0.01)
    ref = jlt_privatize(A, budget, 12, seed=seed, B=10.0)
    blocks = (A.A[i : i + block] for i in range(0, 600, block))
    other = jlt_privatize(blocks, budget, 12, seed=seed, B=10.0)
    np.testing.assert_array_equal(ref.Astar, other.Astar)


def test_row_norm_violation_names_row():
    A = _data(n=10, p=1)
    with pytest.raises(RowNormError) as err:
        jlt_privatize(A, PrivacyBudget(1.0, 0.01), 5, seed=0, B=0.5)
    assert err.value.row == 0


def test_sketch_second_moment_expectation():
    n, p, r, w = 200, 5, 100, 10.0
    acc = np.zeros((p, p))
    for seed in range(200):
        rng = np.random.default_rng(1000 + seed)
        X = rng.choice([-1.0, 1.0], size=(n, p))
        A = augment(X, rng.choice([-1.0, 1.0], size=(n, p)), np.zeros(n))
        priv = jlt_privatize(A, PrivacyBudget(1.0, 0.01), r, seed=seed, B=10.0, w=w)
        acc += priv.Xstar.T @ priv.Xstar / n
    acc /= 200
    target = (1 + w * w / n) * np.eye(p)
    assert np.max(np.abs(acc - target)) <= 0.1


@given(st.integers(0, 10_000))
def test_sketch_gram_is_psd(seed):
    A = _data(n=50, p=4, seed=seed)
    priv = jlt_privatize(A, PrivacyBudget(0.5, 0.01), 6, seed=seed, B=10.0)
    G = priv.gram()
    np.testing.assert_array_equal(G, G.T)
    assert np.linalg.eigvalsh(G)[0] >= -1e-10 * max(1.0, np.abs(G).max())


def test_dump_roundtrip(tmp_path):
    priv = jlt_privatize(_data(), PrivacyBudget(1.0, 0.01), 9, seed=2, B=10.0)
    path = tmp_path / "release.bin"
    priv.dump(path)
    back = PrivatizedData.load(path)
    np.testing.assert_array_equal(back.Astar, priv.Astar)
    assert back.params == priv.params and back.n == priv.n and back.p == priv.p
    data = path.read_bytes()
    with pytest.raises(ValueError, match="magic"):
        PrivatizedData.from_bytes(b"XXXXXXXX" + data[8:])
    with pytest.raises(ValueError):
        PrivatizedData.from_bytes(data[:-8])


def test_csv_export_header():
    priv = jlt_privatize(_data(p=2), PrivacyBudget(1.0, 0.01), 4, seed=2, B=10.0)
    text = priv.to_csv()
    assert text.splitlines()[0] == "x1,x2,xk1,xk2,y"
    back = np.loadtxt(io.StringIO(text), delimiter=",", skiprows=1)
    np.testing.assert_array_equal(back, priv.Astar)


def test_gaussian_noise_sigma():
    assert gaussian_noise_sigma(1.0, 0.2, 0.01) == pytest.approx(SIGMA_NOISE_B1_EPS02, rel=1e-12)
    assert gaussian_noise_sigma(1.0, 0.4, 0.01) == pytest.approx(SIGMA_NOISE_B1_EPS02 / 2)
    assert gaussian_noise_sigma(0.0, 0.2, 0.01) == 0.0


def test_moments_symmetric_and_exact_without_noise():
    A = _data(n=40, p=3)
    mom = gaussian_privatize_moments(A, PrivacyBudget(1.0, 0.01), seed=1, B=10.0)
    np.testing.assert_array_equal(mom.G, mom.G.T)
    exact = gaussian_privatize_moments(A, PrivacyBudget(1.0, 0.01), seed=1, B=10.0, sigma_noise=0.0)
    F = A.features
    np.testing.assert_allclose(exact.G, F.T @ F, atol=1e-12)
    np.testing.assert_allclose(exact.c, F.T @ A.y, atol=1e-12)
    assert exact.yy == pytest.approx(A.y @ A.y)


def collinear_data(seed, n=200, p=5, rank=3, smin=1e-4):
    """Rank-deficient [X Xk y]: all but ``rank`` singular values set to ``smin``."""
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(n, 2 * p + 1))
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    s[rank:] = smin
    A = (U * s) @ Vt
    return A / np.max(np.linalg.norm(A, axis=1))


def test_gaussian_mechanism_breaks_psd_on_collinear_design():
    neg = 0
    for seed in range(100):
        A = collinear_data(seed)
        mom = gaussian_privatize_moments(A, PrivacyBudget(1.0, 0.01), seed=seed, B=1.0, sigma_noise=1.0)
        neg += mom.min_eigenvalue() < 0
    assert neg >= 95
