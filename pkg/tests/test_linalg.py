import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from clfcbf import linalg
from clfcbf.errors import RetractionError

finite = st.floats(-50, 50, allow_nan=False)


def test_scaled_projection_examples():
    np.testing.assert_array_equal(linalg.scaled_projection([1.0, 0.0]), [[0, 0], [0, 1]])
    np.testing.assert_array_equal(linalg.scaled_projection([3.0, 4.0]), [[16, -12], [-12, 9]])
    np.testing.assert_array_equal(linalg.scaled_projection([0.0, 0.0, 0.0]), np.zeros((3, 3)))


@given(st.lists(finite, min_size=2, max_size=3))
def test_projection_annihilates_v(v):
    v = np.array(v)
    P = linalg.scaled_projection(v)
    assert np.allclose(P, P.T)
    assert np.linalg.norm(P @ v) <= 1e-9 * (1 + np.dot(v, v) * np.linalg.norm(v))


@pytest.mark.parametrize("n", [2, 3])
def test_projection_properties_batch(n, rng):
    # eigenvalues {0, |v|^2 x (n-1)}, P^2 = |v|^2 P, P z = |v|^2 z for z ⟂ v
    for _ in range(1000):
        v = rng.normal(size=n)
        P = linalg.scaled_projection(v)
        nv = float(v @ v)
        eig = np.sort(np.linalg.eigvalsh(P))
        expected = np.array([0.0] + [nv] * (n - 1))
        assert np.max(np.abs(eig - expected)) <= 1e-10 * max(1.0, nv)
        assert np.max(np.abs(P @ P - nv * P)) <= 1e-10 * max(1.0, nv * nv)
        z = rng.normal(size=n)
        z -= (z @ v) / nv * v
        assert np.max(np.abs(P @ z - nv * z)) <= 1e-10 * max(1.0, nv)
        # positive semidefinite and kills v
        assert eig[0] >= -1e-10 * max(1.0, nv)
        assert np.max(np.abs(P @ v)) <= 1e-10 * max(1.0, nv)


def test_skew_examples():
    np.testing.assert_array_equal(linalg.skew([0.0]), np.zeros((2, 2)))
    np.testing.assert_array_equal(linalg.skew([1.0]), [[0, -1], [1, 0]])
    e1 = linalg.skew([1.0, 0.0, 0.0])
    np.testing.assert_array_equal(e1 @ np.array([0.0, 1.0, 0.0]), np.cross([1, 0, 0], [0, 1, 0]))


@given(st.lists(finite, min_size=3, max_size=3), st.lists(finite, min_size=3, max_size=3))
def test_skew_is_cross_product(w, x):
    w, x = np.array(w), np.array(x)
    M = linalg.skew(w, 3)
    np.testing.assert_allclose(M, -M.T)
    np.testing.assert_allclose(M @ x, np.cross(w, x), atol=1e-9)


def test_o_n_examples():
    np.testing.assert_array_equal(linalg.o_n([2.0, 5.0]), [[-5.0], [2.0]])
    x = np.array([1.0, -2.0, 0.5])
    np.testing.assert_array_equal(linalg.o_n(x), -linalg.skew(x, 3))
    np.testing.assert_array_equal(linalg.o_n(np.zeros(2)), np.zeros((2, 1)))


@pytest.mark.parametrize("n", [2, 3])
def test_skew_o_n_identity(n, rng):
    k = linalg.so_dim(n)
    for _ in range(1000):
        w = rng.normal(size=k)
        x = rng.normal(size=n)
        assert np.max(np.abs(linalg.skew(w, n) @ x - linalg.o_n(x) @ w)) <= 1e-12


def test_so_dim_rejects_other_n():
    with pytest.raises(ValueError):
        linalg.so_dim(4)


def test_rotation_exp_examples():
    np.testing.assert_array_equal(linalg.rotation_exp([0.0]), np.eye(2))
    np.testing.assert_allclose(linalg.rotation_exp([1.0], math.pi / 2), [[0, -1], [1, 0]], atol=1e-15)
    R = linalg.rotation_exp([0.0, 0.0, 1.0], math.pi)
    np.testing.assert_allclose(R, np.diag([-1.0, -1.0, 1.0]), atol=1e-15)
    np.testing.assert_array_equal(linalg.rotation_exp(np.zeros(3)), np.eye(3))


@pytest.mark.parametrize("k", [1, 3])
def test_rotation_exp_is_rotation(k, rng):
    for _ in range(1000):
        R = linalg.rotation_exp(rng.normal(size=k) * 3, rng.uniform(0, 1))
        assert linalg.orthogonality_drift(R) <= 1e-9
        assert abs(np.linalg.det(R) - 1.0) <= 1e-9


def test_rotation_exp_small_angle_branch():
    w = np.array([1e-10, -2e-10, 3e-10])
    R = linalg.rotation_exp(w)
    np.testing.assert_allclose(R, np.eye(3) + linalg.skew(w, 3), atol=1e-18)


def test_rotation_exp_matches_series():
    w = np.array([0.3, -0.2, 0.4])
    K = linalg.skew(w, 3)
    series = np.eye(3)
    term = np.eye(3)
    for j in range(1, 30):
        term = term @ K / j
        series = series + term
    np.testing.assert_allclose(linalg.rotation_exp(w), series, atol=1e-14)


def test_retract_identity_and_rotation():
    np.testing.assert_array_equal(linalg.rotation_retract(np.eye(2)), np.eye(2))
    R = linalg.rotation_exp([0.3, -1.2, 0.7])
    np.testing.assert_allclose(linalg.rotation_retract(R), R, atol=1e-12)


def _newton_polar(A, iters=30):
    # SVD-free oracle: X <- (X + X^-T) / 2 converges to the polar factor
    X = A.copy()
    for _ in range(iters):
        X = 0.5 * (X + np.linalg.inv(X).T)
    return X


def test_retract_symmetric_perturbation(rng):
    S = rng.normal(size=(3, 3))
    A = np.eye(3) + 1e-6 * (S + S.T)
    Q = linalg.rotation_retract(A)
    assert linalg.orthogonality_drift(Q) <= 1e-12
    np.testing.assert_allclose(Q, _newton_polar(A), atol=1e-13)


def test_retract_matches_newton_polar(rng):
    R = linalg.rotation_exp(rng.normal(size=3))
    A = R + 0.05 * rng.normal(size=(3, 3))
    np.testing.assert_allclose(linalg.rotation_retract(A), _newton_polar(A), atol=1e-12)


def test_retract_rejects_reflection_and_nan():
    with pytest.raises(RetractionError):
        linalg.rotation_retract(np.diag([1.0, -1.0]))
    with pytest.raises(RetractionError):
        linalg.rotation_retract(np.array([[np.nan, 0.0], [0.0, 1.0]]))
