from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hamosc.errors import GridTooCoarse, NotPositiveSemidefinite, OutOfDomain
from hamosc.matfun import (
    MatrixPath,
    eigen_path,
    hermitian_sqrt,
    path_derivative,
    pseudoinverse,
    solve_eq12,
    sqrt_path,
)


def random_unitary(rng, n):
    Z = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    Q, R = np.linalg.qr(Z)
    return Q * (np.diag(R) / np.abs(np.diag(R)))


def rotation(t):
    c, s = np.cos(t), np.sin(t)
    return np.array([[c, -s], [s, c]])


# -- square root ----------------------------------------------------------


def test_sqrt_identity_and_diagonal():
    assert np.allclose(hermitian_sqrt(np.eye(3)), np.eye(3), atol=1e-15)
    assert np.allclose(hermitian_sqrt(np.diag([4.0, 0.0])), np.diag([2.0, 0.0]), atol=1e-15)


@pytest.mark.parametrize("seed", range(5))
def test_sqrt_matches_hand_composed_factorization(seed):
    rng = np.random.default_rng(seed)
    Q = random_unitary(rng, 3)
    w = rng.uniform(0.0, 4.0, size=3)
    singular = seed % 2 == 0
    if singular:
        w[seed % 3] = 0.0
    B = Q @ np.diag(w) @ Q.conj().T
    expected = Q @ np.diag(np.sqrt(w)) @ Q.conj().T
    S = hermitian_sqrt(B)
    # a rounding-level eigenvalue eps near 0 moves sqrt by sqrt(eps)
    tol = 1e-7 if singular else 1e-10 * max(1.0, np.linalg.norm(B)) / np.sqrt(w.min())
    assert np.linalg.norm(S - expected) <= tol
    assert np.linalg.norm(S @ S - B) <= 1e-10 * max(1.0, np.linalg.norm(B))
    assert np.linalg.norm(S @ B - B @ S) <= 1e-9 * np.linalg.norm(B)
    assert np.all(np.linalg.eigvalsh(S) >= -1e-12)


def test_sqrt_of_gram_matrix():
    rng = np.random.default_rng(7)
    A = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
    B = A.conj().T @ A
    S = hermitian_sqrt(B)
    assert np.linalg.norm(S @ S - B) <= 1e-10 * np.linalg.norm(B)


def test_sqrt_clamps_tiny_negative_and_rejects_negative():
    S = hermitian_sqrt(np.diag([1.0, -1e-12]))
    assert S[1, 1] == 0.0
    with pytest.raises(NotPositiveSemidefinite):
        hermitian_sqrt(np.diag([1.0, -1e-3]))


# -- pseudoinverse ----------------------------------------------------------


def penrose_defects(M, P):
    return (
        np.linalg.norm(M @ P @ M - M),
        np.linalg.norm(P @ M @ P - P),
        np.linalg.norm((M @ P).conj().T - M @ P),
        np.linalg.norm((P @ M).conj().T - P @ M),
    )


def test_pinv_examples():
    assert np.allclose(pseudoinverse(np.eye(2)), np.eye(2))
    assert np.allclose(pseudoinverse(np.diag([2.0, 0.0])), np.diag([0.5, 0.0]))
    assert not pseudoinverse(np.zeros((2, 2))).any()


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 3))
def test_pinv_penrose_identities(seed, rank):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((3, rank)) + 1j * rng.standard_normal((3, rank))
    Y = rng.standard_normal((rank, 3)) + 1j * rng.standard_normal((rank, 3))
    M = X @ Y
    P = pseudoinverse(M)
    assert max(penrose_defects(M, P)) <= 1e-9 * max(1.0, np.linalg.norm(M)) * max(1.0, np.linalg.norm(P))


# -- path derivatives -------------------------------------------------------


def test_derivative_constant_path():
    grid = np.linspace(0, 2, 5)
    P = MatrixPath.sample(lambda t: np.eye(2), grid)
    assert not path_derivative(P, 1.0).any()


def test_derivative_quadratic_entry():
    P = MatrixPath.sample(lambda t: np.diag([t * t, 1.0]), np.linspace(0, 2, 5))
    assert np.allclose(path_derivative(P, 1.0), np.diag([2.0, 0.0]), atol=1e-6)


@pytest.mark.parametrize("rule", ["central", "daleckii-krein"])
def test_derivative_of_sqrt(rule):
    S = sqrt_path(lambda t: np.diag([t, t]), np.linspace(0.5, 2, 5), derivative=rule)
    assert np.allclose(path_derivative(S, 1.0), np.diag([0.5, 0.5]), atol=1e-6)


def test_daleckii_krein_matches_central_on_rotating_matrix():
    B = lambda t: rotation(t) @ np.diag([1.0 + t, 3.0]) @ rotation(t).T  # noqa: E731
    grid = np.linspace(0, 1, 9)
    dk = path_derivative(sqrt_path(B, grid, derivative="daleckii-krein"), 0.4)
    cd = path_derivative(sqrt_path(B, grid), 0.4)
    assert np.linalg.norm(dk - cd) < 1e-7


def test_daleckii_krein_on_singular_path_has_zero_kernel_block():
    S = sqrt_path(lambda t: np.diag([1.0 + t, 0.0]), np.linspace(0, 1, 5), derivative="daleckii-krein")
    D = path_derivative(S, 0.5)
    assert abs(D[0, 0] - 0.5 / np.sqrt(1.5)) < 1e-8
    assert D[1, 1] == 0.0


def test_derivative_out_of_domain():
    P = MatrixPath.sample(lambda t: np.eye(1) * t, np.linspace(0, 1, 3))
    with pytest.raises(OutOfDomain):
        path_derivative(P, 0.0)
    P = MatrixPath.sample(lambda t: np.eye(1) * t, np.linspace(0, 1, 3), domain=(-0.1, 1.1))
    assert np.allclose(path_derivative(P, 0.0), 1.0)


def test_interpolated_path_without_evaluator():
    grid = np.linspace(0, 1, 41)
    vals = np.array([np.diag([np.sin(t), np.cos(t)]) for t in grid])
    P = MatrixPath(grid, vals)
    assert P.interpolated
    assert np.allclose(P(0.333), np.diag([np.sin(0.333), np.cos(0.333)]), atol=1e-7)


# -- eigen paths ------------------------------------------------------------


def eigen_invariants(ep, B):
    for t, U, b in zip(ep.grid, ep.U.values, ep.b):
        assert np.linalg.norm(U @ U.conj().T - np.eye(U.shape[0])) <= 1e-10
        Bt = B(t)
        assert np.linalg.norm(U.conj().T @ np.diag(b) @ U - Bt) <= 1e-10 * max(1.0, np.linalg.norm(Bt))


def test_eigen_path_of_diagonal_is_identity():
    B = lambda t: np.diag([1.0 + t, 2.0 - t])  # noqa: E731  (branches cross at t = 0.5)
    ep = eigen_path(B, np.linspace(0, 1, 101))
    assert np.allclose(ep.U.values, np.eye(2))
    assert np.allclose(ep.b[:, 0], 1.0 + ep.grid) and np.allclose(ep.b[:, 1], 2.0 - ep.grid)
    assert ep.continuity_defect == 0.0


def test_eigen_path_degenerate_identity():
    ep = eigen_path(lambda t: np.eye(3), np.linspace(0, 1, 5))
    assert np.allclose(ep.U.values, np.eye(3))


def test_eigen_path_constant_matrix_gives_constant_U():
    rng = np.random.default_rng(3)
    Q = random_unitary(rng, 3)
    B0 = Q @ np.diag([1.0, 2.0, 5.0]) @ Q.conj().T
    ep = eigen_path(lambda t: B0, np.linspace(0, 1, 11))
    assert np.allclose(ep.U.values, ep.U.values[0], atol=1e-12)
    eigen_invariants(ep, lambda t: B0)


def test_eigen_path_rotation():
    B = lambda t: rotation(t) @ np.diag([1.0, 2.0]) @ rotation(t).T  # noqa: E731
    defects = []
    for N in (50, 200, 800):
        ep = eigen_path(B, np.linspace(0, 3, N))
        assert np.allclose(ep.b, [1.0, 2.0], atol=1e-12)
        eigen_invariants(ep, B)
        defects.append(ep.continuity_defect)
    assert defects[0] > defects[1] > defects[2]
    assert defects[2] < 0.01


def test_eigen_path_too_coarse():
    B = lambda t: rotation(t) @ np.diag([1.0, 2.0]) @ rotation(t).T  # noqa: E731
    with pytest.raises(GridTooCoarse):
        eigen_path(B, np.linspace(0, 3, 4))


def test_eigen_path_off_grid_decomposition_is_continuous():
    B = lambda t: rotation(t) @ np.diag([1.0, 2.0]) @ rotation(t).T  # noqa: E731
    ep = eigen_path(B, np.linspace(0, 3, 301), domain=(-0.01, 3.01))
    U1, b1 = ep.decompose(1.2345)
    assert np.allclose(U1.conj().T @ np.diag(b1) @ U1, B(1.2345), atol=1e-12)
    dU = path_derivative(ep.U, 1.2345)
    # U = R(t)^T up to fixed phases, so ||U'|| = ||R'|| = sqrt(2)
    assert abs(np.linalg.norm(dU) - np.sqrt(2.0)) < 1e-6


# -- sqrt(B) X M = M ------------------------------------------------------


def test_eq12_identity_B():
    A = lambda t: np.array([[0.0, 1.0], [2.0, 3.0]])  # noqa: E731
    sol = solve_eq12(A, lambda t: np.eye(2), np.linspace(0, 1, 11), domain=(-0.1, 1.1))
    assert sol.all_solvable
    assert np.allclose(sol.F.values, np.eye(2))


def test_eq12_singular_B_zero_A_solvable():
    sol = solve_eq12(lambda t: np.zeros((2, 2)), lambda t: np.diag([1.0, 0.0]), np.linspace(0, 1, 11),
                     domain=(-0.1, 1.1))
    assert sol.all_solvable
    assert np.allclose(sol.F.values, np.diag([1.0, 0.0]))


def test_eq12_counterexample_unsolvable():
    # M = A sqrt(B) = [[0, 0], [1, 0]] has its column outside range(sqrt(B)) = span(e1)
    A = lambda t: np.array([[0.0, 0.0], [1.0, 0.0]])  # noqa: E731
    sol = solve_eq12(A, lambda t: np.diag([1.0, 0.0]), np.linspace(0, 1, 11), domain=(-0.1, 1.1))
    assert not sol.solvable.any()
    assert sol.first_unsolvable() == 0.0
    assert np.allclose(sol.residual, 1.0)


@pytest.mark.parametrize("seed", range(4))
def test_eq12_invertible_B_gives_inverse_sqrt(seed):
    rng = np.random.default_rng(seed)
    Q = random_unitary(rng, 3)
    A0 = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))

    def B(t):
        w = np.array([1.0 + 0.5 * np.sin(t), 2.0, 3.0 + t])
        return Q @ np.diag(w) @ Q.conj().T

    grid = np.linspace(0, 2, 21)
    sol = solve_eq12(lambda t: A0, B, grid, domain=(-0.1, 2.1))
    assert sol.all_solvable
    for k, t in enumerate(grid):
        assert sol.residual[k] <= 1e-10 * max(1.0, sol.M_norm[k])
        inv_sqrt = np.linalg.inv(hermitian_sqrt(B(t)))
        assert np.linalg.norm(sol.F.values[k] - inv_sqrt) <= 1e-8
