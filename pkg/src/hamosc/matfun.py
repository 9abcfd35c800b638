"""Hermitian matrix calculus on time grids.

Square roots and pseudoinverses of nonnegative definite matrices, matrix
paths with finite-difference or Daleckii-Krein derivatives, continuously
tracked unitary eigen-decompositions ``B(t) = U(t)^* diag(b(t)) U(t)``, and a
pointwise solver for ``sqrt(B) X M = M`` with ``M = A sqrt(B) - sqrt(B)'``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import GridTooCoarse, NotPositiveSemidefinite, OutOfDomain

MatrixFunc = Callable[[float], np.ndarray]

PSD_TOL = 1e-10
PINV_RTOL = 1e-12
EQ12_TOL = 1e-9
DEGENERATE_TOL = 1e-12
MAX_CONTINUITY_DEFECT = 0.5
_EPS = np.finfo(float).eps


def hermitian_part(M: np.ndarray) -> np.ndarray:
    return 0.5 * (M + M.conj().T)


def is_hermitian(M: np.ndarray, rtol: float = 1e-12) -> bool:
    M = np.asarray(M)
    return np.linalg.norm(M - M.conj().T) <= rtol * max(1.0, np.linalg.norm(M))


def hermitian_sqrt(B: np.ndarray, tol: float = PSD_TOL) -> np.ndarray:
    """Nonnegative square root of a nonnegative definite Hermitian matrix.

    Eigenvalues in ``[-tol*||B||, 0)`` are clamped to zero.

    Raises
    ------
    NotPositiveSemidefinite
        If an eigenvalue is below ``-tol*||B||``.
    """
    B = hermitian_part(np.asarray(B, dtype=complex))
    w, Q = np.linalg.eigh(B)
    scale = np.max(np.abs(w)) if w.size else 0.0
    if w.size and w[0] < -tol * scale:
        raise NotPositiveSemidefinite(
            f"eigenvalue {w[0]:.3e} below -{tol:g}*||B|| (||B||={scale:.3e})"
        )
    r = np.sqrt(np.clip(w, 0.0, None))
    return hermitian_part((Q * r) @ Q.conj().T)


def pseudoinverse(M: np.ndarray, rtol: float = PINV_RTOL) -> np.ndarray:
    """Moore-Penrose pseudoinverse via SVD.

    Singular values below ``rtol * sigma_max`` are treated as zero.
    """
    M = np.asarray(M, dtype=complex)
    U, s, Vh = np.linalg.svd(M, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros(M.T.shape, dtype=complex)
    keep = s > rtol * s[0]
    s_inv = np.zeros_like(s)
    s_inv[keep] = 1.0 / s[keep]
    return (Vh.conj().T * s_inv) @ U.conj().T


def fd_step(t: float) -> float:
    """Central-difference step ``max(1, |t|) * eps**(1/3)``."""
    return max(1.0, abs(t)) * _EPS ** (1.0 / 3.0)


@dataclass
class MatrixPath:
    """A matrix-valued function of ``t`` sampled on a grid.

    Parameters
    ----------
    grid : ndarray
        Strictly increasing sample times.
    values : ndarray, shape (N, n, n)
        Matrix at each grid time.
    func : callable, optional
        Exact evaluator ``t -> matrix``. When absent, :meth:`__call__` falls
        back to cubic interpolation of ``values`` and ``interpolated`` is set.
    domain : (float, float), optional
        Span on which the evaluator may be queried. Defaults to the grid span.
    spectral : (base, f, fprime), optional
        Declares the path as ``f(base(t))`` for a Hermitian-valued ``base``
        and scalar ``f``; :func:`path_derivative` then uses the
        Daleckii-Krein formula instead of differencing the path itself.
    """

    grid: np.ndarray
    values: np.ndarray
    func: Optional[MatrixFunc] = None
    domain: Optional[tuple] = None
    spectral: Optional[tuple] = None
    interpolated: bool = field(init=False, default=False)

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        self.values = np.asarray(self.values)
        if self.grid.ndim != 1 or self.grid.size < 1:
            raise ValueError("grid must be a non-empty 1-D array")
        if np.any(np.diff(self.grid) <= 0):
            raise ValueError("grid must be strictly increasing")
        if self.values.shape[0] != self.grid.size or self.values.ndim != 3:
            raise ValueError("values must have shape (len(grid), n, n)")
        if self.domain is None:
            self.domain = (float(self.grid[0]), float(self.grid[-1]))
        if self.func is None:
            self.interpolated = True
            re = CubicSpline(self.grid, self.values.real, axis=0)
            im = CubicSpline(self.grid, self.values.imag, axis=0)
            self.func = lambda t: re(t) + 1j * im(t)

    @classmethod
    def sample(cls, func: MatrixFunc, grid, domain=None, spectral=None) -> "MatrixPath":
        grid = np.asarray(grid, dtype=float)
        values = np.array([func(t) for t in grid])
        return cls(grid, values, func=func, domain=domain, spectral=spectral)

    @property
    def n(self) -> int:
        return self.values.shape[1]

    def __call__(self, t: float) -> np.ndarray:
        return self.func(t)

    def contains(self, t: float) -> bool:
        lo, hi = self.domain
        return lo <= t <= hi


def path_derivative(P: MatrixPath, t: float) -> np.ndarray:
    """Derivative of a matrix path at ``t``.

    Central difference with step :func:`fd_step`, or the Daleckii-Krein
    divided-difference formula when the path carries spectral metadata.
    Pairs of eigenvalues that are both (numerically) zero get a zero divided
    difference: for a nonnegative definite ``base`` the kernel block of
    ``Q^* base' Q`` vanishes wherever the kernel is attained.
    """
    h = fd_step(t)
    lo, hi = P.domain
    if t - h < lo or t + h > hi:
        raise OutOfDomain(f"t={t!r} with step {h:.2e} leaves the path domain [{lo}, {hi}]")
    if P.spectral is None:
        return (P(t + h) - P(t - h)) / (2.0 * h)

    base, f, fprime = P.spectral
    dbase = (base(t + h) - base(t - h)) / (2.0 * h)
    w, Q = np.linalg.eigh(hermitian_part(np.asarray(base(t), dtype=complex)))
    scale = max(1.0, float(np.max(np.abs(w))))
    wi, wj = np.meshgrid(w, w, indexing="ij")
    close = np.abs(wi - wj) <= DEGENERATE_TOL * scale
    with np.errstate(divide="ignore", invalid="ignore"):
        gamma = (f(wi) - f(wj)) / (wi - wj)
        zero_pair = close & (np.abs(wi) <= DEGENERATE_TOL * scale)
        gamma = np.where(close, fprime(np.where(zero_pair, 1.0, wi)), gamma)
    gamma = np.where(zero_pair, 0.0, gamma)
    inner = Q.conj().T @ dbase @ Q
    return Q @ (gamma * inner) @ Q.conj().T


def _sqrt_clamped(x):
    return np.sqrt(np.clip(x, 0.0, None))


def _sqrt_prime(x):
    return 0.5 / np.sqrt(x)


def sqrt_path(B: MatrixFunc, grid, domain=None, derivative: str = "central") -> MatrixPath:
    """Path of ``sqrt(B(t))``.

    ``derivative="daleckii-krein"`` makes :func:`path_derivative` use the
    spectral formula with ``B'`` obtained by central differences.
    """
    spectral = None
    if derivative == "daleckii-krein":
        spectral = (B, _sqrt_clamped, _sqrt_prime)
    elif derivative != "central":
        raise ValueError(f"unknown derivative rule {derivative!r}")
    return MatrixPath.sample(lambda t: hermitian_sqrt(B(t)), grid, domain, spectral)


# --------------------------------------------------------------------------
# Continuous eigen-decomposition
# --------------------------------------------------------------------------


def _match_columns(Q_ref: np.ndarray, Q_new: np.ndarray):
    """Greedy max-overlap assignment of new eigenvectors to reference ones.

    Returns ``perm`` with ``Q_new[:, perm[k]]`` matched to ``Q_ref[:, k]``.
    """
    overlap = np.abs(Q_ref.conj().T @ Q_new)
    n = overlap.shape[0]
    perm = np.full(n, -1)
    work = overlap.copy()
    for _ in range(n):
        k, m = np.unravel_index(np.argmax(work), work.shape)
        perm[k] = m
        work[k, :] = -1.0
        work[:, m] = -1.0
    return perm


def _fix_phases(Q_ref: np.ndarray, Q: np.ndarray) -> np.ndarray:
    Q = Q.copy()
    for k in range(Q.shape[1]):
        ov = np.vdot(Q_ref[:, k], Q[:, k])
        if abs(ov) > 1e-8:
            Q[:, k] *= np.conj(ov) / abs(ov)
        else:
            nz = np.flatnonzero(np.abs(Q[:, k]) > 1e-12)
            if nz.size:
                z = Q[nz[0], k]
                Q[:, k] *= np.conj(z) / abs(z)
    return Q


def _align_degenerate(Q_ref: np.ndarray, Q: np.ndarray, w: np.ndarray, scale: float) -> np.ndarray:
    # inside an exactly degenerate eigenspace any orthonormal basis is valid;
    # rotate it onto the reference (orthogonal Procrustes)
    n = len(w)
    Q = Q.copy()
    order = np.argsort(w)
    start = 0
    while start < n:
        stop = start + 1
        while stop < n and w[order[stop]] - w[order[start]] <= DEGENERATE_TOL * scale:
            stop += 1
        if stop - start > 1:
            idx = order[start:stop]
            M = Q[:, idx].conj().T @ Q_ref[:, idx]
            Uw, _, Vh = np.linalg.svd(M)
            Q[:, idx] = Q[:, idx] @ (Uw @ Vh)
        start = stop
    return Q


def aligned_eigh(Bt: np.ndarray, Q_ref: np.ndarray):
    """Eigen-decomposition of ``Bt`` ordered and phased to follow ``Q_ref``.

    Returns ``(b, Q)`` with ``Bt = Q diag(b) Q^*`` and columns of ``Q`` as
    close as possible to the columns of ``Q_ref``.
    """
    Bt = hermitian_part(np.asarray(Bt, dtype=complex))
    w, Q = np.linalg.eigh(Bt)
    perm = _match_columns(Q_ref, Q)
    w, Q = w[perm], Q[:, perm]
    scale = max(1.0, float(np.max(np.abs(w))))
    Q = _align_degenerate(Q_ref, Q, w, scale)
    Q = _fix_phases(Q_ref, Q)
    return w, Q


@dataclass
class EigenPath:
    """Tracked decomposition ``B(t) = U(t)^* diag(b(t)) U(t)``.

    ``U`` holds the unitary factor in the convention above (its rows are the
    conjugated eigenvectors); ``b[k]`` is the eigenvalue branch ``k`` at
    ``grid[k]``. Off-grid evaluation re-decomposes ``B(t)`` and aligns the
    result to the nearest grid sample.
    """

    B: MatrixFunc
    U: MatrixPath
    b: np.ndarray
    continuity_defect: float

    @property
    def grid(self) -> np.ndarray:
        return self.U.grid

    def decompose(self, t: float):
        """Return ``(U(t), b(t))``."""
        g = self.U.grid
        k = int(np.clip(np.searchsorted(g, t), 0, g.size - 1))
        if k > 0 and abs(g[k - 1] - t) <= abs(g[k] - t):
            k -= 1
        Q_ref = self.U.values[k].conj().T
        w, Q = aligned_eigh(self.B(t), Q_ref)
        return Q.conj().T, w

    def reconstruction_error(self) -> float:
        err = 0.0
        for t, U, b in zip(self.grid, self.U.values, self.b):
            Bt = np.asarray(self.B(t))
            R = U.conj().T @ np.diag(b) @ U
            err = max(err, np.linalg.norm(R - Bt) / max(1.0, np.linalg.norm(Bt)))
        return err


def eigen_path(B: MatrixFunc, grid, domain=None, max_defect: float = MAX_CONTINUITY_DEFECT) -> EigenPath:
    """Continuously tracked unitary diagonalization of ``B`` along ``grid``.

    The first sample is matched against the identity, so an already diagonal
    ``B`` yields ``U = I`` with ``b`` in the original diagonal order. Each
    following sample is matched to its predecessor by maximum overlap and
    phase-rotated so the overlaps are real and positive.

    Raises
    ------
    GridTooCoarse
        If ``max_k ||U(t_{k+1}) - U(t_k)||_F`` exceeds ``max_defect``.
    """
    grid = np.asarray(grid, dtype=float)
    B0 = np.asarray(B(grid[0]))
    Q_ref = np.eye(B0.shape[0], dtype=complex)
    Us, bs = [], []
    defect = 0.0
    for t in grid:
        w, Q = aligned_eigh(B(t), Q_ref)
        if Us:
            defect = max(defect, float(np.linalg.norm(Q.conj().T - Us[-1])))
        Us.append(Q.conj().T)
        bs.append(w)
        Q_ref = Q
    if defect > max_defect:
        raise GridTooCoarse(
            f"eigenvector continuity defect {defect:.3f} exceeds {max_defect}; refine the grid"
        )
    path = EigenPath(B=B, U=None, b=np.array(bs), continuity_defect=defect)
    path.U = MatrixPath(grid, np.array(Us), func=lambda t: path.decompose(t)[0], domain=domain)
    return path


# --------------------------------------------------------------------------
# sqrt(B) X M = M
# --------------------------------------------------------------------------


@dataclass
class Eq12Solution:
    """Pointwise solution of ``sqrt(B) X M = M`` with ``M = A sqrt(B) - sqrt(B)'``.

    ``F`` is the pseudoinverse of ``sqrt(B)`` and is meaningful only where
    ``solvable`` holds; ``residual`` is ``||sqrt(B) F M - M||_F``.
    """

    grid: np.ndarray
    solvable: np.ndarray
    residual: np.ndarray
    M_norm: np.ndarray
    F: MatrixPath
    sqrtB: MatrixPath
    A: MatrixFunc

    @property
    def all_solvable(self) -> bool:
        return bool(np.all(self.solvable))

    def first_unsolvable(self) -> Optional[float]:
        bad = np.flatnonzero(~self.solvable)
        return float(self.grid[bad[0]]) if bad.size else None

    def M(self, t: float) -> np.ndarray:
        S = self.sqrtB(t)
        return np.asarray(self.A(t)) @ S - path_derivative(self.sqrtB, t)


def solve_eq12(A: MatrixFunc, B: MatrixFunc, grid, domain=None, derivative: str = "central") -> Eq12Solution:
    """Solve the range condition of ``sqrt(B) X M = M`` on ``grid``.

    ``X = sqrt(B)^+`` solves the equation exactly when the columns of ``M``
    lie in the range of ``sqrt(B)``; for invertible ``B`` it is the inverse
    square root. Unsolvable samples are reported, not raised.
    """
    grid = np.asarray(grid, dtype=float)
    S = sqrt_path(B, grid, domain=domain, derivative=derivative)
    F = MatrixPath.sample(lambda t: pseudoinverse(S(t)), grid, domain=S.domain)
    res, mn, ok = [], [], []
    for k, t in enumerate(grid):
        St = S.values[k]
        M = np.asarray(A(t)) @ St - path_derivative(S, t)
        r = float(np.linalg.norm(St @ F.values[k] @ M - M))
        m = float(np.linalg.norm(M))
        res.append(r)
        mn.append(m)
        ok.append(r <= EQ12_TOL * max(1.0, m))
    return Eq12Solution(
        grid=grid,
        solvable=np.array(ok),
        residual=np.array(res),
        M_norm=np.array(mn),
        F=F,
        sqrtB=S,
        A=A,
    )
