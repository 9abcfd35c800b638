"""Scalar problems extracted from a matrix Hamiltonian system.

Two reductions are provided.

*Square-root route.* With ``F`` solving ``sqrt(B) F M = M`` for
``M = A sqrt(B) - sqrt(B)'``::

    A_F = F M,   C_B = sqrt(B) C sqrt(B),
    theta_j = Re c_B,jj + sum_{m != j} |a_F,mj|^2

and the scalar equation ``phi'' + 2 Re a_F,jj phi' - theta_j phi = 0``.
The sign in front of ``theta_j`` is the one under which the diagonal
Riccati identity for ``V = sqrt(B) Z sqrt(B)`` reduces to the Riccati
equation ``y' + y^2 + 2 Re a_F,jj y - theta_j = 0`` of this second-order
equation; with ``+theta_j`` the reduction would certify ``Phi'' = Phi``.

*Unitary route.* With ``B = U^* diag(b) U``::

    A0 = U (A U^* - (U^*)'),   C0 = U C U^*,
    chi_j = Re c0_jj + sum_{m != j} [|a0_mj|^2 / b_m]_0

where ``[.]_0`` is zero whenever ``b_m`` vanishes, and the 2x2 system
``phi' = 2 Re a0_jj phi + b_j psi``, ``psi' = chi_j phi``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional

import numpy as np

from .errors import NegativeEigenvalue, UnsolvableEq12
from .matfun import EigenPath, Eq12Solution, MatrixPath, path_derivative, pseudoinverse

GUARD_RTOL = 1e-12
NEG_EIG_TOL = 1e-10
CHI_JUMP_FACTOR = 1e3

ScalarFunc = Callable[[float], float]


def _zero(t: float) -> float:
    return 0.0


def _one(t: float) -> float:
    return 1.0


@dataclass
class ScalarSystem2x2:
    """``phi' = p11 phi + p12 psi``, ``psi' = p21 phi + p22 psi``."""

    p11: ScalarFunc
    p12: ScalarFunc
    p21: ScalarFunc
    p22: ScalarFunc
    label: str = ""

    def E(self, t: float) -> float:
        return self.p11(t) - self.p22(t)

    def rhs(self, t: float) -> np.ndarray:
        return np.array([[self.p11(t), self.p12(t)], [self.p21(t), self.p22(t)]])


def second_order_as_system(p: ScalarFunc, q: ScalarFunc, label: str = "") -> ScalarSystem2x2:
    """``phi'' + p phi' + q phi = 0`` as ``phi' = psi, psi' = -q phi - p psi``."""
    return ScalarSystem2x2(
        p11=_zero,
        p12=_one,
        p21=lambda t: -q(t),
        p22=lambda t: -p(t),
        label=label,
    )


# --------------------------------------------------------------------------
# square-root route
# --------------------------------------------------------------------------


class _SqrtFields:
    """Pointwise ``A_F`` and ``C_B``, memoized by ``t``."""

    def __init__(self, sys, sol: Eq12Solution):
        self.sys, self.sol = sys, sol
        self.at = lru_cache(maxsize=16384)(self._at)

    def _at(self, t: float):
        S = self.sol.sqrtB(t)
        dS = path_derivative(self.sol.sqrtB, t)
        A, _, C = self.sys.matrices(t)
        AF = pseudoinverse(S) @ (A @ S - dS)
        CB = S @ C @ S
        return AF, 0.5 * (CB + CB.conj().T)


@dataclass
class ReductionThm21:
    """Square-root reduction for index ``j`` (1-based)."""

    j: int
    grid: np.ndarray
    aFjj: np.ndarray
    theta: np.ndarray
    AF: MatrixPath
    CB: MatrixPath
    fields: _SqrtFields = field(repr=False)

    def a_jj(self, t: float) -> complex:
        return complex(self.fields.at(float(t))[0][self.j - 1, self.j - 1])

    def theta_at(self, t: float) -> float:
        AF, CB = self.fields.at(float(t))
        return _theta(AF, CB, self.j - 1)

    def damping(self, t: float) -> float:
        """Coefficient of ``phi'``: ``2 Re a_F,jj``."""
        return 2.0 * self.a_jj(t).real

    def stiffness(self, t: float) -> float:
        """Coefficient of ``phi``: ``-theta_j``."""
        return -self.theta_at(t)

    def as_scalar_system(self) -> ScalarSystem2x2:
        return second_order_as_system(self.damping, self.stiffness, label=f"sqrt-route j={self.j}")


def _theta(AF: np.ndarray, CB: np.ndarray, j: int) -> float:
    col = np.abs(np.delete(AF[:, j], j)) ** 2
    return float(CB[j, j].real + col.sum())


def reduce_thm21(sys, F: Eq12Solution, j: int, grid=None) -> ReductionThm21:
    """Square-root reduction of ``sys`` for index ``j`` (1-based).

    Raises
    ------
    UnsolvableEq12
        If ``F`` is not a solution at some grid sample.
    """
    if not 1 <= j <= sys.n:
        raise ValueError(f"j must be in 1..{sys.n}")
    if not F.all_solvable:
        raise UnsolvableEq12(f"no solution of sqrt(B) X M = M at t={F.first_unsolvable():.6g}")
    grid = F.grid if grid is None else np.asarray(grid, dtype=float)
    fields = getattr(F, "_fields", None)
    if fields is None or fields.sys is not sys:
        fields = _SqrtFields(sys, F)
        F._fields = fields
    AFs, CBs = zip(*(fields.at(float(t)) for t in grid))
    AFs, CBs = np.array(AFs), np.array(CBs)
    k = j - 1
    return ReductionThm21(
        j=j,
        grid=grid,
        aFjj=AFs[:, k, k].copy(),
        theta=np.array([_theta(a, c, k) for a, c in zip(AFs, CBs)]),
        AF=MatrixPath(grid, AFs, func=lambda t: fields.at(float(t))[0], domain=F.sqrtB.domain),
        CB=MatrixPath(grid, CBs, func=lambda t: fields.at(float(t))[1], domain=F.sqrtB.domain),
        fields=fields,
    )


# --------------------------------------------------------------------------
# unitary route
# --------------------------------------------------------------------------


class _UnitaryFields:
    """Pointwise ``U``, ``b``, ``A0``, ``C0`` and guard mask, memoized by ``t``."""

    def __init__(self, sys, ep: EigenPath):
        self.sys, self.ep = sys, ep
        self.at = lru_cache(maxsize=16384)(self._at)

    def _at(self, t: float):
        U, b = self.ep.decompose(t)
        A, B, C = self.sys.matrices(t)
        scale = max(1.0, float(np.linalg.norm(B, 2)))
        if np.min(b) < -NEG_EIG_TOL * scale:
            raise NegativeEigenvalue(f"eigenvalue {np.min(b):.3e} of B < 0 at t={t:.6g}")
        b = np.clip(b, 0.0, None)
        dUh = path_derivative(self.ep.U, t).conj().T
        Uh = U.conj().T
        A0 = U @ (A @ Uh - dUh)
        C0 = U @ C @ Uh
        guard = np.abs(b) <= GUARD_RTOL * scale
        return U, b, A0, 0.5 * (C0 + C0.conj().T), guard


def _chi(A0: np.ndarray, C0: np.ndarray, b: np.ndarray, guard: np.ndarray, j: int) -> float:
    total = C0[j, j].real
    for m in range(len(b)):
        if m != j and not guard[m]:
            total += abs(A0[m, j]) ** 2 / b[m]
    return float(total)


@dataclass
class ReductionThm23:
    """Unitary reduction for index ``j`` (1-based).

    ``guard_active[k, m]`` records whether the bracket ``[.]_0`` for branch
    ``m`` was switched off at ``grid[k]``. ``chi_jump`` is the largest change
    of ``chi_j`` between neighbouring samples; the reduction is certifiable
    only when it stays within ``chi_jump_limit``.
    """

    j: int
    grid: np.ndarray
    ajj0: np.ndarray
    bj: np.ndarray
    chi: np.ndarray
    AB0: MatrixPath
    CB0: MatrixPath
    b: np.ndarray
    guard_active: np.ndarray
    chi_jump: float
    chi_jump_limit: float
    fields: _UnitaryFields = field(repr=False)

    @property
    def certifiable(self) -> bool:
        return self.chi_jump <= self.chi_jump_limit

    def guard_fraction(self) -> dict:
        """Fraction of samples where the bracket for branch ``m`` (1-based) is off."""
        return {
            m + 1: float(np.mean(self.guard_active[:, m]))
            for m in range(self.guard_active.shape[1])
            if m != self.j - 1
        }

    def a_jj(self, t: float) -> complex:
        return complex(self.fields.at(float(t))[2][self.j - 1, self.j - 1])

    def b_j(self, t: float) -> float:
        return float(self.fields.at(float(t))[1][self.j - 1])

    def chi_at(self, t: float) -> float:
        _, b, A0, C0, guard = self.fields.at(float(t))
        return _chi(A0, C0, b, guard, self.j - 1)


def reduce_thm23(sys, ep: EigenPath, j: int, grid=None, jump_limit: Optional[float] = None) -> ReductionThm23:
    """Unitary reduction of ``sys`` for index ``j`` (1-based).

    Raises
    ------
    NegativeEigenvalue
        If some ``b_m(t) < -1e-10 * max(1, ||B(t)||)``.
    """
    if not 1 <= j <= sys.n:
        raise ValueError(f"j must be in 1..{sys.n}")
    grid = ep.grid if grid is None else np.asarray(grid, dtype=float)
    fields = getattr(ep, "_fields", None)
    if fields is None or fields.sys is not sys:
        fields = _UnitaryFields(sys, ep)
        ep._fields = fields
    rows = [fields.at(float(t)) for t in grid]
    k = j - 1
    bs = np.array([r[1] for r in rows])
    A0s = np.array([r[2] for r in rows])
    C0s = np.array([r[3] for r in rows])
    guards = np.array([r[4] for r in rows])
    chi = np.array([_chi(r[2], r[3], r[1], r[4], k) for r in rows])
    jump = float(np.max(np.abs(np.diff(chi)))) if chi.size > 1 else 0.0
    if jump_limit is None:
        step = float(np.max(np.diff(grid))) if grid.size > 1 else 1.0
        jump_limit = CHI_JUMP_FACTOR * step
    return ReductionThm23(
        j=j,
        grid=grid,
        ajj0=A0s[:, k, k].copy(),
        bj=bs[:, k].copy(),
        chi=chi,
        AB0=MatrixPath(grid, A0s, func=lambda t: fields.at(float(t))[2], domain=ep.U.domain),
        CB0=MatrixPath(grid, C0s, func=lambda t: fields.at(float(t))[3], domain=ep.U.domain),
        b=bs,
        guard_active=guards,
        chi_jump=jump,
        chi_jump_limit=float(jump_limit),
        fields=fields,
    )


def as_scalar_system(r: ReductionThm23) -> ScalarSystem2x2:
    """``p11 = 2 Re a0_jj``, ``p12 = b_j``, ``p21 = chi_j``, ``p22 = 0``."""
    return ScalarSystem2x2(
        p11=lambda t: 2.0 * r.a_jj(t).real,
        p12=r.b_j,
        p21=r.chi_at,
        p22=_zero,
        label=f"unitary-route j={r.j}",
    )
