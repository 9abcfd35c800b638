"""Sufficient oscillation criteria and their end-to-end pipelines.

Every criterion here is one-sided: it can establish oscillation, never rule
it out. Interval criteria (integral over a finite window compared with
``pi``) may return :attr:`Verdict.PROVEN`. Ray criteria require divergent
integrals, which no finite computation can establish, so they stop at
:attr:`Verdict.DIVERGENCE` with the staged integrals attached.

Identifiers:

=========  ==============================================================
thm3.3     window integral of ``min[p12 e^{-int E}, -p21 e^{int E}]``
thm3.2     both ray integrals ``int p12 e^{-int E}``, ``-int p21 e^{int E}``
cor2.2     diagonal ``B``, ``A = 0``: window integral of ``min[b_j, -c_jj]``
cor2.1     diagonal ``B``, ``A = 0``: ray integrals of ``b_j`` and ``-c_jj``
thm2.1/2   square-root reduction, then thm3.2 (ray) / thm3.3 (window)
thm2.3/4   unitary reduction, then thm3.2 (ray) / thm3.3 (window)
=========  ==============================================================
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import matfun
from .errors import (
    GridTooCoarse,
    NegativeEigenvalue,
    NotPositiveSemidefinite,
    OutOfDomain,
    PreconditionFailed,
    UnsolvableEq12,
)
from .quadrature import QUAD_TOL, CumulativeIntegral, integrate
from .reduction import ScalarSystem2x2, as_scalar_system, reduce_thm21, reduce_thm23

P12_TOL = 1e-12
DIAG_TOL = 1e-12
DEFAULT_GRID = 2048
DEFAULT_STAGES = 6
DEFAULT_THRESHOLD = 10.0
_EXP_CAP = 700.0

WINDOW_CRITERIA = ("thm2.2", "thm2.4", "cor2.2")
RAY_CRITERIA = ("thm2.1", "thm2.3", "cor2.1")
PROVABLE = frozenset({"thm3.3", "cor2.2", "thm2.2", "thm2.4"})


class Verdict(str, enum.Enum):
    PROVEN = "ProvenOscillatory"
    DIVERGENCE = "DivergenceEvidence"
    INCONCLUSIVE = "Inconclusive"


@dataclass(frozen=True)
class Window:
    a: float
    b: float

    def __post_init__(self):
        if not (math.isfinite(self.a) and math.isfinite(self.b)) or not self.a < self.b:
            raise ValueError(f"window needs finite a < b, got [{self.a}, {self.b}]")

    @property
    def length(self) -> float:
        return self.b - self.a


@dataclass
class CriterionReport:
    criterion: str
    j: Optional[int]
    verdict: Verdict
    margin: Optional[float]
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.verdict is Verdict.PROVEN and self.criterion not in PROVABLE:
            raise ValueError(f"{self.criterion} cannot prove oscillation")

    def to_dict(self) -> dict:
        return {
            "criterion": self.criterion,
            "j": self.j,
            "verdict": self.verdict.value,
            "margin": self.margin,
            "diagnostics": self.diagnostics,
        }


def _exp(x: float) -> float:
    return math.exp(min(x, _EXP_CAP))


class _Integrand:
    """Weighted branches of a 2x2 scalar system, with the ``p12 >= 0`` check."""

    def __init__(self, s: ScalarSystem2x2, a: float, b: float, label: str):
        self.s, self.label = s, label
        self.Eint = CumulativeIntegral(s.E, a, b)
        self.nodes = 0
        self.min_p12 = math.inf
        self.max_abs = 0.0

    def _p12(self, t: float) -> float:
        v = self.s.p12(t)
        self.nodes += 1
        self.min_p12 = min(self.min_p12, v)
        if v < -P12_TOL:
            raise PreconditionFailed(f"{self.label}: p12({t:.6g}) = {v:.3e} < 0")
        return v

    def first(self, t: float) -> float:
        v = self._p12(t) * _exp(-self.Eint(t))
        self.max_abs = max(self.max_abs, abs(v))
        return v

    def second(self, t: float) -> float:
        v = -self.s.p21(t) * _exp(self.Eint(t))
        self.max_abs = max(self.max_abs, abs(v))
        return v

    def minimum(self, t: float) -> float:
        p12 = self._p12(t)
        e = self.Eint(t)
        v = min(p12 * _exp(-e), -self.s.p21(t) * _exp(e))
        self.max_abs = max(self.max_abs, abs(v))
        return v


def _window_integral(s: ScalarSystem2x2, w: Window, label: str, tol: float):
    ig = _Integrand(s, w.a, w.b, label)
    ig._p12(w.a)
    ig._p12(w.b)
    res = integrate(ig.minimum, w.a, w.b, epsabs=tol)
    # first-order propagation of the error in int E through exp(+-int E)
    err = res.error + ig.Eint.error * ig.max_abs * w.length
    diag = {
        "window": [w.a, w.b],
        "integral": res.value,
        "error_bound": err,
        "threshold": math.pi,
        "quadrature_converged": res.converged,
        "E_identically_zero": ig.Eint.is_zero,
        "nodes": ig.nodes,
        "min_p12": ig.min_p12,
    }
    return res.value, err, diag


def check_thm33(s: ScalarSystem2x2, w: Window, tol: float = QUAD_TOL) -> CriterionReport:
    """Interval criterion for a 2x2 scalar system on ``w``.

    ``ProvenOscillatory`` iff the integral exceeds ``pi`` by more than its
    error bound; ``margin = integral - pi``.

    Raises
    ------
    PreconditionFailed
        If ``p12 < -1e-12`` at a quadrature node.
    """
    value, err, diag = _window_integral(s, w, "thm3.3", tol)
    margin = value - math.pi
    verdict = Verdict.PROVEN if margin > err else Verdict.INCONCLUSIVE
    if verdict is Verdict.INCONCLUSIVE:
        diag["reason"] = "integral within error of pi" if abs(margin) <= err else "integral below pi"
    return CriterionReport("thm3.3", None, verdict, margin, diag)


def checkpoints(start: float, horizon: float, stages: int) -> np.ndarray:
    """Geometrically spaced ``T_k = start + (horizon - start) 2^(k - stages)``."""
    if not horizon > start:
        raise ValueError("horizon must exceed the start time")
    if stages < 2:
        raise ValueError("need at least two stages")
    k = np.arange(1, stages + 1)
    return start + (horizon - start) * np.power(2.0, k - stages)


def check_thm32(s: ScalarSystem2x2, horizon: float, stages: int = DEFAULT_STAGES, start: float = 0.0,
                threshold: float = DEFAULT_THRESHOLD, tol: float = QUAD_TOL,
                criterion: str = "thm3.2") -> CriterionReport:
    """Staged evidence for divergence of both ray integrals.

    ``DivergenceEvidence`` iff both staged sequences increase strictly,
    exceed ``threshold`` at the last checkpoint and have positive last
    increments. Never returns ``ProvenOscillatory``.
    """
    T = checkpoints(start, horizon, stages)
    ig = _Integrand(s, start, horizon, criterion)
    ig._p12(start)
    I1, I2, err1, err2 = [], [], 0.0, 0.0
    left, c1, c2 = start, 0.0, 0.0
    for right in T:
        r1 = integrate(ig.first, left, right, epsabs=tol)
        r2 = integrate(ig.second, left, right, epsabs=tol)
        c1 += r1.value
        c2 += r2.value
        err1 += r1.error
        err2 += r2.error
        I1.append(c1)
        I2.append(c2)
        left = right
    I1, I2 = np.array(I1), np.array(I2)
    inc1, inc2 = np.diff(I1), np.diff(I2)
    increasing = bool(np.all(inc1 > 0) and np.all(inc2 > 0))
    large = bool(I1[-1] > threshold and I2[-1] > threshold)
    last_positive = bool(inc1[-1] > 0 and inc2[-1] > 0)
    verdict = Verdict.DIVERGENCE if (increasing and large and last_positive) else Verdict.INCONCLUSIVE
    diag = {
        "horizon": float(horizon),
        "start": float(start),
        "checkpoints": T.tolist(),
        "I1": I1.tolist(),
        "I2": I2.tolist(),
        "error_bound": [err1, err2],
        "threshold": threshold,
        "increasing": increasing,
        "exceeds_threshold": large,
        "E_identically_zero": ig.Eint.is_zero,
        "min_p12": ig.min_p12,
    }
    if verdict is Verdict.INCONCLUSIVE:
        diag["reason"] = "staged integrals do not show divergence"
    margin = float(min(I1[-1], I2[-1]) - threshold)
    return CriterionReport(criterion, None, verdict, margin, diag)


# --------------------------------------------------------------------------
# corollaries (diagonal B, A = 0)
# --------------------------------------------------------------------------


def _check_diagonal_system(sys, a: float, b: float, points: int = 256):
    grid = np.linspace(a, b, points)
    min_b = math.inf
    for t in grid:
        A, B, _ = sys.matrices(t)
        off = B - np.diag(np.diag(B))
        if np.linalg.norm(off) > DIAG_TOL:
            raise PreconditionFailed(f"B is not diagonal at t={t:.6g}")
        if np.linalg.norm(A) > DIAG_TOL:
            raise PreconditionFailed(f"A is not zero at t={t:.6g}; use the unitary route")
        bmin = float(np.min(np.diag(B).real))
        min_b = min(min_b, bmin)
        if bmin < -DIAG_TOL:
            raise PreconditionFailed(f"diagonal entry of B is {bmin:.3e} < 0 at t={t:.6g}")
    return min_b


def _diagonal_scalar_system(sys, j: int) -> ScalarSystem2x2:
    k = j - 1

    def b_j(t):
        return float(sys.B(t)[k, k].real)

    def c_jj(t):
        return float(sys.C(t)[k, k].real)

    zero = lambda t: 0.0  # noqa: E731
    return ScalarSystem2x2(p11=zero, p12=b_j, p21=c_jj, p22=zero, label=f"diagonal j={j}")


def check_cor22(sys, j: int, w: Window, tol: float = QUAD_TOL) -> CriterionReport:
    """Window integral of ``min[b_j, -c_jj]`` against ``pi`` for diagonal ``B``.

    Raises
    ------
    PreconditionFailed
        ``B`` not diagonal, a diagonal entry negative, or ``A`` nonzero.
    """
    min_b = _check_diagonal_system(sys, w.a, w.b)
    value, err, diag = _window_integral(_diagonal_scalar_system(sys, j), w, "cor2.2", tol)
    diag["min_b"] = min_b
    margin = value - math.pi
    verdict = Verdict.PROVEN if margin > err else Verdict.INCONCLUSIVE
    if verdict is Verdict.INCONCLUSIVE:
        diag["reason"] = "integral within error of pi" if abs(margin) <= err else "integral below pi"
    return CriterionReport("cor2.2", j, verdict, margin, diag)


def check_cor21(sys, j: int, horizon: float, stages: int = DEFAULT_STAGES,
                threshold: float = DEFAULT_THRESHOLD, tol: float = QUAD_TOL) -> CriterionReport:
    """Staged divergence of ``int b_j`` and ``-int c_jj`` for diagonal ``B``."""
    min_b = _check_diagonal_system(sys, sys.t0, horizon)
    rep = check_thm32(_diagonal_scalar_system(sys, j), horizon, stages, start=sys.t0,
                      threshold=threshold, tol=tol, criterion="cor2.1")
    rep.j = j
    rep.diagnostics["min_b"] = min_b
    return rep


# --------------------------------------------------------------------------
# pipelines
# --------------------------------------------------------------------------


def _span(sys, window: Optional[Window], horizon: Optional[float]):
    if (window is None) == (horizon is None):
        raise ValueError("give exactly one of window or horizon")
    if window is not None:
        return window.a, window.b
    if not horizon > sys.t0:
        raise ValueError("horizon must exceed t0")
    return sys.t0, float(horizon)


def span_grid(a: float, b: float, points: int = DEFAULT_GRID):
    """Sample grid over ``[a, b]`` and a slightly padded evaluation domain."""
    pad = 1e-4 * max(1.0, abs(a), abs(b))
    return np.linspace(a, b, points), (a - pad, b + pad)


def _inconclusive(criterion, j, reason, **diag) -> CriterionReport:
    diag["reason"] = reason
    return CriterionReport(criterion, j, Verdict.INCONCLUSIVE, None, diag)


def _route(s: ScalarSystem2x2, window, horizon, start, stages, threshold, tol):
    if window is not None:
        return check_thm33(s, window, tol)
    return check_thm32(s, horizon, stages, start=start, threshold=threshold, tol=tol)


def pipeline_thm21(sys, j: int, window: Optional[Window] = None, horizon: Optional[float] = None,
                   grid_points: int = DEFAULT_GRID, stages: int = DEFAULT_STAGES,
                   threshold: float = DEFAULT_THRESHOLD, tol: float = QUAD_TOL,
                   eq12: Optional[matfun.Eq12Solution] = None) -> CriterionReport:
    """Square-root route: solve for ``F``, reduce to a second-order equation, test it.

    The window form (``thm2.2``) may prove oscillation; the ray form
    (``thm2.1``) yields at most divergence evidence. A failed solvability
    condition makes the theorem silent, reported as ``Inconclusive``.
    """
    criterion = "thm2.2" if window is not None else "thm2.1"
    a, b = _span(sys, window, horizon)
    grid, domain = span_grid(a, b, grid_points)
    try:
        sol = eq12 if eq12 is not None else matfun.solve_eq12(sys.A, sys.B, grid, domain)
    except NotPositiveSemidefinite as exc:
        return _inconclusive(criterion, j, f"B is not nonnegative definite: {exc}")
    diag = {
        "eq12_solvable_fraction": float(np.mean(sol.solvable)),
        "eq12_max_residual": float(np.max(sol.residual)),
        "grid_points": int(grid.size),
        "F": "pseudoinverse of sqrt(B)",
    }
    if not sol.all_solvable:
        return _inconclusive(
            criterion, j,
            "sqrt(B) X M = M has no solution on the whole span",
            first_unsolvable_t=sol.first_unsolvable(), **diag,
        )
    try:
        red = reduce_thm21(sys, sol, j, grid)
        rep = _route(red.as_scalar_system(), window, horizon, a, stages, threshold, tol)
    except (UnsolvableEq12, OutOfDomain, PreconditionFailed) as exc:
        return _inconclusive(criterion, j, str(exc), **diag)
    diag["theta_range"] = [float(red.theta.min()), float(red.theta.max())]
    diag["scalar"] = rep.diagnostics
    if "reason" in rep.diagnostics:
        diag["reason"] = rep.diagnostics["reason"]
    return CriterionReport(criterion, j, rep.verdict, rep.margin, diag)


def pipeline_thm23(sys, j: int, window: Optional[Window] = None, horizon: Optional[float] = None,
                   grid_points: int = DEFAULT_GRID, stages: int = DEFAULT_STAGES,
                   threshold: float = DEFAULT_THRESHOLD, tol: float = QUAD_TOL,
                   ep: Optional[matfun.EigenPath] = None, jump_limit: Optional[float] = None) -> CriterionReport:
    """Unitary route: track ``U_B``, reduce to the 2x2 system, test it.

    ``chi_j`` must be continuous (checked as a bounded jump between grid
    samples); otherwise the result is downgraded to ``Inconclusive``.
    """
    criterion = "thm2.4" if window is not None else "thm2.3"
    a, b = _span(sys, window, horizon)
    grid, domain = span_grid(a, b, grid_points)
    try:
        path = ep if ep is not None else matfun.eigen_path(sys.B, grid, domain)
    except GridTooCoarse as exc:
        return _inconclusive(criterion, j, str(exc))
    diag = {
        "continuity_defect": path.continuity_defect,
        "grid_points": int(grid.size),
        "min_eigenvalue": float(path.b.min()),
    }
    try:
        red = reduce_thm23(sys, path, j, grid, jump_limit=jump_limit)
    except NegativeEigenvalue as exc:
        return _inconclusive(criterion, j, f"condition b_m >= 0 fails: {exc}", **diag)
    diag.update(
        guard_activity={str(m): f for m, f in red.guard_fraction().items()},
        chi_jump=red.chi_jump,
        chi_jump_limit=red.chi_jump_limit,
        chi_range=[float(red.chi.min()), float(red.chi.max())],
    )
    try:
        rep = _route(as_scalar_system(red), window, horizon, a, stages, threshold, tol)
    except (NegativeEigenvalue, OutOfDomain, PreconditionFailed) as exc:
        return _inconclusive(criterion, j, str(exc), **diag)
    diag["scalar"] = rep.diagnostics
    verdict = rep.verdict
    if not red.certifiable and verdict is not Verdict.INCONCLUSIVE:
        verdict = Verdict.INCONCLUSIVE
        diag["reason"] = "chi_j is not continuous on the grid"
    elif "reason" in rep.diagnostics:
        diag["reason"] = rep.diagnostics["reason"]
    return CriterionReport(criterion, j, verdict, rep.margin, diag)


def run_criteria(sys, criteria: Optional[Sequence[str]] = None, window: Optional[Window] = None,
                 horizon: Optional[float] = None, js: Optional[Sequence[int]] = None,
                 grid_points: int = DEFAULT_GRID, stages: int = DEFAULT_STAGES,
                 threshold: float = DEFAULT_THRESHOLD, workers: int = 1):
    """Evaluate criteria for each requested ``j``; results in a fixed order.

    With ``criteria=None`` every applicable criterion runs: corollary routes
    only for diagonal ``B`` with ``A = 0``.

    Raises
    ------
    PreconditionFailed
        If an explicitly requested criterion does not fit the span kind or
        the system's structure.
    """
    allowed = WINDOW_CRITERIA if window is not None else RAY_CRITERIA
    a, b = _span(sys, window, horizon)
    if sys.diagonal_B is None:
        sys.validate((a, b))
    diagonal = bool(sys.diagonal_B and sys.zero_A)
    if criteria is None:
        criteria = [c for c in allowed if diagonal or not c.startswith("cor")]
    else:
        for c in criteria:
            if c not in allowed:
                kind = "--window" if window is not None else "--horizon"
                raise PreconditionFailed(f"criterion {c!r} is not available with {kind}; choose from {list(allowed)}")
    js = list(range(1, sys.n + 1)) if js is None else list(js)
    for j in js:
        if not 1 <= j <= sys.n:
            raise PreconditionFailed(f"j={j} outside 1..{sys.n}")

    grid, domain = span_grid(a, b, grid_points)
    shared = {}
    if any(c in ("thm2.1", "thm2.2") for c in criteria):
        try:
            shared["eq12"] = matfun.solve_eq12(sys.A, sys.B, grid, domain)
        except NotPositiveSemidefinite:
            shared["eq12"] = None
    if any(c in ("thm2.3", "thm2.4") for c in criteria):
        try:
            shared["ep"] = matfun.eigen_path(sys.B, grid, domain)
        except GridTooCoarse:
            shared["ep"] = None

    kw = dict(window=window, horizon=horizon, grid_points=grid_points, stages=stages, threshold=threshold)

    def one(task):
        c, j = task
        if c in ("thm2.1", "thm2.2"):
            return pipeline_thm21(sys, j, eq12=shared.get("eq12"), **kw)
        if c in ("thm2.3", "thm2.4"):
            return pipeline_thm23(sys, j, ep=shared.get("ep"), **kw)
        if c == "cor2.2":
            return check_cor22(sys, j, window)
        return check_cor21(sys, j, horizon, stages=stages, threshold=threshold)

    tasks = [(c, j) for c in criteria for j in js]
    if workers > 1 and len(tasks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(one, tasks))
    return [one(t) for t in tasks]
