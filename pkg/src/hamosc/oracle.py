"""Independent validation: comparison condition, reduction residuals, empirical oracle.

Comparison of scalar Riccati equations
--------------------------------------
For ``y_k' + f_k y_k^2 + g_k y_k + h_k = 0`` (k = 1, 2) with a known
solution ``y2`` and ``y1(t0) = gamma0 >= y2(t0)``, the difference
``u = y1 - y2`` solves the linear equation::

    u' + [f1 (y1 + y2) + g1] u = (f2 - f1) y2^2 + (g2 - g1) y2 + h2 - h1

so ``y1`` stays above ``y2`` (and therefore cannot escape to ``-inf``
while ``y2`` exists) as long as the weighted running integral::

    J(t) = int_{t0}^t exp{int_{t0}^tau [f1 (eta1 + eta2) + g1]} *
           [(f2 - f1) y2^2 + (g2 - g1) y2 + h2 - h1](tau) dtau

is nonnegative, where ``eta1, eta2`` are solutions of the companion
inequalities ``eta' + f eta^2 + g eta + h >= 0``. This is the ``"corrected"``
reading and the default. The ``"literal"`` reading weights by explicit
reference coefficients ``f, g, h`` and uses the bracket
``(f1 - f) y2^2 + (g1 - g) y2 + h1 - h``; with ``f, g, h = f2, g2, h2`` it
certifies pairs where ``y1`` blows up (see :func:`literal_counterexample`).
"""

from __future__ import annotations

import csv
import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from .criteria import Window
from .dynamics import (
    ATOL,
    RTOL,
    RiccatiPath,
    Trajectory,
    _step_through,
    ZeroEvent,
    detect_zeros,
    integrate_hamiltonian,
    integrate_scalar_riccati,
)
from .errors import HypothesisViolated, StepSizeUnderflow
from .matfun import fd_step
from .quadrature import QUAD_TOL, CumulativeIntegral, integrate
from .reduction import ReductionThm21, ReductionThm23

ScalarFunc = Callable[[float], float]

HYPOTHESIS_TOL = 1e-12
COMPARISON_POINTS = 257
PSI0_MAX_NORM = 10.0
NEAR_SINGULAR_EPS = 1e-3


# --------------------------------------------------------------------------
# comparison of scalar Riccati equations
# --------------------------------------------------------------------------


def linear_majorant(g: ScalarFunc, h: ScalarFunc, gamma: float, span) -> RiccatiPath:
    """Solution of ``zeta' + g zeta + h = 0`` with ``zeta(t0) = gamma``.

    When ``f >= 0`` it solves ``eta' + f eta^2 + g eta + h >= 0``, so it is a
    valid ``eta`` for the comparison condition.
    """
    zero = lambda t: 0.0  # noqa: E731
    return integrate_scalar_riccati(zero, g, h, gamma, span, blowup=math.inf)


@dataclass
class ComparisonInput:
    """Coefficients and known paths for comparing two scalar Riccati equations.

    ``f, g, h`` are the reference coefficients used by the literal reading;
    they default to ``f2, g2, h2``. ``eta1``/``eta2`` default to the linear
    majorants of the respective equations started at ``gamma0``. ``tau0`` is
    the end of the span; by default the end of ``y2``.
    """

    f1: ScalarFunc
    g1: ScalarFunc
    h1: ScalarFunc
    f2: ScalarFunc
    g2: ScalarFunc
    h2: ScalarFunc
    y2: RiccatiPath
    gamma0: float
    eta1: Optional[Callable] = None
    eta2: Optional[Callable] = None
    f: Optional[ScalarFunc] = None
    g: Optional[ScalarFunc] = None
    h: Optional[ScalarFunc] = None
    tau0: Optional[float] = None

    def __post_init__(self):
        self.f = self.f2 if self.f is None else self.f
        self.g = self.g2 if self.g is None else self.g
        self.h = self.h2 if self.h is None else self.h
        if self.tau0 is None:
            self.tau0 = self.y2.blow_up.time if self.y2.blow_up else self.y2.span[1]
        span = (self.t0, self.tau0)
        if self.eta1 is None:
            self.eta1 = linear_majorant(self.g1, self.h1, self.gamma0, span)
        if self.eta2 is None:
            self.eta2 = linear_majorant(self.g2, self.h2, self.gamma0, span)

    @property
    def t0(self) -> float:
        return self.y2.span[0]


@dataclass
class ComparisonResult:
    satisfied: bool
    reading: str
    grid: np.ndarray
    margin: np.ndarray
    error: float

    @property
    def min_margin(self) -> float:
        return float(np.min(self.margin))


def _weight_exponent(rate: ScalarFunc, a: float, b: float):
    """``t -> int_a^t rate`` as a dense ODE solution, with an error estimate.

    One dense evaluation per query keeps the nested integral cheap. The
    error is the larger of the QUADPACK bound for the full integral and its
    disagreement with the ODE value at ``b``.
    """
    run = _step_through(lambda t, y: np.array([rate(t)]), a, b, np.zeros(1), 1e-12, 1e-14, method="DOP853")
    if run.failed_at is not None:
        raise StepSizeUnderflow(f"weight integration stalled: {run.message}", run.failed_at)
    dense = run.dense
    ref = integrate(rate, a, b, epsabs=QUAD_TOL * 1e-2)
    err = max(ref.error, abs(float(run.y[-1, 0]) - ref.value))
    return (lambda t: float(dense(t)[0])), err


def comparison_condition(c: ComparisonInput, grid=None, reading: str = "corrected") -> ComparisonResult:
    """Evaluate the running integral ``J`` on ``grid`` and test ``J >= -error``.

    Raises
    ------
    HypothesisViolated
        If ``f1 < 0`` on the grid, or ``eta_k(t0) < y2(t0)``.
    """
    if reading not in ("corrected", "literal"):
        raise ValueError("reading must be 'corrected' or 'literal'")
    t0, tau0 = c.t0, float(c.tau0)
    if not tau0 > t0:
        raise ValueError("span end must exceed t0")
    grid = np.linspace(t0, tau0, COMPARISON_POINTS) if grid is None else np.asarray(grid, dtype=float)
    if np.any(grid < t0) or np.any(grid > tau0):
        raise ValueError("grid must lie inside the comparison span")

    f1_min = min(c.f1(float(t)) for t in grid)
    if f1_min < -HYPOTHESIS_TOL:
        raise HypothesisViolated(f"f1 takes the negative value {f1_min:.3e}")
    y20 = c.y2(t0)
    for name, eta in (("eta1", c.eta1), ("eta2", c.eta2)):
        if eta(t0) < y20 - HYPOTHESIS_TOL * max(1.0, abs(y20)):
            raise HypothesisViolated(f"{name}(t0) = {eta(t0):.6g} lies below y2(t0) = {y20:.6g}")

    if reading == "corrected":
        wf, wg = c.f1, c.g1
        df = lambda t: c.f2(t) - c.f1(t)  # noqa: E731
        dg = lambda t: c.g2(t) - c.g1(t)  # noqa: E731
        dh = lambda t: c.h2(t) - c.h1(t)  # noqa: E731
    else:
        wf, wg = c.f, c.g
        df = lambda t: c.f1(t) - c.f(t)  # noqa: E731
        dg = lambda t: c.g1(t) - c.g(t)  # noqa: E731
        dh = lambda t: c.h1(t) - c.h(t)  # noqa: E731

    W, W_err = _weight_exponent(lambda s: wf(s) * (c.eta1(s) + c.eta2(s)) + wg(s), t0, tau0)

    def integrand(tau):
        y = c.y2(tau)
        return math.exp(W(tau)) * (df(tau) * y * y + dg(tau) * y + dh(tau))

    J = CumulativeIntegral(integrand, t0, tau0)
    margin = np.array([J(float(t)) for t in grid])
    err = J.error + W_err * float(np.max(np.abs(margin), initial=0.0))
    return ComparisonResult(bool(np.all(margin >= -err)), reading, grid, margin, float(err))


@dataclass
class PredictionResult:
    verified: bool
    y1: RiccatiPath
    span: tuple


def comparison_predict_and_verify(c: ComparisonInput, span=None, blowup: float = 1e8) -> PredictionResult:
    """Integrate the first equation from ``gamma0``; verified iff it does not blow up."""
    a, b = (c.t0, float(c.tau0)) if span is None else span
    y1 = integrate_scalar_riccati(c.f1, c.g1, c.h1, c.gamma0, (a, b), blowup=blowup)
    return PredictionResult(y1.blow_up is None, y1, (float(a), float(b)))


def literal_counterexample(span=(0.0, 3.0)):
    """A pair the literal reading accepts although the first equation blows up.

    ``f = 1, g = 0, h1 = 1, h2 = 0``: ``y2 = 0`` exists everywhere, the
    literal bracket is ``h1 - h2 = 1 >= 0``, but ``y1 = -tan(t)`` escapes
    at ``pi/2``.
    """
    one = lambda t: 1.0  # noqa: E731
    zero = lambda t: 0.0  # noqa: E731
    y2 = integrate_scalar_riccati(one, zero, zero, 0.0, span)
    return ComparisonInput(one, zero, one, one, zero, zero, y2, gamma0=0.0)


# --------------------------------------------------------------------------
# residuals of the transformed Riccati equations
# --------------------------------------------------------------------------


def transform_sqrt(Z: RiccatiPath, red: ReductionThm21) -> RiccatiPath:
    """``V = sqrt(B) Z sqrt(B)`` along a matrix Riccati path."""
    S = red.fields.sol.sqrtB

    def func(t):
        St = S(t)
        return St @ Z(t) @ St

    return RiccatiPath(Z.t, np.array([func(t) for t in Z.t]), func, Z.blow_up)


def transform_unitary(Z: RiccatiPath, red: ReductionThm23) -> RiccatiPath:
    """``V = U Z U^*`` along a matrix Riccati path."""

    def func(t):
        U = red.fields.at(float(t))[0]
        return U @ Z(t) @ U.conj().T

    return RiccatiPath(Z.t, np.array([func(t) for t in Z.t]), func, Z.blow_up)


@dataclass
class ResidualTrace:
    """Residual of the diagonal scalar Riccati identity at sample times.

    For the unitary route ``guard_discrepancy`` holds the terms
    ``2 Re(v_jm a0_mj)`` dropped by the guarded bracket where ``b_m = 0``;
    the exact identity is ``residual + guard_discrepancy = 0``.
    """

    t: np.ndarray
    residual: np.ndarray
    guard_discrepancy: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def max_abs(self) -> float:
        return float(np.max(np.abs(self.residual))) if self.residual.size else 0.0


def _vjj_prime(V: RiccatiPath, t: float, k: int, span) -> float:
    h = fd_step(t)
    lo, hi = span
    if t - h >= lo and t + h <= hi:
        return float(((V(t + h)[k, k] - V(t - h)[k, k]) / (2 * h)).real)
    if t + 2 * h <= hi:
        v0, v1, v2 = (V(t + i * h)[k, k].real for i in range(3))
        return float((-3 * v0 + 4 * v1 - v2) / (2 * h))
    v0, v1, v2 = (V(t - i * h)[k, k].real for i in range(3))
    return float((3 * v0 - 4 * v1 + v2) / (2 * h))


def diagonal_riccati_residual(V: RiccatiPath, coeffs, j: Optional[int] = None, ts=None) -> ResidualTrace:
    """Residual of the scalar equation satisfied by ``v_jj`` (``j`` 1-based).

    With a :class:`ReductionThm21` the identity is::

        v_jj' + v_jj^2 + 2 Re a_F,jj v_jj + sum_{m != j} |v_jm + conj(a_F,mj)|^2 - theta_j

    and with a :class:`ReductionThm23`::

        v_jj' + b_j v_jj^2 + 2 Re a0_jj v_jj
              + sum_{m != j} b_m |v_jm + [conj(a0_mj) / b_m]_0|^2 - chi_j

    ``v_jj'`` is a central difference of the dense path.
    """
    j = coeffs.j if j is None else j
    k = j - 1
    span = V.span
    if V.blow_up is not None:
        span = (span[0], min(span[1], V.blow_up.time))
    ts = V.t[(V.t >= span[0]) & (V.t <= span[1])] if ts is None else np.asarray(ts, dtype=float)
    res, disc = [], []
    for t in ts:
        t = float(t)
        Vt = V(t)
        v = float(Vt[k, k].real)
        dv = _vjj_prime(V, t, k, span)
        if isinstance(coeffs, ReductionThm21):
            AF, CB = coeffs.fields.at(t)
            total = dv + v * v + 2.0 * AF[k, k].real * v - coeffs.theta_at(t)
            for m in range(Vt.shape[0]):
                if m != k:
                    total += abs(Vt[k, m] + np.conj(AF[m, k])) ** 2
            res.append(total)
            disc.append(0.0)
        elif isinstance(coeffs, ReductionThm23):
            _, b, A0, _, guard = coeffs.fields.at(t)
            total = dv + b[k] * v * v + 2.0 * A0[k, k].real * v - coeffs.chi_at(t)
            dropped = 0.0
            for m in range(Vt.shape[0]):
                if m == k:
                    continue
                if guard[m]:
                    dropped += 2.0 * (Vt[k, m] * A0[m, k]).real
                else:
                    total += b[m] * abs(Vt[k, m] + np.conj(A0[m, k]) / b[m]) ** 2
            res.append(total)
            disc.append(dropped)
        else:
            raise TypeError("coeffs must be a ReductionThm21 or ReductionThm23")
    return ResidualTrace(np.asarray(ts, dtype=float), np.array(res), np.array(disc))


# --------------------------------------------------------------------------
# empirical oracle
# --------------------------------------------------------------------------


class OracleVerdict(str, enum.Enum):
    ALL_ZERO = "AllZero"
    SOME_NON_ZERO = "SomeNonZero"

    def __str__(self) -> str:
        return self.value


@dataclass
class TrialResult:
    index: int
    kind: str
    status: str  # "zero", "no-zero" or "indeterminate"
    zeros: List[ZeroEvent]
    near_events: List[ZeroEvent]
    message: str = ""
    trajectory: Optional[Trajectory] = field(default=None, repr=False)

    def to_dict(self) -> dict:
        d = {
            "trial": self.index,
            "kind": self.kind,
            "status": self.status,
            "zeros": [{"time": e.time, "sigma_min": e.sigma_min} for e in self.zeros],
            "near_events": [{"time": e.time, "sigma_min": e.sigma_min} for e in self.near_events],
        }
        if self.message:
            d["message"] = self.message
        return d


@dataclass
class OracleResult:
    verdict: OracleVerdict
    window: Window
    seed: int
    trials: List[TrialResult]

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict.value,
            "window": [self.window.a, self.window.b],
            "seed": self.seed,
            "trials": [t.to_dict() for t in self.trials],
        }

    def write_events_csv(self, fh) -> None:
        """One row per event: ``trial, kind, status, event, time, sigma_min``."""
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["trial", "kind", "status", "event", "time", "sigma_min"])
        for tr in self.trials:
            rows = [("zero", e) for e in tr.zeros] + [("near", e) for e in tr.near_events]
            if not rows:
                w.writerow([tr.index, tr.kind, tr.status, "none", "", ""])
            for label, e in sorted(rows, key=lambda r: r[1].time):
                w.writerow([tr.index, tr.kind, tr.status, label, repr(e.time), repr(e.sigma_min)])


def sample_initial_data(n: int, trials: int, seed: int):
    """Conjoined initial pairs ``(kind, Phi0, Psi0)`` in trial order.

    First ``(I, 0)``; then ``Phi0 = I`` with one diagonal entry replaced by
    ``1e-3`` and ``Psi0 = I``; then ``Phi0 = I`` with Gaussian Hermitian
    ``Psi0`` (seeded, scaled to Frobenius norm at most 10). Every pair has
    ``Phi0^* Psi0`` Hermitian by construction.
    """
    rng = np.random.default_rng(seed)
    eye = np.eye(n, dtype=complex)
    out = []
    for i in range(trials):
        if i == 0:
            out.append(("identity", eye.copy(), np.zeros((n, n), dtype=complex)))
        elif i <= n:
            Phi0 = eye.copy()
            Phi0[i - 1, i - 1] = NEAR_SINGULAR_EPS
            out.append((f"near-singular-{i}", Phi0, eye.copy()))
        else:
            G = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
            H = 0.5 * (G + G.conj().T)
            norm = np.linalg.norm(H)
            if norm > PSI0_MAX_NORM:
                H *= PSI0_MAX_NORM / norm
            out.append(("random", eye.copy(), H))
    return out


def empirical_oracle(sys, window: Optional[Window] = None, horizon: Optional[float] = None,
                     trials: int = 20, seed: int = 0, workers: int = 1, rtol: float = RTOL,
                     atol: float = ATOL, keep_trajectories: bool = False) -> OracleResult:
    """Sample conjoined solutions and look for zeros of ``det Phi`` on a window.

    Initial data are set at the window start (``t0`` for a ray horizon).
    The verdict is ``AllZero`` iff every trial has a zero event; trials that
    fail to integrate are ``indeterminate`` and count against ``AllZero``.
    This is evidence about finitely many solutions, never a proof.
    ``keep_trajectories`` attaches each trial's :class:`Trajectory`.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if (window is None) == (horizon is None):
        raise ValueError("give exactly one of window or horizon")
    w = window if window is not None else Window(sys.t0, float(horizon))
    data = sample_initial_data(sys.n, trials, seed)

    def run(item):
        idx, (kind, Phi0, Psi0) = item
        try:
            traj = integrate_hamiltonian(sys, Phi0, Psi0, (w.a, w.b), rtol=rtol, atol=atol, detect=False)
        except StepSizeUnderflow as exc:
            return TrialResult(idx, kind, "indeterminate", [], [], str(exc))
        zeros, near = detect_zeros(traj, w, return_near=True)
        return TrialResult(idx, kind, "zero" if zeros else "no-zero", zeros, near,
                           trajectory=traj if keep_trajectories else None)

    items = list(enumerate(data))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, items))
    else:
        results = [run(it) for it in items]
    verdict = OracleVerdict.ALL_ZERO if all(r.status == "zero" for r in results) else OracleVerdict.SOME_NON_ZERO
    return OracleResult(verdict, w, int(seed), results)
