"""Integration of the Hamiltonian system, its Riccati equations, and zero detection.

All integrations default to the Dormand-Prince 5(4) pair
(``scipy.integrate.RK45``; ``method="DOP853"`` selects the 8(5,3) pair)
stepped one accepted step at a time, so that every step can be inspected
(blow-up checks, singular-value traces) and its dense interpolant kept for
event refinement. Arithmetic is complex throughout.

Zeros of ``det Phi(t)`` are declared through ``sigma_min(Phi(t))``: the
smallest singular value has no sign to cross, so zeros are refined local
minima that fall below an absolute floor. Candidates are bracketed with a
scale-free ``|det Phi|`` indicator. Minima that stay above the floor but
well below the typical scale are reported as near events.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np
from scipy.integrate import DOP853, RK45, OdeSolution
from scipy.optimize import brentq

from .errors import StepSizeUnderflow
from .quadrature import CumulativeIntegral

RTOL = 1e-9
ATOL = 1e-12
METHODS = {"RK45": RK45, "DOP853": DOP853}
# Settings under which the conjoined invariant stays within 1e-8 (relative)
# over spans of length 100; the 5(4) pair at its defaults drifts by up to
# ~1e-6 there, since neither pair preserves the invariant exactly.
CONSERVATIVE = {"method": "DOP853", "rtol": 1e-11, "atol": 1e-14}
BLOWUP_NORM = 1e8
SIGMA_REL_TOL = 1e-7
NEAR_REL_TOL = 1e-3
SAMPLES_PER_STEP = 8
_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass
class _Run:
    t: np.ndarray
    y: np.ndarray
    dense: Optional[OdeSolution]
    failed_at: Optional[float] = None
    message: str = ""


def _step_through(fun, t0, t1, y0, rtol, atol, stop=None, method: str = "RK45") -> _Run:
    """Advance from ``t0`` to ``t1`` step by step; ``stop(t, y)`` may end early."""
    if method not in METHODS:
        raise ValueError(f"method must be one of {sorted(METHODS)}")
    solver = METHODS[method](fun, t0, y0, t1, rtol=rtol, atol=atol)
    ts, ys, interps = [t0], [np.array(y0, copy=True)], []
    failed_at, message = None, ""
    while solver.status == "running":
        # overflow near a singularity surfaces as a failed step, not a warning
        with np.errstate(over="ignore", invalid="ignore"):
            message = solver.step() or ""
            if solver.status == "failed":
                failed_at = float(solver.t)
                break
            interps.append(solver.dense_output())
        ts.append(solver.t)
        ys.append(solver.y.copy())
        if stop is not None and stop(solver.t, solver.y):
            break
    dense = OdeSolution(np.array(ts), interps) if interps else None
    return _Run(np.array(ts), np.array(ys), dense, failed_at, message)


def _golden_min(f: Callable[[float], float], a: float, b: float, xtol: float):
    """Golden-section search for a local minimum of ``f`` on ``[a, b]``."""
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = f(c), f(d)
    while b - a > xtol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = f(d)
    return (c, fc) if fc <= fd else (d, fd)


# --------------------------------------------------------------------------
# Hamiltonian trajectories
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ZeroEvent:
    time: float
    sigma_min: float


def sigma_min(Phi: np.ndarray) -> np.ndarray:
    """Smallest singular value of one matrix or a stack of matrices."""
    return np.linalg.svd(Phi, compute_uv=False)[..., -1]


@dataclass
class Trajectory:
    """Samples of a solution ``(Phi, Psi)`` at accepted integrator steps.

    ``state(ts)`` evaluates the dense solution at arbitrary times in the
    span and returns stacked ``(Phi, Psi)``.
    """

    t: np.ndarray
    Phi: np.ndarray
    Psi: np.ndarray
    state: Callable[[np.ndarray], Tuple[np.ndarray, np.ndarray]] = field(repr=False)
    sigma_min: np.ndarray = field(init=False)
    conjoined_defect: np.ndarray = field(init=False)
    zeros: List[ZeroEvent] = field(default_factory=list)
    near_events: List[ZeroEvent] = field(default_factory=list)

    def __post_init__(self):
        self.sigma_min = sigma_min(self.Phi)
        W = np.conj(np.swapaxes(self.Phi, -1, -2)) @ self.Psi
        self.conjoined_defect = np.linalg.norm(W - np.conj(np.swapaxes(W, -1, -2)), axis=(-2, -1))

    @property
    def n(self) -> int:
        return self.Phi.shape[-1]

    @property
    def span(self) -> Tuple[float, float]:
        return float(self.t[0]), float(self.t[-1])

    def at(self, t: float):
        Phi, Psi = self.state(np.array([t], dtype=float))
        return Phi[0], Psi[0]

    def relative_defect(self) -> np.ndarray:
        """Conjoined defect divided by ``1 + ||Phi||_F ||Psi||_F``."""
        scale = 1.0 + np.linalg.norm(self.Phi, axis=(-2, -1)) * np.linalg.norm(self.Psi, axis=(-2, -1))
        return self.conjoined_defect / scale

    def write_csv(self, fh) -> None:
        """Columns ``t``, Re/Im of every ``Phi`` and ``Psi`` entry, ``sigma_min``, ``conjoined_defect``."""
        n = self.n
        header = ["t"]
        for name in ("Phi", "Psi"):
            for i in range(n):
                for j in range(n):
                    header += [f"re_{name}_{i + 1}{j + 1}", f"im_{name}_{i + 1}{j + 1}"]
        header += ["sigma_min", "conjoined_defect"]
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for k, t in enumerate(self.t):
            row = [repr(float(t))]
            for M in (self.Phi[k], self.Psi[k]):
                for z in M.ravel():
                    row += [repr(float(z.real)), repr(float(z.imag))]
            row += [repr(float(self.sigma_min[k])), repr(float(self.conjoined_defect[k]))]
            w.writerow(row)


def _hamiltonian_rhs(sys, n: int):
    nn = n * n

    def fun(t, y):
        A, B, C = sys.matrices(t)
        Phi = y[:nn].reshape(n, n)
        Psi = y[nn:].reshape(n, n)
        dPhi = A @ Phi + B @ Psi
        dPsi = C @ Phi - A.conj().T @ Psi
        return np.concatenate([dPhi.ravel(), dPsi.ravel()])

    return fun


def _dense_pair(dense: OdeSolution, n: int):
    nn = n * n

    def state(ts):
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        Y = dense(ts).T  # (m, 2 n^2)
        return Y[:, :nn].reshape(-1, n, n), Y[:, nn:].reshape(-1, n, n)

    return state


def integrate_hamiltonian(sys, Phi0, Psi0, span, rtol: float = RTOL, atol: float = ATOL,
                          detect: bool = True, method: str = "RK45") -> Trajectory:
    """Integrate the matrix Hamiltonian system over ``span = (t_start, t_end)``.

    With ``detect`` the whole span is scanned for zeros of ``det Phi``
    using :func:`detect_zeros` defaults. For long spans where the conjoined
    invariant matters, pass ``**CONSERVATIVE``.

    Raises
    ------
    StepSizeUnderflow
        If the step size collapses; carries the time reached.
    """
    n = sys.n
    Phi0 = np.asarray(Phi0, dtype=complex).reshape(n, n)
    Psi0 = np.asarray(Psi0, dtype=complex).reshape(n, n)
    t0, t1 = float(span[0]), float(span[1])
    if not (rtol > 0 and atol > 0):
        raise ValueError("tolerances must be positive")
    y0 = np.concatenate([Phi0.ravel(), Psi0.ravel()])
    run = _step_through(_hamiltonian_rhs(sys, n), t0, t1, y0, rtol, atol, method=method)
    if run.failed_at is not None:
        raise StepSizeUnderflow(f"integration stalled: {run.message}", run.failed_at)
    nn = n * n
    traj = Trajectory(
        t=run.t,
        Phi=run.y[:, :nn].reshape(-1, n, n),
        Psi=run.y[:, nn:].reshape(-1, n, n),
        state=_dense_pair(run.dense, n),
    )
    if detect:
        traj.zeros, traj.near_events = detect_zeros(traj, return_near=True)
    return traj


def _det_indicator(Phi: np.ndarray, Psi: np.ndarray) -> np.ndarray:
    """``|det Phi| / sqrt(det(Phi^* Phi + Psi^* Psi))`` for stacked samples.

    This is ``|det|`` of ``Phi`` in an orthonormalized frame of the column
    space of ``(Phi; Psi)``: it lies in ``[0, 1]``, is invariant under
    ``Phi, Psi -> Phi G, Psi G`` and is smooth with simple zeros exactly
    where ``det Phi`` vanishes. Falls back to ``sigma_min`` for frames of
    deficient rank.
    """
    G = np.swapaxes(Phi.conj(), -1, -2) @ Phi + np.swapaxes(Psi.conj(), -1, -2) @ Psi
    _, logdet_phi = np.linalg.slogdet(Phi)
    sign_g, logdet_g = np.linalg.slogdet(G)
    with np.errstate(invalid="ignore"):
        out = np.exp(logdet_phi - 0.5 * logdet_g)
    bad = (sign_g.real <= 0) | ~np.isfinite(logdet_g)
    if np.any(bad):
        out = np.where(bad, sigma_min(Phi), out)
    return out


def detect_zeros(traj: Trajectory, window=None, sigma_tol: Optional[float] = None,
                 samples_per_step: int = SAMPLES_PER_STEP, return_near: bool = False):
    """Zeros of ``det Phi`` on ``window`` (default: the whole trajectory).

    Candidates are local minima (endpoints included) of a scale-free
    ``|det Phi|`` indicator on a sub-sampling of the dense output, refined
    by golden-section search. A candidate is a zero when ``sigma_min(Phi)``
    at the refined time is below ``sigma_tol`` (default ``1e-7 * median
    sigma_min``). Scanning ``sigma_min`` itself misses zeros when another
    singular value is persistently small, since the dip is then narrower
    than the sampling.

    Returns a sorted list of :class:`ZeroEvent`; with ``return_near`` also
    the list of near events (refined minima below ``1e-3 * median``).
    """
    lo, hi = traj.span
    a, b = (lo, hi) if window is None else (max(lo, window.a), min(hi, window.b))
    if not b > a:
        return ([], []) if return_near else []
    inner = traj.t[(traj.t > a) & (traj.t < b)]
    knots = np.concatenate([[a], inner, [b]])
    frac = np.linspace(0.0, 1.0, samples_per_step + 1)[:-1]
    ts = (knots[:-1, None] + np.diff(knots)[:, None] * frac[None, :]).ravel()
    ts = np.append(ts, b)
    Phi, Psi = traj.state(ts)
    s = sigma_min(Phi)
    d = _det_indicator(Phi, Psi)
    median = float(np.median(s))
    tol = SIGMA_REL_TOL * median if sigma_tol is None else sigma_tol
    near_tol = max(tol, NEAR_REL_TOL * median)

    def indicator(t):
        P, S = traj.state(np.array([t]))
        return float(_det_indicator(P, S)[0])

    def smin(t):
        return float(sigma_min(traj.state(np.array([t]))[0][0]))

    found = []
    last = len(ts) - 1
    for i in range(len(ts)):
        left, right = max(i - 1, 0), min(i + 1, last)
        if d[i] > d[left] or d[i] > d[right]:
            continue
        if i in (0, last) and s[i] < tol:
            found.append(ZeroEvent(float(ts[i]), float(s[i])))
            continue
        xtol = 1e-13 * max(1.0, abs(ts[i]))
        t_star, _ = _golden_min(indicator, ts[left], ts[right], xtol)
        found.append(ZeroEvent(float(t_star), smin(t_star)))

    found.sort(key=lambda e: e.time)
    merged: List[ZeroEvent] = []
    for ev in found:
        if merged and abs(ev.time - merged[-1].time) <= 1e-9 * max(1.0, abs(ev.time)):
            if ev.sigma_min < merged[-1].sigma_min:
                merged[-1] = ev
            continue
        merged.append(ev)
    zeros = [e for e in merged if e.sigma_min < tol]
    near = [e for e in merged if tol <= e.sigma_min < near_tol]
    return (zeros, near) if return_near else zeros


def hamiltonian_residual(traj: Trajectory, sys, ts) -> np.ndarray:
    """Relative residual of the Hamiltonian equations along ``traj`` (central differences)."""
    out = []
    for t in ts:
        h = max(1.0, abs(t)) * np.finfo(float).eps ** (1.0 / 3.0)
        Pp, Sp = traj.at(t + h)
        Pm, Sm = traj.at(t - h)
        Phi, Psi = traj.at(t)
        A, B, C = sys.matrices(t)
        r1 = (Pp - Pm) / (2 * h) - (A @ Phi + B @ Psi)
        r2 = (Sp - Sm) / (2 * h) - (C @ Phi - A.conj().T @ Psi)
        scale = 1.0 + np.linalg.norm(Phi) + np.linalg.norm(Psi)
        out.append(float(np.hypot(np.linalg.norm(r1), np.linalg.norm(r2)) / scale))
    return np.array(out)


# --------------------------------------------------------------------------
# Riccati equations
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class BlowUp:
    time: float
    norm: float
    reason: str = "norm threshold"


@dataclass
class RiccatiPath:
    """Samples of a Riccati solution with its dense evaluator.

    ``values`` has shape ``(N,)`` for scalar paths and ``(N, n, n)`` for
    matrix paths. When ``blow_up`` is set the path ends at the blow-up time.
    """

    t: np.ndarray
    values: np.ndarray
    func: Callable[[float], object] = field(repr=False)
    blow_up: Optional[BlowUp] = None

    @property
    def span(self) -> Tuple[float, float]:
        return float(self.t[0]), float(self.t[-1])

    def __call__(self, t: float):
        return self.func(t)


def _blowup_time(norm_at, ta: float, tb: float, level: float) -> float:
    g = lambda t: norm_at(t) - level  # noqa: E731
    if g(ta) < 0 < g(tb):
        return brentq(g, ta, tb, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    return tb


def _riccati_run(fun, t0, t1, y0, blowup, norm_of, rtol, atol):
    run = _step_through(fun, t0, t1, y0, rtol, atol, stop=lambda t, y: norm_of(y) > blowup)
    event = None
    if run.failed_at is not None:
        event = BlowUp(run.failed_at, float(norm_of(run.y[-1])), "step size underflow")
    elif norm_of(run.y[-1]) > blowup:
        tb = _blowup_time(lambda t: norm_of(run.dense(t)), run.t[-2], run.t[-1], blowup)
        event = BlowUp(float(tb), float(blowup))
    return run, event


def integrate_matrix_riccati(sys, Z0, span, blowup_norm: float = BLOWUP_NORM,
                             rtol: float = RTOL, atol: float = ATOL) -> RiccatiPath:
    """Integrate ``Z' = -Z B Z - A^* Z - Z A + C`` from a Hermitian ``Z0``.

    The right-hand side is projected onto Hermitian matrices, which keeps
    every step exactly Hermitian. Integration stops at the first time
    ``||Z||_F`` exceeds ``blowup_norm`` (or the step size collapses) and the
    event is recorded in ``blow_up``.
    """
    n = sys.n
    Z0 = np.asarray(Z0, dtype=complex).reshape(n, n)
    Z0 = 0.5 * (Z0 + Z0.conj().T)

    def fun(t, y):
        A, B, C = sys.matrices(t)
        Z = y.reshape(n, n)
        F = -Z @ B @ Z - A.conj().T @ Z - Z @ A + C
        return (0.5 * (F + F.conj().T)).ravel()

    run, event = _riccati_run(fun, float(span[0]), float(span[1]), Z0.ravel(), blowup_norm,
                              np.linalg.norm, rtol, atol)
    dense = run.dense

    def func(t):
        Z = dense(t).reshape(n, n)
        return 0.5 * (Z + Z.conj().T)

    values = run.y.reshape(-1, n, n)
    values = 0.5 * (values + np.conj(np.swapaxes(values, -1, -2)))
    return RiccatiPath(run.t, values, func, event)


def integrate_scalar_riccati(f, g, h, y0: float, span, blowup: float = BLOWUP_NORM,
                             rtol: float = RTOL, atol: float = ATOL) -> RiccatiPath:
    """Integrate ``y' + f y^2 + g y + h = 0``; stops when ``|y| > blowup``."""

    def fun(t, y):
        return np.array([-(f(t) * y[0] * y[0] + g(t) * y[0] + h(t))])

    run, event = _riccati_run(fun, float(span[0]), float(span[1]), np.array([float(y0)]), blowup,
                              lambda y: abs(float(np.ravel(y)[0])), rtol, atol)
    dense = run.dense
    return RiccatiPath(run.t, run.y[:, 0].copy(), lambda t: float(dense(t)[0]), event)


def trajectory_to_riccati(traj: Trajectory, span=None) -> RiccatiPath:
    """``Z = Psi Phi^{-1}`` along a trajectory, on a span where ``Phi`` is nonsingular."""
    a, b = traj.span if span is None else span
    mask = (traj.t >= a) & (traj.t <= b)
    ts = traj.t[mask]
    if ts.size == 0 or ts[0] > a:
        ts = np.concatenate([[a], ts])
    if ts[-1] < b:
        ts = np.append(ts, b)

    def func(t):
        Phi, Psi = traj.at(t)
        Z = np.linalg.solve(Phi.T, Psi.T).T
        return 0.5 * (Z + Z.conj().T)

    return RiccatiPath(ts, np.array([func(t) for t in ts]), func, None)


def riccati_to_hamiltonian(Z: RiccatiPath, sys, Phi1, span=None, rtol: float = RTOL,
                           atol: float = ATOL) -> Trajectory:
    """Rebuild ``(Phi, Psi)`` from a Riccati solution.

    Integrates ``Phi' = (A + B Z) Phi`` from ``Phi1`` and sets ``Psi = Z Phi``.
    """
    n = sys.n
    a, b = Z.span if span is None else span
    if Z.blow_up is not None:
        b = min(b, Z.blow_up.time)
    Phi1 = np.asarray(Phi1, dtype=complex).reshape(n, n)

    def fun(t, y):
        A, B, _ = sys.matrices(t)
        return ((A + B @ Z(t)) @ y.reshape(n, n)).ravel()

    run = _step_through(fun, float(a), float(b), Phi1.ravel(), rtol, atol)
    if run.failed_at is not None:
        raise StepSizeUnderflow(f"integration stalled: {run.message}", run.failed_at)
    dense = run.dense

    def state(ts):
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        Phi = dense(ts).T.reshape(-1, n, n)
        Psi = np.array([Z(t) @ P for t, P in zip(ts, Phi)])
        return Phi, Psi

    Phi = run.y.reshape(-1, n, n)
    Psi = np.array([Z(t) @ P for t, P in zip(run.t, Phi)])
    return Trajectory(t=run.t, Phi=Phi, Psi=Psi, state=state)


@dataclass
class ScalarTrace:
    t: np.ndarray
    values: np.ndarray
    func: Callable[[float], float] = field(repr=False)

    def __call__(self, t: float) -> float:
        return self.func(t)


def riccati_to_scalar_solution(y: RiccatiPath, p11, p12, phi1: float) -> ScalarTrace:
    """``phi(t) = phi1 exp(int_{t1}^t [p12 y + p11])`` for the 2x2 system ``(p11, p12)``."""
    if phi1 == 0:
        raise ValueError("phi1 must be nonzero")
    a, b = y.span
    if y.blow_up is not None:
        b = min(b, y.blow_up.time)
    expo = CumulativeIntegral(lambda t: p12(t) * y(t) + p11(t), a, b)

    def func(t):
        return phi1 * math.exp(expo(t))

    ts = y.t[y.t <= b]
    return ScalarTrace(ts, np.array([func(t) for t in ts]), func)


def riccati_to_second_order(y: RiccatiPath, phi1: float) -> ScalarTrace:
    """Solution of ``phi'' + p phi' + q phi = 0`` from a solution of ``y' + y^2 + p y + q = 0``.

    ``phi = phi1 exp(int y)``, i.e. ``y = phi'/phi``; the damping ``p``
    enters only through ``y``.
    """
    zero = lambda t: 0.0  # noqa: E731
    one = lambda t: 1.0  # noqa: E731
    return riccati_to_scalar_solution(y, zero, one, phi1)


# --------------------------------------------------------------------------
# 2x2 scalar systems
# --------------------------------------------------------------------------


@dataclass
class ScalarTrajectory:
    t: np.ndarray
    phi: np.ndarray
    psi: np.ndarray
    zeros: List[float]
    dense: OdeSolution = field(repr=False)

    def at(self, t: float):
        v = self.dense(t)
        return float(v[0]), float(v[1])


def integrate_scalar_system(s, phi0: float, psi0: float, span, rtol: float = RTOL,
                            atol: float = ATOL, samples_per_step: int = SAMPLES_PER_STEP) -> ScalarTrajectory:
    """Integrate a 2x2 scalar system; zeros of ``phi`` located by sign changes."""

    def fun(t, y):
        return s.rhs(t) @ y

    t0, t1 = float(span[0]), float(span[1])
    run = _step_through(fun, t0, t1, np.array([phi0, psi0], dtype=float), rtol, atol)
    if run.failed_at is not None:
        raise StepSizeUnderflow(f"integration stalled: {run.message}", run.failed_at)
    dense = run.dense
    frac = np.linspace(0.0, 1.0, samples_per_step + 1)[:-1]
    ts = np.append((run.t[:-1, None] + np.diff(run.t)[:, None] * frac).ravel(), run.t[-1])
    phi = dense(ts)[0]
    zeros = [float(t) for t, v in zip(ts, phi) if v == 0.0]
    for i in np.flatnonzero(phi[:-1] * phi[1:] < 0):
        zeros.append(float(brentq(lambda t: dense(t)[0], ts[i], ts[i + 1], xtol=1e-14)))
    return ScalarTrajectory(run.t, run.y[:, 0].copy(), run.y[:, 1].copy(), sorted(zeros), dense)
