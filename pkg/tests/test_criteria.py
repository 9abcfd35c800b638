from __future__ import annotations

import math

import numpy as np
import pytest
from conftest import harmonic_dict
from hypothesis import given, settings
from hypothesis import strategies as st

from hamosc.criteria import (
    CriterionReport,
    Verdict,
    Window,
    check_cor21,
    check_cor22,
    check_thm32,
    check_thm33,
    checkpoints,
    pipeline_thm21,
    pipeline_thm23,
    run_criteria,
)
from hamosc.errors import PreconditionFailed
from hamosc.oracle import OracleVerdict, empirical_oracle
from hamosc.reduction import ScalarSystem2x2
from hamosc.system import constant_system, system_from_dict


def const(v):
    return lambda t: v


def scalar(p11=0.0, p12=1.0, p21=-1.0, p22=0.0):
    wrap = lambda v: v if callable(v) else const(v)  # noqa: E731
    return ScalarSystem2x2(wrap(p11), wrap(p12), wrap(p21), wrap(p22))


HARMONIC = constant_system(np.zeros((2, 2)), np.eye(2), -np.eye(2))
SINGULAR = constant_system(np.zeros((2, 2)), np.diag([1.0, 0.0]), np.diag([-1.0, 0.0]))


# -- window criterion on a scalar system ------------------------------------


def test_window_at_exact_pi_is_not_proven():
    rep = check_thm33(scalar(), Window(0.0, math.pi))
    assert abs(rep.margin) <= rep.diagnostics["error_bound"]
    assert rep.verdict is Verdict.INCONCLUSIVE
    assert rep.diagnostics["reason"] == "integral within error of pi"


def test_window_below_pi():
    rep = check_thm33(scalar(), Window(0.0, 3.0))
    assert rep.verdict is Verdict.INCONCLUSIVE
    assert rep.margin == pytest.approx(3.0 - math.pi, abs=1e-12)


def test_window_flips_across_pi():
    assert check_thm33(scalar(), Window(0.0, math.pi - 1e-3)).verdict is Verdict.INCONCLUSIVE
    assert check_thm33(scalar(), Window(0.0, math.pi + 1e-3)).verdict is Verdict.PROVEN


def test_window_zero_p12():
    rep = check_thm33(scalar(p12=0.0), Window(0.0, 10.0))
    assert rep.verdict is Verdict.INCONCLUSIVE and rep.margin == pytest.approx(-math.pi)


def test_window_negative_p12_fails_precondition():
    with pytest.raises(PreconditionFailed):
        check_thm33(scalar(p12=lambda t: 1.0 - t), Window(0.0, 2.0))


def test_window_weight_uses_E():
    # p11 = 1, p22 = 0, p12 = e^t, p21 = -e^{-t}: both weighted branches equal 1
    s = scalar(p11=1.0, p12=math.exp, p21=lambda t: -math.exp(-t))
    rep = check_thm33(s, Window(0.0, 4.0))
    assert rep.diagnostics["integral"] == pytest.approx(4.0, abs=1e-9)
    assert rep.verdict is Verdict.PROVEN


def test_window_integral_equals_length():
    for L in (0.5, 2.0, math.pi, 7.25):
        rep = check_thm33(scalar(), Window(1.0, 1.0 + L))
        assert abs(rep.diagnostics["integral"] - L) <= 1e-9


@settings(max_examples=30, deadline=None)
@given(st.floats(0.1, 5.0), st.floats(0.1, 5.0), st.floats(0.1, 3.0))
def test_window_monotone_in_coefficients(k12, k21, extra):
    # raising p12 or lowering p21 can only raise the integral
    w = Window(0.0, 2.0)
    base = check_thm33(scalar(p12=k12, p21=-k21), w).diagnostics["integral"]
    up12 = check_thm33(scalar(p12=k12 + extra, p21=-k21), w).diagnostics["integral"]
    down21 = check_thm33(scalar(p12=k12, p21=-k21 - extra), w).diagnostics["integral"]
    assert up12 >= base - 1e-12 and down21 >= base - 1e-12
    assert base == pytest.approx(2.0 * min(k12, k21), rel=1e-9)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.2, 4.0), st.floats(0.5, 3.0))
def test_window_scaling_in_time(c, L):
    # p12 = c, p21 = -c on [0, L] gives integral c L
    rep = check_thm33(scalar(p12=c, p21=-c), Window(0.0, L))
    assert rep.diagnostics["integral"] == pytest.approx(c * L, rel=1e-9)


# -- ray criterion on a scalar system ----------------------------------------


def test_checkpoints_are_geometric():
    T = checkpoints(0.0, 64.0, 4)
    assert T.tolist() == [8.0, 16.0, 32.0, 64.0]
    with pytest.raises(ValueError):
        checkpoints(1.0, 1.0, 4)


def test_ray_harmonic_diverges():
    rep = check_thm32(scalar(), 100.0)
    assert rep.verdict is Verdict.DIVERGENCE
    assert rep.diagnostics["I1"][-1] == pytest.approx(100.0, abs=1e-8)
    assert rep.diagnostics["I2"][-1] == pytest.approx(100.0, abs=1e-8)


def test_ray_decaying_coefficients_inconclusive():
    s = scalar(p12=lambda t: math.exp(-t), p21=lambda t: -math.exp(-t))
    rep = check_thm32(s, 100.0)
    assert rep.verdict is Verdict.INCONCLUSIVE
    assert max(rep.diagnostics["I1"]) <= 1.0


def test_ray_zero_p12_inconclusive():
    assert check_thm32(scalar(p12=0.0), 100.0).verdict is Verdict.INCONCLUSIVE


def test_ray_never_proves():
    for horizon in (10.0, 1000.0):
        assert check_thm32(scalar(p12=5.0, p21=-5.0), horizon).verdict is not Verdict.PROVEN
    with pytest.raises(ValueError):
        CriterionReport("thm3.2", None, Verdict.PROVEN, 1.0)


# -- corollaries -------------------------------------------------------------


def test_cor22_examples():
    assert check_cor22(HARMONIC, 1, Window(0.0, math.pi + 1e-3)).verdict is Verdict.PROVEN
    rep = check_cor22(HARMONIC, 1, Window(0.0, math.pi - 0.1))
    assert rep.verdict is Verdict.INCONCLUSIVE
    assert rep.margin == pytest.approx(-0.1, abs=1e-9)
    assert check_cor22(SINGULAR, 2, Window(0.0, 10.0)).verdict is Verdict.INCONCLUSIVE


def test_cor22_preconditions():
    rotated = constant_system(np.zeros((2, 2)), np.array([[1.0, 0.5], [0.5, 1.0]]), -np.eye(2))
    with pytest.raises(PreconditionFailed):
        check_cor22(rotated, 1, Window(0.0, 4.0))
    drift = constant_system(np.eye(2), np.eye(2), -np.eye(2))
    with pytest.raises(PreconditionFailed):
        check_cor22(drift, 1, Window(0.0, 4.0))


def test_cor21_examples():
    assert check_cor21(HARMONIC, 1, 100.0).verdict is Verdict.DIVERGENCE
    data = harmonic_dict()
    data["B"][0][0] = "1/(1+t)^2"
    rep = check_cor21(system_from_dict(data), 1, 100.0)
    assert rep.verdict is Verdict.INCONCLUSIVE
    assert rep.diagnostics["I1"][-1] < 1.0
    zero = constant_system(np.zeros((2, 2)), np.zeros((2, 2)), np.zeros((2, 2)))
    assert check_cor21(zero, 1, 100.0).verdict is Verdict.INCONCLUSIVE


# -- pipelines ---------------------------------------------------------------


def test_sqrt_pipeline_harmonic():
    rep = pipeline_thm21(HARMONIC, 1, window=Window(0.0, math.pi + 1e-3), grid_points=65)
    assert rep.criterion == "thm2.2" and rep.verdict is Verdict.PROVEN
    rep = pipeline_thm21(HARMONIC, 1, window=Window(0.0, math.pi), grid_points=65)
    assert rep.verdict is Verdict.INCONCLUSIVE


def test_sqrt_pipeline_repulsive_C():
    sys = constant_system(np.zeros((2, 2)), np.eye(2), np.eye(2))
    rep = pipeline_thm21(sys, 1, window=Window(0.0, 50.0), grid_points=65)
    assert rep.verdict is Verdict.INCONCLUSIVE
    assert rep.margin < 0
    assert rep.diagnostics["theta_range"] == [1.0, 1.0]


def test_sqrt_pipeline_unsolvable_reports_reason():
    sys = constant_system(np.array([[0.0, 0.0], [1.0, 0.0]]), np.diag([1.0, 0.0]), -np.eye(2))
    rep = pipeline_thm21(sys, 1, window=Window(0.0, 4.0), grid_points=65)
    assert rep.verdict is Verdict.INCONCLUSIVE
    assert "no solution" in rep.diagnostics["reason"]
    assert rep.diagnostics["first_unsolvable_t"] == 0.0


def test_unitary_pipeline_singular_B():
    rep = pipeline_thm23(SINGULAR, 1, window=Window(0.0, math.pi + 1e-3), grid_points=65)
    assert rep.criterion == "thm2.4" and rep.verdict is Verdict.PROVEN
    assert rep.diagnostics["guard_activity"] == {"2": 1.0}
    rep = pipeline_thm23(SINGULAR, 2, window=Window(0.0, math.pi + 1e-3), grid_points=65)
    assert rep.verdict is Verdict.INCONCLUSIVE


def test_unitary_pipeline_ray():
    rep = pipeline_thm23(HARMONIC, 1, horizon=100.0, grid_points=129)
    assert rep.criterion == "thm2.3" and rep.verdict is Verdict.DIVERGENCE


def test_unitary_pipeline_negative_eigenvalue_is_inconclusive():
    sys = constant_system(np.zeros((2, 2)), np.diag([1.0, -0.5]), -np.eye(2))
    rep = pipeline_thm23(sys, 1, window=Window(0.0, 4.0), grid_points=33)
    assert rep.verdict is Verdict.INCONCLUSIVE
    assert "b_m >= 0" in rep.diagnostics["reason"]


def test_pipelines_agree_on_scaled_B():
    # B = 2I, C = -I: the unitary form has p12 = 2, p21 = -1; the sqrt form
    # has p12 = 1, p21 = theta = -2. Both integrands are min(2, 1) = 1.
    data = harmonic_dict()
    data["B"] = [["2", "0"], ["0", "2"]]
    sys = system_from_dict(data)
    for L, verdict in ((2.5, Verdict.INCONCLUSIVE), (3.2, Verdict.PROVEN)):
        w = Window(0.0, L)
        r21 = pipeline_thm21(sys, 1, window=w, grid_points=65)
        r23 = pipeline_thm23(sys, 1, window=w, grid_points=65)
        assert r21.verdict is verdict and r23.verdict is verdict
        assert r21.margin == pytest.approx(L - math.pi, abs=1e-8)
        assert r23.margin == pytest.approx(L - math.pi, abs=1e-8)


# -- orchestration -----------------------------------------------------------


def test_run_criteria_default_selection_and_order():
    reps = run_criteria(HARMONIC, window=Window(0.0, math.pi + 1e-3), grid_points=65)
    assert [(r.criterion, r.j) for r in reps] == [
        ("thm2.2", 1), ("thm2.2", 2), ("thm2.4", 1), ("thm2.4", 2), ("cor2.2", 1), ("cor2.2", 2),
    ]
    assert all(r.verdict is Verdict.PROVEN for r in reps)
    parallel = run_criteria(HARMONIC, window=Window(0.0, math.pi + 1e-3), grid_points=65, workers=4)
    assert [r.to_dict() for r in parallel] == [r.to_dict() for r in reps]


def test_run_criteria_skips_corollaries_for_non_diagonal_B():
    sys = constant_system(np.zeros((2, 2)), np.array([[2.0, 0.5], [0.5, 2.0]]), -np.eye(2))
    reps = run_criteria(sys, window=Window(0.0, 3.0), grid_points=33)
    assert {r.criterion for r in reps} == {"thm2.2", "thm2.4"}


def test_run_criteria_errors():
    with pytest.raises(PreconditionFailed):
        run_criteria(HARMONIC, criteria=["cor2.1"], window=Window(0.0, 1.0))
    with pytest.raises(PreconditionFailed):
        run_criteria(HARMONIC, criteria=["cor2.2"], window=Window(0.0, 1.0), js=[3])
    with pytest.raises(ValueError):
        Window(1.0, 1.0)


def test_reports_serialize():
    rep = run_criteria(HARMONIC, criteria=["cor2.2"], window=Window(0.0, 3.0), js=[1])[0]
    d = rep.to_dict()
    assert d["verdict"] == "Inconclusive" and d["criterion"] == "cor2.2" and d["j"] == 1


# -- soundness against simulation -------------------------------------------


@pytest.mark.parametrize("sys,w", [
    (HARMONIC, Window(0.0, math.pi + 1e-3)),
    (SINGULAR, Window(0.0, math.pi + 1e-3)),
    (constant_system(np.zeros((1, 1)), [[4.0]], [[-4.0]]), Window(0.5, 0.5 + math.pi / 4 + 1e-3)),
])
def test_proven_verdicts_are_confirmed_by_simulation(sys, w):
    reps = run_criteria(sys, window=w, grid_points=65)
    assert any(r.verdict is Verdict.PROVEN for r in reps)
    res = empirical_oracle(sys, window=Window(w.a, w.b + 1e-6), trials=20, seed=0)
    assert res.verdict is OracleVerdict.ALL_ZERO
