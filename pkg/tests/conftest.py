from __future__ import annotations

import functools
import json

import numpy as np
import pytest

from hamosc.system import SystemSpec, constant_system, system_from_dict


def harmonic_dict(n=2):
    zero = [["0"] * n for _ in range(n)]
    eye = [["1" if i == j else "0" for j in range(n)] for i in range(n)]
    neg = [["-1" if i == j else "0" for j in range(n)] for i in range(n)]
    return {"name": "harmonic", "n": n, "t0": 0, "A": zero, "B": eye, "C": neg}


def singular_b_dict():
    return {
        "name": "singular-b",
        "n": 2,
        "t0": 0,
        "A": [["0", "0"], ["0", "0"]],
        "B": [["1", "0"], ["0", "0"]],
        "C": [["-1", "0"], ["0", "0"]],
    }


def rotating_dict():
    return {
        "name": "rotating",
        "n": 2,
        "t0": 0,
        "A": [["0.1*sin(t)", "0.2"], ["-0.1", "0"]],
        "B": [["2 + cos(t)", ["0.5*sin(t)", "0.3"]], [["0.5*sin(t)", "-0.3"], "2 - cos(t)"]],
        "C": [["-3", "0.5"], ["0.5", "-2 - sin(t)^2"]],
    }


@pytest.fixture
def harmonic():
    return system_from_dict(harmonic_dict(), (0.0, 20.0))


@pytest.fixture
def singular_b():
    return system_from_dict(singular_b_dict(), (0.0, 20.0))


@pytest.fixture
def rotating():
    return system_from_dict(rotating_dict(), (0.0, 10.0))


@pytest.fixture
def write_system(tmp_path):
    def write(data, name="system.json"):
        p = tmp_path / name
        p.write_text(json.dumps(data) if not isinstance(data, str) else data, encoding="utf-8")
        return str(p)

    return write


def random_system(seed: int) -> SystemSpec:
    """Seeded system with n <= 4, complex time-dependent A and C, PSD B."""
    rng = np.random.default_rng(seed)
    n = 1 + seed % 4

    def cplx():
        return rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))

    def herm(M):
        return 0.5 * (M + M.conj().T)

    A0, A1 = 0.3 * cplx(), 0.2 * cplx()
    G = cplx()
    B0 = G @ G.conj().T / n
    C0, C1 = 0.5 * herm(cplx()), 0.2 * herm(cplx())
    return SystemSpec(
        n=n, t0=0.0,
        A=lambda t: A0 + np.cos(t) * A1,
        B=lambda t: B0.copy(),
        C=lambda t: C0 + np.sin(t) * C1,
        name=f"random-{seed}",
    )


def random_hermitian(rng, n):
    H = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return 0.5 * (H + H.conj().T)




@functools.lru_cache(maxsize=1)
def comparison_corpus():
    """Comparison cases ``(label, ComparisonInput)`` where the first equation is the easier one.

    Each case pairs ``y' + f y^2 + g y + h2 = 0`` (solved for ``y2``) with
    the same equation (ease 0) or with ``h1 = h2 - 1`` (ease 1). With ease 0
    the span stops short of the blow-up of ``y2``; with ease 1 it runs to it.
    """
    from hamosc.dynamics import integrate_scalar_riccati
    from hamosc.oracle import ComparisonInput

    fs = {"1": lambda t: 1.0, "1+sin/2": lambda t: 1.0 + 0.5 * np.sin(t), "exp(-t)": lambda t: np.exp(-t)}
    gs = {"0": lambda t: 0.0, "0.3": lambda t: 0.3, "cos": lambda t: np.cos(t)}
    hs = {"1": lambda t: 1.0, "2+sin": lambda t: 2.0 + np.sin(t), "t/2": lambda t: 0.5 * t}
    cases = []
    for (fl, f), (gl, g), (hl, h2) in ((a, b, c) for a in fs.items() for b in gs.items() for c in hs.items()):
        for gamma0 in (0.0, 1.0):
            y2 = integrate_scalar_riccati(f, g, h2, gamma0, (0.0, 4.0))
            end = y2.blow_up.time if y2.blow_up else 4.0
            for ease in (0.0, 1.0):
                h1 = (lambda h2, e: (lambda t: h2(t) - e))(h2, ease)
                tau0 = None if ease > 0 else 0.95 * end
                label = f"f={fl} g={gl} h2={hl} gamma0={gamma0} ease={ease}"
                cases.append((label, ComparisonInput(f, g, h1, f, g, h2, y2, gamma0, tau0=tau0)))
    return tuple(cases)
