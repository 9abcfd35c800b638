"""Oscillation checks for linear matrix Hamiltonian systems with ``B(t) >= 0``.

Modules
-------
exprlang    expression language for time-dependent coefficients
system      system files and coefficient evaluation
matfun      square roots, pseudoinverses, eigenvector tracking
reduction   scalar problems extracted from the matrix system
criteria    sufficient oscillation criteria and pipelines
dynamics    integration, zero detection, Riccati equations
oracle      comparison condition, identity residuals, empirical oracle
cli         command-line front end (``hamosc``)
"""

from __future__ import annotations

__version__ = "0.1.0"

from .criteria import CriterionReport, Verdict, Window, run_criteria
from .errors import HamoscError, PreconditionError
from .system import SystemSpec, load_system, system_from_dict

__all__ = [
    "__version__",
    "CriterionReport",
    "Verdict",
    "Window",
    "run_criteria",
    "HamoscError",
    "PreconditionError",
    "SystemSpec",
    "load_system",
    "system_from_dict",
]
