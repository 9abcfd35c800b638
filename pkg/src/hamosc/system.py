"""Linear matrix Hamiltonian systems ``Phi' = A Phi + B Psi, Psi' = C Phi - A^* Psi``.

A :class:`SystemSpec` stores the three coefficient matrices as grids of
expressions. Real entries are single expressions; complex entries are
``[re, im]`` pairs. Systems are usually read from JSON::

    {
      "n": 2, "t0": 0,
      "A": [["0", "0"], ["0", "0"]],
      "B": [["1", "0"], ["0", "1"]],
      "C": [["-1", "0"], ["0", "-1"]],
      "name": "harmonic"
    }
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import exprlang
from .errors import PreconditionError

HERMITIAN_RTOL = 1e-9
DIAGONAL_TOL = 1e-12
VALIDATION_POINTS = 64


class ParseError(PreconditionError):
    """An entry of a system file is malformed; carries its coordinates."""

    def __init__(self, message: str, matrix: str = "", row: int = -1, col: int = -1, offset=None):
        self.matrix, self.row, self.col, self.offset = matrix, row, col, offset
        where = f"{matrix}[{row}][{col}]: " if matrix else ""
        super().__init__(where + message)

    def to_dict(self) -> dict:
        d = super().to_dict()
        d.update(matrix=self.matrix, row=self.row, col=self.col, offset=self.offset)
        return d


class HermitianViolation(PreconditionError):
    def __init__(self, message: str, matrix: str, t: float, defect: float):
        self.matrix, self.t, self.defect = matrix, t, defect
        super().__init__(message)

    def to_dict(self) -> dict:
        d = super().to_dict()
        d.update(matrix=self.matrix, t=self.t, defect=self.defect)
        return d


class DimensionMismatch(PreconditionError):
    pass


@dataclass(frozen=True)
class Entry:
    re: exprlang.Expr
    im: Optional[exprlang.Expr] = None

    def __call__(self, t: float) -> complex:
        if self.im is None:
            return complex(self.re(t))
        return complex(self.re(t), self.im(t))

    def depends_on_t(self) -> bool:
        return self.re.depends_on_t() or (self.im is not None and self.im.depends_on_t())

    def to_json(self):
        if self.im is None:
            return exprlang.serialize(self.re)
        return [exprlang.serialize(self.re), exprlang.serialize(self.im)]


class ExprMatrix:
    """An ``n x n`` matrix of expression entries, callable as ``M(t)``."""

    def __init__(self, entries: Sequence[Sequence[Entry]], name: str = ""):
        self.name = name
        self.entries = [list(row) for row in entries]
        self.n = len(self.entries)
        self._cells = [
            (i, j, e) for i, row in enumerate(self.entries) for j, e in enumerate(row)
        ]
        self._const = None
        if not any(e.depends_on_t() for _, _, e in self._cells):
            self._const = self._eval(0.0)
            self._const.setflags(write=False)

    def _eval(self, t: float) -> np.ndarray:
        M = np.empty((self.n, self.n), dtype=complex)
        for i, j, e in self._cells:
            M[i, j] = e(t)
        return M

    def __call__(self, t: float) -> np.ndarray:
        if self._const is not None:
            return self._const.copy()
        return self._eval(float(t))

    @property
    def is_constant(self) -> bool:
        return self._const is not None

    def to_json(self):
        return [[e.to_json() for e in row] for row in self.entries]


def _parse_entry(raw, matrix: str, i: int, j: int) -> Entry:
    def one(src):
        if isinstance(src, bool) or not isinstance(src, (str, int, float)):
            raise ParseError(f"entry must be an expression string, got {type(src).__name__}", matrix, i, j)
        if not isinstance(src, str):
            src = repr(float(src))
        try:
            return exprlang.parse(src)
        except exprlang.ExprSyntaxError as exc:
            raise ParseError(str(exc), matrix, i, j, exc.offset) from None

    if isinstance(raw, (list, tuple)):
        if len(raw) != 2:
            raise ParseError("complex entry must be [re, im]", matrix, i, j)
        return Entry(one(raw[0]), one(raw[1]))
    return Entry(one(raw))


def _parse_matrix(raw, n: int, name: str) -> ExprMatrix:
    if not isinstance(raw, (list, tuple)) or len(raw) != n:
        raise DimensionMismatch(f"{name} must have {n} rows")
    rows = []
    for i, row in enumerate(raw):
        if not isinstance(row, (list, tuple)) or len(row) != n:
            raise DimensionMismatch(f"{name}[{i}] must have {n} entries")
        rows.append([_parse_entry(v, name, i, j) for j, v in enumerate(row)])
    return ExprMatrix(rows, name)


@dataclass
class SystemSpec:
    """Coefficients of a matrix Hamiltonian system on ``[t0, +inf)``.

    ``A``, ``B`` and ``C`` are callables returning complex ``n x n`` arrays;
    :class:`ExprMatrix` instances when loaded from text, arbitrary callables
    when built programmatically.
    """

    n: int
    t0: float
    A: object
    B: object
    C: object
    name: str = ""
    description: str = ""
    diagonal_B: Optional[bool] = None
    zero_A: Optional[bool] = None
    meta: dict = field(default_factory=dict)

    @classmethod
    def from_entries(cls, n, t0, A, B, C, name="", description="") -> "SystemSpec":
        """Build from nested lists of expression strings (or ``[re, im]`` pairs)."""
        if not isinstance(n, int) or isinstance(n, bool) or n < 1:
            raise DimensionMismatch("n must be an integer >= 1")
        mats = {k: _parse_matrix(v, n, k) for k, v in (("A", A), ("B", B), ("C", C))}
        return cls(n=n, t0=float(t0), name=name, description=description, **mats)

    def matrices(self, t: float):
        return np.asarray(self.A(t)), np.asarray(self.B(t)), np.asarray(self.C(t))

    def validate(self, span=None, points: int = VALIDATION_POINTS) -> "SystemSpec":
        """Check Hermitian ``B``, ``C`` on a sample grid; record structure flags."""
        a, b = span if span is not None else (self.t0, self.t0 + 10.0)
        grid = np.linspace(a, b, points)
        diag_B, zero_A = True, True
        for t in grid:
            A, B, C = self.matrices(t)
            for label, M in (("B", B), ("C", C)):
                if M.shape != (self.n, self.n):
                    raise DimensionMismatch(f"{label}(t) has shape {M.shape}, expected {(self.n, self.n)}")
                d = float(np.linalg.norm(M - M.conj().T))
                if d > HERMITIAN_RTOL * max(1.0, float(np.linalg.norm(M))):
                    raise HermitianViolation(
                        f"{label}(t) is not Hermitian at t={t:.6g} (defect {d:.3e})", label, float(t), d
                    )
            off = B - np.diag(np.diag(B))
            if np.linalg.norm(off) > DIAGONAL_TOL:
                diag_B = False
            if np.linalg.norm(A) > DIAGONAL_TOL:
                zero_A = False
        self.diagonal_B, self.zero_A = diag_B, zero_A
        self.meta["validation_span"] = [float(a), float(b)]
        return self

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "t0": self.t0,
            "A": self.A.to_json(),
            "B": self.B.to_json(),
            "C": self.C.to_json(),
            "name": self.name,
            "description": self.description,
        }


def system_from_dict(data: dict, span=None) -> SystemSpec:
    if not isinstance(data, dict):
        raise ParseError("system file must hold a JSON object")
    for key in ("n", "A", "B", "C"):
        if key not in data:
            raise ParseError(f"missing field {key!r}")
    t0 = data.get("t0", 0.0)
    if isinstance(t0, bool) or not isinstance(t0, (int, float)):
        raise ParseError("t0 must be a number")
    sys = SystemSpec.from_entries(
        data["n"], t0, data["A"], data["B"], data["C"],
        name=str(data.get("name", "")), description=str(data.get("description", "")),
    )
    try:
        return sys.validate(span)
    except exprlang.EvalError as exc:
        raise ParseError(f"entry cannot be evaluated on the validation grid: {exc}") from None


def load_system(path, span=None) -> SystemSpec:
    """Read and validate a system file.

    Raises
    ------
    ParseError
        Unreadable JSON or malformed entry (with matrix name and coordinates).
    HermitianViolation
        ``B`` or ``C`` is not Hermitian on the 64-point validation grid.
    DimensionMismatch
        Matrix shapes disagree with ``n``.
    """
    p = Path(path)
    try:
        data = json.loads(p.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ParseError(f"cannot read {p}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return system_from_dict(data, span)


def constant_system(A, B, C, t0: float = 0.0, name: str = "") -> SystemSpec:
    """System with constant numeric coefficients (mostly for tests and demos)."""
    A, B, C = (np.array(M, dtype=complex) for M in (A, B, C))
    n = A.shape[0]
    sys = SystemSpec(
        n=n, t0=t0, A=lambda t: A.copy(), B=lambda t: B.copy(), C=lambda t: C.copy(), name=name
    )
    return sys.validate((t0, t0 + 1.0), points=2)


__all__ = [
    "SystemSpec",
    "ExprMatrix",
    "Entry",
    "ParseError",
    "HermitianViolation",
    "DimensionMismatch",
    "load_system",
    "system_from_dict",
    "constant_system",
]
