"""Command-line front end.

Subcommands::

    hamosc check    --system F (--window A B | --horizon T) [--j J] [--criteria LIST]
    hamosc simulate --system F (--horizon T | --window A B) [--trials K] [--seed S]
    hamosc validate --system F --horizon T

Reports are JSON on standard output (or ``--output``); errors are JSON on
standard error. Exit status: 0 success, 2 bad input or failed precondition,
1 internal or numerical failure.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import enum
import json
import math
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__, exprlang
from .criteria import DEFAULT_GRID, DEFAULT_STAGES, DEFAULT_THRESHOLD, Window, run_criteria, span_grid
from .dynamics import (
    CONSERVATIVE,
    hamiltonian_residual,
    integrate_hamiltonian,
    integrate_matrix_riccati,
    riccati_to_hamiltonian,
    trajectory_to_riccati,
)
from .errors import HamoscError, PreconditionError, PreconditionFailed
from .matfun import eigen_path, solve_eq12
from .oracle import diagonal_riccati_residual, empirical_oracle, sample_initial_data, transform_sqrt, transform_unitary
from .reduction import reduce_thm21, reduce_thm23
from .system import load_system

TOOL = "hamosc"
DEFECT_TOL = 1e-8
BLOWUP_MATCH_TOL = 1e-3
ROUNDTRIP_TOL = 1e-6
RESIDUAL_TOL = 1e-5
NONSINGULAR_FRACTION = 0.8
RESIDUAL_POINTS = 65


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, enum.Enum):
        return _jsonable(obj.value)
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isfinite(x):
            return x
        return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
    if isinstance(obj, complex):
        return [_jsonable(obj.real), _jsonable(obj.imag)]
    return obj


def _dumps(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, allow_nan=False) + "\n"


def _int_list(text: str):
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _str_list(text: str):
    return [x.strip() for x in text.split(",") if x.strip()]


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog=TOOL, description="Oscillation checks for linear matrix Hamiltonian systems.")
    p.add_argument("--version", action="version", version=f"{TOOL} {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--system", required=True, help="system file (JSON)")
        sp.add_argument("--output", help="write the JSON report here instead of stdout")
        sp.add_argument("--no-timestamp", action="store_true", help="omit the timestamp (byte-identical reruns)")

    c = sub.add_parser("check", help="run the sufficient criteria")
    common(c)
    span = c.add_mutually_exclusive_group(required=True)
    span.add_argument("--window", nargs=2, type=float, metavar=("A", "B"))
    span.add_argument("--horizon", type=float, metavar="T", help="ray [t0, T]")
    c.add_argument("--j", type=_int_list, help="indices, e.g. 1 or 1,3 (default: all)")
    c.add_argument("--criteria", type=_str_list, help="comma-separated ids (default: all applicable)")
    c.add_argument("--grid", type=int, default=DEFAULT_GRID, help="samples per span (default %(default)s)")
    c.add_argument("--stages", type=int, default=DEFAULT_STAGES)
    c.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD)
    c.add_argument("--workers", type=int, default=1)

    s = sub.add_parser("simulate", help="empirical oracle over sampled conjoined solutions")
    common(s)
    s.add_argument("--horizon", type=float, metavar="T", help="ray [t0, T]")
    s.add_argument("--window", nargs=2, type=float, metavar=("A", "B"), help="overrides --horizon")
    s.add_argument("--trials", type=int, default=20)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--trace-dir", help="directory for events.csv and per-trial trajectory CSVs")

    v = sub.add_parser("validate", help="invariant and residual suite")
    common(v)
    v.add_argument("--horizon", type=float, required=True, metavar="T", help="span [t0, T]")
    v.add_argument("--trials", type=int, default=4)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--grid", type=int, default=512)
    v.add_argument("--trace-dir", help="directory for the reference trajectory CSV")
    return p


def _window(pair) -> Optional[Window]:
    if pair is None:
        return None
    try:
        return Window(float(pair[0]), float(pair[1]))
    except ValueError as exc:
        raise PreconditionFailed(str(exc)) from None


def _span_of(t0: float, window: Optional[Window], horizon: Optional[float]):
    if window is not None:
        if window.a < t0:
            raise PreconditionFailed(f"window start {window.a} precedes t0 = {t0}")
        return window.a, window.b
    if horizon is None or not math.isfinite(horizon) or not horizon > t0:
        raise PreconditionFailed(f"horizon must be finite and exceed t0 = {t0}")
    return t0, float(horizon)


def _load(path: str, span):
    return load_system(path, span)


def _peek_t0(path: str) -> float:
    try:
        t0 = json.loads(Path(path).read_text(encoding="utf-8")).get("t0", 0.0)
        return float(t0) if isinstance(t0, (int, float)) and not isinstance(t0, bool) else 0.0
    except (OSError, ValueError, AttributeError):
        return 0.0  # load_system reports the real problem


def _trace_dir(path: Optional[str]) -> Optional[Path]:
    if path is None:
        return None
    d = Path(path)
    d.mkdir(parents=True, exist_ok=True)
    return d


def cmd_check(args) -> dict:
    window = _window(args.window)
    t0 = _peek_t0(args.system)
    span = _span_of(t0, window, args.horizon)
    sysm = _load(args.system, span)
    if args.grid < 16:
        raise PreconditionFailed("--grid must be at least 16")
    reports = run_criteria(
        sysm, criteria=args.criteria, window=window, horizon=None if window else args.horizon,
        js=args.j, grid_points=args.grid, stages=args.stages, threshold=args.threshold,
        workers=max(1, args.workers),
    )
    config = {
        "system": args.system,
        "window": [window.a, window.b] if window else None,
        "horizon": None if window else args.horizon,
        "criteria": args.criteria,
        "j": args.j,
        "grid": args.grid,
        "stages": args.stages,
        "threshold": args.threshold,
    }
    return {"config": config, "system": sysm.to_json(), "structure": _structure(sysm),
            "reports": [r.to_dict() for r in reports]}


def _structure(sysm) -> dict:
    return {"diagonal_B": sysm.diagonal_B, "zero_A": sysm.zero_A}


def cmd_simulate(args) -> dict:
    window = _window(args.window)
    if window is None and args.horizon is None:
        raise PreconditionFailed("simulate needs --horizon or --window")
    if args.trials < 1:
        raise PreconditionFailed("--trials must be >= 1")
    t0 = _peek_t0(args.system)
    span = _span_of(t0, window, args.horizon)
    sysm = _load(args.system, span)
    tdir = _trace_dir(args.trace_dir)
    res = empirical_oracle(sysm, window=Window(*span), trials=args.trials, seed=args.seed,
                           workers=max(1, args.workers), keep_trajectories=tdir is not None)
    traces = []
    if tdir is not None:
        with open(tdir / "events.csv", "w", newline="", encoding="ascii") as fh:
            res.write_events_csv(fh)
        traces.append("events.csv")
        for tr in res.trials:
            if tr.trajectory is not None:
                name = f"trial_{tr.index:03d}.csv"
                with open(tdir / name, "w", newline="", encoding="ascii") as fh:
                    tr.trajectory.write_csv(fh)
                traces.append(name)
    config = {
        "system": args.system,
        "window": list(span),
        "horizon": args.horizon,
        "trials": args.trials,
        "seed": args.seed,
        "trace_dir": args.trace_dir,
    }
    out = {"config": config, "system": sysm.to_json(), "oracle": res.to_dict()}
    if traces:
        out["traces"] = traces
    return out


def _validate_suite(sysm, a: float, b: float, trials: int, seed: int, grid_points: int, tdir=None) -> dict:
    n = sysm.n
    conj, base = [], None
    for idx, (kind, Phi0, Psi0) in enumerate(sample_initial_data(n, trials, seed)):
        traj = integrate_hamiltonian(sysm, Phi0, Psi0, (a, b), **CONSERVATIVE)
        if base is None:
            base = traj
        conj.append({
            "trial": idx,
            "kind": kind,
            "max_relative_defect": float(traj.relative_defect().max()),
            "zeros": [z.time for z in traj.zeros],
        })
    if tdir is not None:
        with open(tdir / "reference.csv", "w", newline="", encoding="ascii") as fh:
            base.write_csv(fh)
    out = {"conjoined": {
        "tolerance": DEFECT_TOL,
        "integrator": CONSERVATIVE,
        "passed": all(c["max_relative_defect"] <= DEFECT_TOL for c in conj),
        "trials": conj,
    }}

    # Riccati blow-up against the first zero of the (I, 0) solution
    Zr = integrate_matrix_riccati(sysm, np.zeros((n, n)), (a, b))
    first = base.zeros[0].time if base.zeros else None
    blow = Zr.blow_up.time if Zr.blow_up else None
    diff = abs(first - blow) if first is not None and blow is not None else None
    out["riccati_blow_up"] = {
        "first_zero": first,
        "blow_up": blow,
        "difference": diff,
        "tolerance": BLOWUP_MATCH_TOL,
        "passed": (first is None and blow is None) or (diff is not None and diff <= BLOWUP_MATCH_TOL),
    }

    # round trip on a span where Phi stays nonsingular
    end = b if first is None else a + NONSINGULAR_FRACTION * (first - a)
    if not end > a:
        out["round_trip"] = {"skipped": "det Phi vanishes at the span start"}
        return out
    Z = trajectory_to_riccati(base, (a, end))
    rt = riccati_to_hamiltonian(Z, sysm, base.at(a)[0])
    ts = base.t[(base.t >= a) & (base.t <= end)]
    err = max(
        float(np.linalg.norm(rt.at(t)[0] - base.at(t)[0]) / (1.0 + np.linalg.norm(base.at(t)[0]))) for t in ts
    )
    inner = np.linspace(a, end, RESIDUAL_POINTS)[1:-1]
    ham = float(hamiltonian_residual(rt, sysm, inner).max())
    out["round_trip"] = {
        "span": [a, end],
        "max_relative_error": err,
        "hamiltonian_residual": ham,
        "tolerance": ROUNDTRIP_TOL,
        "passed": err <= ROUNDTRIP_TOL and ham <= ROUNDTRIP_TOL,
    }

    # diagonal Riccati identities of both reductions
    grid, domain = span_grid(a, end, grid_points)
    ts = np.linspace(a, end, RESIDUAL_POINTS)
    scale = 1.0 + max(float(np.linalg.norm(Z(t))) for t in ts) ** 2
    routes = {}
    try:
        ep = eigen_path(sysm.B, grid, domain)
        rows = []
        for j in range(1, n + 1):
            red = reduce_thm23(sysm, ep, j)
            tr = diagonal_riccati_residual(transform_unitary(Z, red), red, ts=ts)
            rows.append({"j": j, "max_residual": tr.max_abs,
                         "max_guard_discrepancy": float(np.max(np.abs(tr.guard_discrepancy)))})
        routes["unitary"] = rows
    except PreconditionError as exc:
        routes["unitary"] = {"skipped": exc.to_dict()}
    try:
        F = solve_eq12(sysm.A, sysm.B, grid, domain)
        if F.all_solvable:
            rows = []
            for j in range(1, n + 1):
                red = reduce_thm21(sysm, F, j)
                tr = diagonal_riccati_residual(transform_sqrt(Z, red), red, ts=ts)
                rows.append({"j": j, "max_residual": tr.max_abs})
            routes["sqrt"] = rows
        else:
            routes["sqrt"] = {"skipped": {"error": "UnsolvableEq12", "t": F.first_unsolvable()}}
    except PreconditionError as exc:
        routes["sqrt"] = {"skipped": exc.to_dict()}
    rows = [r for v in routes.values() if isinstance(v, list) for r in v]
    out["diagonal_residuals"] = {
        "span": [a, end],
        "tolerance": RESIDUAL_TOL,
        "scale": scale,
        "passed": all(r["max_residual"] <= RESIDUAL_TOL * scale for r in rows),
        **routes,
    }
    return out


def cmd_validate(args) -> dict:
    t0 = _peek_t0(args.system)
    a, b = _span_of(t0, None, args.horizon)
    if args.trials < 1:
        raise PreconditionFailed("--trials must be >= 1")
    if args.grid < 16:
        raise PreconditionFailed("--grid must be at least 16")
    sysm = _load(args.system, (a, b))
    tdir = _trace_dir(args.trace_dir)
    suite = _validate_suite(sysm, a, b, args.trials, args.seed, args.grid, tdir)
    config = {"system": args.system, "horizon": args.horizon, "trials": args.trials, "seed": args.seed,
              "grid": args.grid, "trace_dir": args.trace_dir}
    return {"config": config, "system": sysm.to_json(), "validation": suite}


COMMANDS = {"check": cmd_check, "simulate": cmd_simulate, "validate": cmd_validate}


def _emit_error(payload: dict) -> None:
    sys.stderr.write(_dumps(payload))


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        body = COMMANDS[args.command](args)
    except UsageError as exc:
        _emit_error({"error": "UsageError", "message": str(exc)})
        return 2
    except (PreconditionError, exprlang.EvalError) as exc:
        _emit_error(exc.to_dict())
        return 2
    except HamoscError as exc:
        _emit_error(exc.to_dict())
        return 1
    except Exception as exc:  # noqa: BLE001
        _emit_error({"error": "InternalError", "type": type(exc).__name__, "message": str(exc)})
        return 1

    report = {"tool": TOOL, "version": __version__, "command": args.command}
    if not args.no_timestamp:
        report["timestamp"] = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    report.update(body)
    text = _dumps(report)
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
