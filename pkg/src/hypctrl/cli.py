"""Command-line entry point ``hypctrl``.

Every command reads a JSON system configuration given by ``--config``::

    {
      "version": 1,
      "m": 3,
      "speeds": [-4, -2, -1, 1, 2, [[0, 3], [1, 4]]],
      "Q": [[1, -1, -1], [1, 0, 2], [1, 1, 1]],
      "M": {"breaks": [0, 0.5, 1], "values": [[[...]], [[...]]]},
      "G": [[...]],
      "initial": [0, [[0, 0], [0.5, 1], [1, 0]], ...],
      "T": 1.5,
      "resolution": 200
    }

Speeds and initial data are constants or ``[x, value]`` breakpoint lists.
``M`` and ``G`` are optional, dense or piecewise constant. Exit codes: 0
success, 2 parse or usage error, 3 numerical failure, 4 precondition
violation.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import control, counterexample, lcu, mintime
from .errors import HypCtrlError, NumericalFailure, ParseError, PreconditionViolation
from .fields import MatrixField
from .simulator import OpenLoop, SystemSpec, simulate
from .speeds import SpeedProfile, transport_times, validate_profile

CONFIG_VERSION = 1
EXIT_OK, EXIT_PARSE, EXIT_NUMERICAL, EXIT_PRECONDITION = 0, 2, 3, 4


# ---------------------------------------------------------------------------
# configuration


@dataclass
class SystemConfig:
    profile: SpeedProfile
    Q: list
    M: Optional[MatrixField]
    G: Optional[MatrixField]
    initial: Optional[list]
    T: Optional[float]
    resolution: int

    def system(self) -> SystemSpec:
        return SystemSpec(self.profile, np.array(self.Q, dtype=float), self.M, self.G)

    def initial_data(self):
        """``x -> (n, len(x))`` from the breakpoint samples; zero when absent."""
        n = self.profile.n
        comps = self.initial or [0.0] * n

        def f(x):
            x = np.asarray(x, dtype=float)
            out = np.zeros((n,) + x.shape)
            for i, c in enumerate(comps):
                if isinstance(c, list):
                    xs, ys = zip(*c)
                    out[i] = np.interp(x, xs, ys)
                else:
                    out[i] = float(c)
            return out

        return f


def _number(v, where):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ParseError(f"expected a number, got {json.dumps(v)}", where)
    return v


def _matrix(rows, shape, where):
    if not isinstance(rows, list) or len(rows) != shape[0]:
        raise ParseError(f"expected {shape[0]} rows", where)
    for r, row in enumerate(rows):
        if not isinstance(row, list) or len(row) != shape[1]:
            got = len(row) if isinstance(row, list) else "no"
            raise ParseError(f"row has {got} entries, expected {shape[1]}", f"{where}[{r + 1}]")
        for c, v in enumerate(row):
            _number(v, f"{where}[{r + 1}][{c + 1}]")
    return rows


def _field(raw, shape, where):
    if raw is None:
        return None
    if isinstance(raw, dict):
        breaks = raw.get("breaks")
        values = raw.get("values")
        if not isinstance(breaks, list) or not isinstance(values, list):
            raise ParseError("piecewise field needs 'breaks' and 'values' lists", where)
        for j, v in enumerate(values):
            _matrix(v, shape, f"{where}.values[{j + 1}]")
        try:
            return MatrixField.piecewise_constant([_number(b, f"{where}.breaks") for b in breaks], values)
        except HypCtrlError as exc:
            raise ParseError(str(exc), where) from exc
    return MatrixField.constant(_matrix(raw, shape, where))


def _breakpoints(raw, where):
    if isinstance(raw, list):
        for k, pair in enumerate(raw):
            if not isinstance(pair, list) or len(pair) != 2:
                raise ParseError("breakpoints must be [x, value] pairs", f"{where}[{k + 1}]")
            _number(pair[0], f"{where}[{k + 1}]")
            _number(pair[1], f"{where}[{k + 1}]")
        return raw
    return _number(raw, where)


def parse_config(text) -> SystemConfig:
    """Validate a JSON configuration document.

    Raises
    ------
    ParseError
        With the offending field as ``location``.
    """
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, f"line {exc.lineno} column {exc.colno}") from exc
    if not isinstance(data, dict):
        raise ParseError("configuration must be a JSON object")
    if data.get("version") != CONFIG_VERSION:
        raise ParseError(f"unsupported version {data.get('version')!r}", "version")
    for key in ("m", "speeds", "Q"):
        if key not in data:
            raise ParseError("missing field", key)
    m = data["m"]
    if not isinstance(m, int) or isinstance(m, bool):
        raise ParseError("m must be an integer", "m")
    speeds = data["speeds"]
    if not isinstance(speeds, list):
        raise ParseError("speeds must be a list", "speeds")
    raw = [_breakpoints(s, f"speeds[{i + 1}]") for i, s in enumerate(speeds)]
    if "n" in data and data["n"] != len(raw):
        raise ParseError(f"n = {data['n']} but {len(raw)} speeds given", "n")
    try:
        profile = validate_profile(raw, m)
    except HypCtrlError as exc:
        raise ParseError(str(exc), "speeds") from exc
    n, p = profile.n, profile.p
    Q = _matrix(data["Q"], (p, m), "Q")
    M = _field(data.get("M"), (n, n), "M")
    G = _field(data.get("G"), (n, m), "G")
    initial = data.get("initial")
    if initial is not None:
        if not isinstance(initial, list) or len(initial) != n:
            raise ParseError(f"expected {n} components", "initial")
        initial = [_breakpoints(c, f"initial[{i + 1}]") for i, c in enumerate(initial)]
    T = data.get("T")
    if T is not None and _number(T, "T") <= 0:
        raise ParseError("T must be positive", "T")
    res = data.get("resolution", 200)
    if not isinstance(res, int) or isinstance(res, bool) or res < 2:
        raise ParseError("resolution must be an integer >= 2", "resolution")
    return SystemConfig(profile, Q, M, G, initial, T, res)


def load_config(path) -> SystemConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot read configuration: {exc.strerror}", str(path)) from exc
    return parse_config(text)


# ---------------------------------------------------------------------------
# output helpers


def _emit(text, path, out):
    if path:
        Path(path).write_text(text, encoding="utf-8", newline="\n")
    else:
        out.write(text)


def _json(obj):
    return json.dumps(obj, indent=2) + "\n"


def _rows_csv(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
    return buf.getvalue()


def _horizon(cfg, args, default=None):
    T = getattr(args, "T", None) or cfg.T or default
    if T is None:
        raise ParseError("no horizon given (config 'T' or --T)", "T")
    return float(T)


# ---------------------------------------------------------------------------
# commands


def cmd_decompose(args, out):
    cfg = load_config(args.config)
    cf = lcu.canonical_form(cfg.Q, rational=args.rational)
    _emit(_json({"schema_version": 1, **cf.to_json()}), args.output, out)


def cmd_times(args, out):
    cfg = load_config(args.config)
    prof = cfg.profile
    times = transport_times(prof)
    _emit(_json({"schema_version": 1, "m": prof.m, "p": prof.p,
                 "transport_times": [float(t) for t in times]}), args.output, out)


def cmd_mintime(args, out):
    cfg = load_config(args.config)
    report = mintime.time_report(cfg.profile, cfg.Q)
    _emit(_json(report.to_json(terms=args.terms)), args.output, out)


def cmd_simulate(args, out):
    cfg = load_config(args.config)
    system = cfg.system()
    y0 = cfg.initial_data()
    N = args.resolution or cfg.resolution
    if args.feedback:
        law = control.feedback_law(cfg.profile, cfg.Q)
        T = _horizon(cfg, args, law.settling_time)
        u = law.as_input()
    else:
        T = _horizon(cfg, args)
        if args.control:
            try:
                text = Path(args.control).read_text(encoding="utf-8")
            except OSError as exc:
                raise ParseError(f"cannot read control file: {exc.strerror}", args.control) from exc
            try:
                u = OpenLoop.from_csv(text)
            except (ValueError, IndexError) as exc:
                raise ParseError(str(exc), args.control) from exc
            if u.m != cfg.profile.m:
                raise ParseError(f"control file has {u.m} components, expected {cfg.profile.m}", args.control)
        else:
            u = None
    traj = simulate(system, y0, u, T, N, store=bool(args.output), cfl=args.cfl)
    if args.output:
        _emit(traj.to_csv(every=args.every), args.output, out)
    if args.traces:
        _emit(traj.traces_csv(), args.traces, out)
    out.write(f"T {T!r}\n")
    out.write(f"h {traj.h!r}\n")
    out.write(f"final_norm {traj.final_norm()!r}\n")
    if args.halvings:
        rep = control.verify_null_control(system, y0, u, T, N, args.halvings, cfl=args.cfl)
        out.write("residuals " + " ".join(repr(r) for r in rep.residuals) + "\n")
        out.write(f"slope {rep.slope!r}\n")


def cmd_stabilize(args, out):
    cfg = load_config(args.config)
    law = control.feedback_law(cfg.profile, cfg.Q)
    _emit(_json(law.to_json()), args.output, out)


def cmd_synthesize(args, out):
    cfg = load_config(args.config)
    system = cfg.system()
    y0 = cfg.initial_data()
    N = args.resolution or cfg.resolution
    if args.least_squares:
        T = _horizon(cfg, args)
        res = control.least_squares_control(system, y0, T, N, stride=args.stride, cfl=args.cfl)
        u = res.u
        out.write(f"condition {res.condition!r}\n")
    else:
        T = _horizon(cfg, args, mintime.sup_time(cfg.profile, cfg.Q))
        u = control.synthesize_null_control(system, y0, T)
    if args.output:
        _emit(u.to_csv(), args.output, out)
    tr = simulate(system, y0, u, T, N, store=False, cfl=args.cfl)
    out.write(f"T {T!r}\n")
    out.write(f"final_norm {tr.final_norm()!r}\n")


def cmd_counterexample(args, out):
    if args.roots is not None:
        roots = counterexample.critical_products(args.roots)
        _emit(_json({"schema_version": 1, "critical_products": [
            {"k": r.k, "analytic": r.analytic, "shooting": r.shooting} for r in roots]}), args.output, out)
        return
    if args.sweep is not None:
        lo, hi, steps = args.sweep
        steps = int(steps)
        if steps < 2:
            raise ParseError("sweep needs at least 2 steps", "--sweep")
        rows = counterexample.condition_sweep(lo, hi, steps, args.n)
        _emit(_rows_csv(["ab", "condition", "residual"], rows), args.output, out)
        return
    a = args.a
    if a == 0:
        raise ParseError("--a must be nonzero", "--a")
    spec = counterexample.CounterexampleSpec(a, args.ab / a)
    if args.witness:
        y0 = counterexample.witness_data(spec)
    else:
        y0, _ = counterexample.manufactured_data(spec)
    ctrl = counterexample.null_control_t2(spec, y0, args.n)
    if args.output:
        _emit(ctrl.u.to_csv(), args.output, out)
    rep = counterexample.verify_t2(spec, y0, ctrl, args.resolution)
    out.write(f"ab {spec.ab!r}\n")
    out.write(f"condition {ctrl.u1.condition!r}\n")
    out.write(f"final_norm {rep.residual!r}\n")


# ---------------------------------------------------------------------------
# parser


def build_parser():
    parser = argparse.ArgumentParser(prog="hypctrl", description="Boundary null control of 1-D hyperbolic systems.")
    sub = parser.add_subparsers(dest="command", required=True)

    def with_config(name, help):
        p = sub.add_parser(name, help=help)
        p.add_argument("--config", required=True, help="JSON system configuration")
        p.add_argument("--output", help="write the main report to this file")
        return p

    p = with_config("decompose", "canonical form of Q")
    p.add_argument("--rational", action="store_true", help="exact rational arithmetic")
    p.set_defaults(func=cmd_decompose)

    p = with_config("times", "transport times of every component")
    p.set_defaults(func=cmd_times)

    p = with_config("mintime", "bounds on the minimal control time")
    p.add_argument("--terms", action="store_true", help="include the contributing terms")
    p.set_defaults(func=cmd_mintime)

    p = with_config("simulate", "solve forward in time")
    mode = p.add_mutually_exclusive_group(required=True)
    mode.add_argument("--control", help="open-loop control CSV (t, u_1..u_m)")
    mode.add_argument("--feedback", action="store_true", help="explicit boundary feedback")
    mode.add_argument("--zero", action="store_true", help="u = 0")
    p.add_argument("--T", type=float, help="horizon (overrides the config)")
    p.add_argument("--resolution", type=int)
    p.add_argument("--cfl", type=float, default=1.0)
    p.add_argument("--traces", help="write boundary traces CSV to this file")
    p.add_argument("--every", type=int, default=1, help="time-level stride of the trajectory CSV")
    p.add_argument("--halvings", type=int, default=0, help="grid halvings for a refinement study")
    p.set_defaults(func=cmd_simulate)

    p = with_config("stabilize", "explicit feedback law as JSON")
    p.set_defaults(func=cmd_stabilize)

    p = with_config("synthesize", "open-loop null control as CSV")
    p.add_argument("--T", type=float)
    p.add_argument("--resolution", type=int)
    p.add_argument("--cfl", type=float, default=1.0)
    p.add_argument("--least-squares", action="store_true", help="least-squares probe instead of the construction")
    p.add_argument("--stride", type=int, default=1)
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("counterexample", help="the 3x3 family with coupling product ab")
    mode = p.add_mutually_exclusive_group(required=True)
    mode.add_argument("--ab", type=float, help="controls at T = 2 for this product")
    mode.add_argument("--sweep", type=float, nargs=3, metavar=("LO", "HI", "STEPS"))
    mode.add_argument("--roots", type=int, metavar="K", help="critical products for k = 0..K")
    p.add_argument("--a", type=float, default=1.0, help="g_21 (b = ab / a)")
    p.add_argument("--witness", action="store_true", help="use data with a nonzero adjoint pairing")
    p.add_argument("--n", type=int, default=512, help="quadrature cells")
    p.add_argument("--resolution", type=int, default=200)
    p.add_argument("--output")
    p.set_defaults(func=cmd_counterexample)
    return parser


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_PARSE
    try:
        args.func(args, out)
    except ParseError as exc:
        print(f"hypctrl: parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except NumericalFailure as exc:
        print(f"hypctrl: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except PreconditionViolation as exc:
        print(f"hypctrl: precondition violated: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    except HypCtrlError as exc:
        print(f"hypctrl: invalid input: {exc}", file=sys.stderr)
        return EXIT_PARSE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
