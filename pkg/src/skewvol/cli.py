"""Command-line interface: ``skewvol {price, smile, skew, density, validate}``.

Exit codes: 0 success, 2 invalid input, 3 numerical failure, 4 a validation
test failed. Tables go to stdout (or ``--out``) as CSV with 17 significant
digits, or as JSON with one array per column. Summary lines go to stderr.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np

from .density import marginal_density
from .errors import ConvergenceError, DomainError
from .implied import Axis, SmileRow, atm_skew_exact, smile
from .mc_oracle import SimConfig, functional_gof, mc_mean, mc_price
from .model import ModelParams, OptionSpec, Side, s_of_x
from .parallel import ordered_map
from .pricing import approx_price_2p, approx_price_ratio, price, price_via_dupire
from .specfun import phi

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERIC = 3
EXIT_VALIDATION = 4

GOF_THRESHOLD = 1e-3
MARTINGALE_Z = 3.0


class InputError(Exception):
    """Raised for flag combinations that parse but make no sense."""


@dataclass
class Table:
    columns: list[str]
    rows: list[list[Any]]


def _fmt(v: Any) -> str:
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    if v is None:
        return ""
    return str(v)


def _jsonable(v: Any) -> Any:
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else None
    return v


def render(table: Table, fmt: str) -> str:
    if fmt == "json":
        cols = {c: [_jsonable(r[i]) for r in table.rows] for i, c in enumerate(table.columns)}
        return json.dumps(cols, indent=2) + "\n"
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(table.columns)
    for r in table.rows:
        writer.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def _emit(text: str, out: str | None) -> None:
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _note(msg: str) -> None:
    print(msg, file=sys.stderr)


def _params(args) -> ModelParams:
    return ModelParams(args.sigma_plus, args.sigma_minus)


def _grid(lo: float, hi: float, steps: int, log: bool = False) -> list[float]:
    if steps < 1:
        raise InputError("grid needs at least one step")
    if not lo < hi:
        raise InputError(f"grid needs min < max, got {lo} >= {hi}")
    if log:
        if lo <= 0:
            raise InputError("log spacing needs a positive lower bound")
        return list(np.geomspace(lo, hi, steps + 1))
    return list(np.linspace(lo, hi, steps + 1))


# ---------------------------------------------------------------------------
# Commands

def cmd_price(args) -> tuple[Table, int]:
    params = _params(args)
    spec = OptionSpec(args.strike, args.maturity, Side(args.side))
    K, T = spec.strike, spec.maturity
    method = args.method
    if method == "exact":
        res = price(spec, params)
    elif method == "mc":
        cfg = SimConfig(args.n_paths, args.n_steps, args.seed)
        est, se = mc_price(spec, params, cfg)
        res = None
        row = [K, T, spec.side.value, est, "mc", se]
    else:
        native = Side.CALL if K > 1 else Side.PUT
        if K == 1:
            raise InputError(f"method {method} is not defined at K = 1; use exact")
        if spec.side is not native:
            raise InputError(f"method {method} prices the {native.value} side for K={K}; use --side {native.value}")
        fn = {"dupire": price_via_dupire, "approx2p": approx_price_2p, "approx-ratio": approx_price_ratio}[method]
        res = fn(K, T, params)
    if res is not None:
        row = [K, T, spec.side.value, res.value, res.method.value, res.err_estimate]
    return Table(["strike", "maturity", "side", "value", "method", "err_estimate"], [row]), EXIT_OK


def cmd_smile(args) -> tuple[Table, int]:
    params = _params(args)
    if args.k_min <= 0:
        raise InputError("strikes must be positive")
    strikes = _grid(args.k_min, args.k_max, args.k_steps)
    rows = smile(args.maturity, strikes, params, axis=Axis(args.axis))
    cols = list(SmileRow.COLUMNS) + ["error"]
    out = [[getattr(r, c) for c in cols] for r in rows]
    ok = [r for r in rows if r.ok]
    if ok:
        _note(f"sup iv_err_2p = {max(r.iv_err_2p for r in ok):.6g}, "
              f"sup iv_err_ratio = {max(r.iv_err_ratio for r in ok):.6g}")
    return Table(cols, out), EXIT_OK if ok else EXIT_NUMERIC


def cmd_skew(args) -> tuple[Table, int]:
    params = _params(args)
    if not args.t_min > 0:
        raise InputError("t-min must be positive")
    Ts = _grid(args.t_min, args.t_max, args.t_steps, args.log_spacing)
    reports = ordered_map(lambda T: atm_skew_exact(T, params), Ts)
    cols = ["T", "skew_exact", "skew_asym", "skew_fd", "atm_vol", "sqrtT_skew_exact", "fd_rel_err"]
    rows = []
    for r in reports:
        rel = abs(r.skew_fd - r.skew_exact) / abs(r.skew_exact) if r.skew_exact != 0 else abs(r.skew_fd)
        rows.append([r.T, r.skew_exact, r.skew_asym, r.skew_fd, r.atm_vol, math.sqrt(r.T) * r.skew_exact, rel])
    return Table(cols, rows), EXIT_OK


def density_integral(xs: np.ndarray, dens: np.ndarray, T: float, params: ModelParams) -> float:
    """Trapezoid integral of a density grid, split at 0 where the density jumps."""
    xs = np.asarray(xs)
    dens = np.asarray(dens)
    total = 0.0
    neg = xs <= 0
    if np.any(neg):
        xn, dn = xs[neg].copy(), dens[neg].copy()
        if xn[-1] == 0.0:
            dn[-1] = 2.0 * params.q * float(phi(T, params))  # left limit
        total += float(np.trapezoid(dn, xn))
    pos = xs >= 0
    if np.any(pos):
        total += float(np.trapezoid(dens[pos], xs[pos]))
    return total


def cmd_density(args) -> tuple[Table, int]:
    params = _params(args)
    T = args.maturity
    span = args.x_span if args.x_span is not None else 8.0 * math.sqrt(T) + 2.0 * T
    if args.x_steps % 2:
        raise InputError("x-steps must be even so that x = 0 is a grid point")
    xs = np.linspace(-span, span, args.x_steps + 1)
    xs[args.x_steps // 2] = 0.0
    dens = np.asarray(marginal_density(xs, T, params))
    integral = density_integral(xs, dens, T, params)
    right = 2.0 * params.p * float(phi(T, params))
    left = 2.0 * params.q * float(phi(T, params))
    _note(f"trapezoid integral = {integral:.12f}")
    _note(f"jump ratio p(0+)/p(0-) = {right / left:.12f} (p/q = {params.p / params.q:.12f})")
    return Table(["x", "density"], [[x, d] for x, d in zip(xs, dens)]), EXIT_OK


def cmd_validate(args) -> tuple[Table, int]:
    params = _params(args)
    T = args.maturity
    cfg = SimConfig(args.n_paths, args.n_steps, args.seed)
    rows = []
    for res in functional_gof(params, T, cfg):
        rows.append([f"gof:{res.name}", res.statistic, res.p_value, res.dof, res.passed(GOF_THRESHOLD)])
    mean, se = mc_mean(lambda b: s_of_x(b.x_T, params), params, T, cfg)
    z = (mean - 1.0) / se if se > 0 else 0.0
    pz = math.erfc(abs(z) / math.sqrt(2.0))
    rows.append(["martingale:E[S_T]", z, pz, 0, abs(z) <= MARTINGALE_Z])
    failed = [r[0] for r in rows if not r[4]]
    if failed:
        _note("failed: " + ", ".join(failed))
    cols = ["test", "statistic", "p_value", "dof", "passed"]
    return Table(cols, rows), EXIT_VALIDATION if failed else EXIT_OK


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="skewvol", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--sigma-plus", type=float, default=0.2, help="volatility at or above the threshold")
    common.add_argument("--sigma-minus", type=float, default=0.9, help="volatility below the threshold")
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("--out", default=None, help="write the table here instead of stdout")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("price", parents=[common], help="price one option")
    p.add_argument("--strike", type=float, required=True)
    p.add_argument("--maturity", type=float, required=True)
    p.add_argument("--side", choices=("call", "put"), default="call")
    p.add_argument("--method", choices=("exact", "dupire", "approx2p", "approx-ratio", "mc"), default="exact")
    p.add_argument("--n-paths", type=int, default=400_000)
    p.add_argument("--n-steps", type=int, default=2000)
    p.add_argument("--seed", type=int, default=42)
    p.set_defaults(func=cmd_price)

    s = sub.add_parser("smile", parents=[common], help="implied vol smile with approximation errors")
    s.add_argument("--maturity", type=float, required=True)
    s.add_argument("--k-min", type=float, default=0.5)
    s.add_argument("--k-max", type=float, default=2.0)
    s.add_argument("--k-steps", type=int, default=30)
    s.add_argument("--axis", choices=[a.value for a in Axis], default="strike")
    s.set_defaults(func=cmd_smile)

    k = sub.add_parser("skew", parents=[common], help="ATM skew term structure")
    k.add_argument("--t-min", type=float, default=1e-4)
    k.add_argument("--t-max", type=float, default=5.0)
    k.add_argument("--t-steps", type=int, default=20)
    k.add_argument("--log-spacing", action="store_true")
    k.set_defaults(func=cmd_skew)

    d = sub.add_parser("density", parents=[common], help="density of the skew-BM coordinate X_T")
    d.add_argument("--maturity", type=float, required=True)
    d.add_argument("--x-span", type=float, default=None, help="grid covers [-span, span]")
    d.add_argument("--x-steps", type=int, default=2000)
    d.set_defaults(func=cmd_density)

    v = sub.add_parser("validate", parents=[common], help="Monte-Carlo validation of the densities")
    v.add_argument("--maturity", type=float, default=1.0)
    v.add_argument("--n-paths", type=int, default=1_000_000)
    v.add_argument("--n-steps", type=int, default=2000)
    v.add_argument("--seed", type=int, default=42)
    v.set_defaults(func=cmd_validate)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        table, code = args.func(args)
    except (DomainError, InputError) as exc:
        _note(f"error: {exc}")
        return EXIT_INPUT
    except (ConvergenceError, FloatingPointError) as exc:
        _note(f"numerical failure: {exc}")
        return EXIT_NUMERIC
    _emit(render(table, args.format), args.out)
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
