"""Command-line driver for the convergence studies and operator utilities."""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .sbp_ops import (CoefficientProfile, Grid1D, build_constant_ops, build_variable_ops,
                      min_points, nullspace_rank_check, sbp_residual)
from .semidisc2d import PcgConfig
from .study import (DIRICHLET_LEVELS, INTERFACE_LEVELS, WAVE2D_LEVELS, H_REF_1D,
                    default_policy, emit_report, run_case_1d_dirichlet, run_case_1d_interface,
                    run_case_2d, write_energy_trace)
from .timestepper import StepPolicy

ORDERS = {2: 1, 4: 2, 6: 3}


def _levels(text: str) -> list[int]:
    try:
        levels = [int(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"levels must be comma-separated integers: {text!r}")
    if not levels:
        raise argparse.ArgumentTypeError("at least one level is required")
    return levels


def _policy(args, p: int, h_ref: float) -> StepPolicy:
    if args.dt_policy is None:
        if args.cfl is None:
            return default_policy(p) if h_ref else StepPolicy("cfl", 0.2)
        return StepPolicy("cfl", args.cfl)
    C = 0.2 if args.cfl is None else args.cfl
    if args.dt_policy == "cfl":
        return StepPolicy("cfl", C)
    return StepPolicy.matched_to(h_ref, q=args.rate_exponent, C=C)


def _add_common(sp: argparse.ArgumentParser, levels, orders=(4, 6)) -> None:
    sp.add_argument("--order", type=int, choices=orders, default=4)
    sp.add_argument("--levels", type=_levels, default=list(levels),
                    help="comma-separated grid sizes")
    sp.add_argument("--tfinal", type=float, default=None)
    sp.add_argument("--dt-policy", choices=("cfl", "rate-matched"), default=None,
                    help="default: cfl for order 4, rate-matched for order 6 in 1D, cfl in 2D")
    sp.add_argument("--cfl", type=float, default=None, help="Courant constant (default 0.2)")
    sp.add_argument("--rate-exponent", type=float, default=1.5,
                    help="exponent q of the rate-matched rule dt ~ h^q")
    sp.add_argument("--out", default=None, help="CSV report path (default: stdout)")
    sp.add_argument("--energy-trace", default=None, help="CSV path for t,E_H of the finest level")
    sp.add_argument("--timing", action="store_true", help="record wall time in the report metadata")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sbpwave", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("dirichlet1d", help="single domain convergence study")
    _add_common(sp, DIRICHLET_LEVELS)
    sp.add_argument("--beta", type=float, default=-1.0)
    sp.add_argument("--constraint", choices=("sum", "quadrature"), default="sum")

    sp = sub.add_parser("interface1d", help="two-block periodic convergence study")
    _add_common(sp, INTERFACE_LEVELS)
    sp.add_argument("--gamma", type=float, default=-1.0)
    sp.add_argument("--tau", type=float, default=0.5)
    sp.add_argument("--seam", choices=("glued", "interface"), default="glued")
    sp.add_argument("--constraint", choices=("sum", "quadrature"), default="sum")

    sp = sub.add_parser("wave2d", help="2D variable-coefficient study with PCG statistics")
    _add_common(sp, WAVE2D_LEVELS)
    sp.add_argument("--k", type=float, default=5.0, help="material transition sharpness")
    sp.add_argument("--theta", type=float, default=-1.0)
    sp.add_argument("--solver", choices=("pcg", "direct", "diag"), default="pcg")
    sp.add_argument("--pcg-tol", type=float, default=None,
                    help="relative residual tolerance; overrides --pcg-preset")
    sp.add_argument("--pcg-preset", choices=("accurate", "iteration-study"), default="accurate",
                    help="accurate: 1e-8 (order 4) or 1e-10 (order 6); "
                         "iteration-study: 10^-(p+1)")
    sp.add_argument("--ichol-boost", type=float, default=None)
    sp.add_argument("--ichol-drop", type=float, default=None)

    sp = sub.add_parser("dump-operator", help="write an operator's H, A, d1 and dn as text")
    sp.add_argument("--order", type=int, choices=tuple(ORDERS), default=4)
    sp.add_argument("--n", type=int, default=None, help="grid points (default: the minimum)")
    sp.add_argument("--variable", action="store_true",
                    help="variable-coefficient operator with b(x) = 1 + x / 2 on [0, 1]")
    sp.add_argument("--out", default=None)

    sp = sub.add_parser("verify-ops", help="check every shipped operator")
    sp.add_argument("--n", type=int, default=None, help="grid points (default: 2 x minimum)")
    return parser


def _write(text: str, path) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w", newline="") as fh:
            fh.write(text)


def _finish(result, args) -> int:
    if args.out is None:
        sys.stdout.write(result.report.format_csv())
    else:
        emit_report(result.report, args.out)
    if args.energy_trace:
        write_energy_trace(result.energy_trace, args.energy_trace)
    return 0


def _cmd_dirichlet(args) -> int:
    p = ORDERS[args.order]
    res = run_case_1d_dirichlet(p, args.beta, args.levels, policy=_policy(args, p, H_REF_1D),
                                t_final=args.tfinal, constraint=args.constraint,
                                record_energy=bool(args.energy_trace), timing=args.timing)
    return _finish(res, args)


def _cmd_interface(args) -> int:
    p = ORDERS[args.order]
    res = run_case_1d_interface(p, args.gamma, args.levels, tau=args.tau,
                                policy=_policy(args, p, H_REF_1D), t_final=args.tfinal,
                                seam=args.seam, constraint=args.constraint,
                                record_energy=bool(args.energy_trace), timing=args.timing)
    return _finish(res, args)


def _cmd_wave2d(args) -> int:
    p = ORDERS[args.order]
    tol = args.pcg_tol
    if tol is None and args.pcg_preset == "iteration-study":
        tol = PcgConfig.iteration_study(p).rel_tol
    cfg = PcgConfig.for_order(p, rel_tol=tol, diag_boost=args.ichol_boost,
                              drop_tol=args.ichol_drop)
    h_ref = 1.0 / (WAVE2D_LEVELS[0] - 1)
    policy = StepPolicy("cfl", 0.2 if args.cfl is None else args.cfl)
    if args.dt_policy == "rate-matched":
        policy = _policy(args, p, h_ref)
    res = run_case_2d(p, args.k, args.levels, theta=args.theta,
                      t_final=1.0 if args.tfinal is None else args.tfinal, policy=policy,
                      pcg_config=cfg, solver=args.solver,
                      record_energy=bool(args.energy_trace), timing=args.timing)
    return _finish(res, args)


def _operator(p: int, n: int | None, variable: bool):
    n = n or min_points(p, variable)
    grid = Grid1D(n, 0.0, 1.0)
    if variable:
        return build_variable_ops(p, grid, CoefficientProfile.sampled(1.0 + 0.5 * grid.nodes))
    return build_constant_ops(p, grid)


def _cmd_dump(args) -> int:
    p = ORDERS[args.order]
    ops = _operator(p, args.n, args.variable)
    fmt = lambda a: " ".join(f"{x:.17g}" for x in a)  # noqa: E731
    lines = [f"# order={args.order} n={ops.n} h={ops.grid.h:.17g} "
             f"variable={'yes' if args.variable else 'no'}",
             "[H]", fmt(ops.H), "[d1]", fmt(ops.d1), "[dn]", fmt(ops.dn), "[A]"]
    lines += [fmt(row) for row in ops.A.toarray()]
    _write("\n".join(lines) + "\n", args.out)
    return 0


def _cmd_verify(args) -> int:
    ok = True
    print("order,variable,n,sbp_residual,near_zero_eigenvalues,min_eigenvalue,quadrature_error,status")
    for order, p in ORDERS.items():
        for variable in (False, True):
            n = args.n or 2 * min_points(p, variable)
            ops = _operator(p, n, variable)
            res = sbp_residual(ops)
            rep = nullspace_rank_check(ops)
            quad = abs(ops.H.sum() - ops.grid.length)
            good = res <= 1e-13 and rep.ok and quad <= 1e-13
            ok &= good
            print(f"{order},{'yes' if variable else 'no'},{n},{res:.3e},{rep.near_zero_count},"
                  f"{rep.smallest_eig:.3e},{quad:.3e},{'ok' if good else 'FAIL'}")
    return 0 if ok else 1


COMMANDS = {"dirichlet1d": _cmd_dirichlet, "interface1d": _cmd_interface, "wave2d": _cmd_wave2d,
            "dump-operator": _cmd_dump, "verify-ops": _cmd_verify}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return COMMANDS[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
