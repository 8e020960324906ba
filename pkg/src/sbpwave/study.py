"""Manufactured-solution convergence studies and report output."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .semidisc1d import Dirichlet, InterfaceSpec, Periodic, assemble_single, assemble_two_block
from .semidisc2d import (Coefficients2D, Grid2D, PcgConfig, assemble_2d, build_fast_diag,
                         transform_state)
from .sbp_ops import Grid1D, build_constant_ops
from .timestepper import StepPolicy, integrate

DIRICHLET_LEVELS = (101, 201, 401, 801, 1601)
INTERFACE_LEVELS = (51, 101, 201, 401, 801)
WAVE2D_LEVELS = (16, 31, 61, 121)
# reference spacing at which the rate-matched rule agrees with the CFL rule
H_REF_1D = math.pi / 100


# ----------------------------------------------------------------------------
# manufactured solutions

@dataclass(frozen=True)
class ManufacturedCase:
    case_id: str
    U: Callable
    V: Callable
    domain: tuple
    t_final: float
    forcing: Callable | None = None
    coefficient: Callable | None = None


def wave1d_case(case_id: str = "dirichlet_1d") -> ManufacturedCase:
    """``U = cos(10 x + 1) cos(10 t + 2)`` with unit speed on ``[-pi/2, pi/2]``, ``t`` in ``[0, 2]``."""
    def U(x, t):
        return np.cos(10 * x + 1) * np.cos(10 * t + 2)

    def V(x, t):
        return -10 * np.cos(10 * x + 1) * np.sin(10 * t + 2)

    return ManufacturedCase(case_id=case_id, U=U, V=V, domain=(-math.pi / 2, math.pi / 2),
                            t_final=2.0)


def material(k: float) -> Callable:
    """Layered medium ``0.5 (tanh(k (R - 0.25)) + 3)`` with ``R`` the squared distance to the centre."""
    def a(x, y):
        R = (x - 0.5) ** 2 + (y - 0.5) ** 2
        return 0.5 * (np.tanh(k * (R - 0.25)) + 3.0)

    return a


def variable_2d_case(k: float, t_final: float = 1.0) -> ManufacturedCase:
    """``U = cos(2x + pi/2) cos(2y + pi/2) cos(2 sqrt(2) t + 3)`` on the unit square with ``a = b = material(k)``."""
    w = 2.0 * math.sqrt(2.0)
    a = material(k)

    def U(x, y, t):
        return np.cos(2 * x + math.pi / 2) * np.cos(2 * y + math.pi / 2) * np.cos(w * t + 3)

    def V(x, y, t):
        return -w * np.cos(2 * x + math.pi / 2) * np.cos(2 * y + math.pi / 2) * np.sin(w * t + 3)

    def F(x, y, t):
        cx, sx = np.cos(2 * x + math.pi / 2), np.sin(2 * x + math.pi / 2)
        cy, sy = np.cos(2 * y + math.pi / 2), np.sin(2 * y + math.pi / 2)
        ct = np.cos(w * t + 3)
        R = (x - 0.5) ** 2 + (y - 0.5) ** 2
        av = 0.5 * (np.tanh(k * (R - 0.25)) + 3.0)
        dadR = 0.5 * k / np.cosh(k * (R - 0.25)) ** 2
        ax, ay = dadR * 2 * (x - 0.5), dadR * 2 * (y - 0.5)
        # U_tt - (a U_x)_x - (a U_y)_y with U_xx = -4 U and U_yy = -4 U
        u = cx * cy * ct
        ux = -2 * sx * cy * ct
        uy = -2 * cx * sy * ct
        return -w * w * u + 8 * av * u - ax * ux - ay * uy

    return ManufacturedCase(case_id="variable_2d", U=U, V=V, domain=((0.0, 1.0), (0.0, 1.0)),
                            t_final=t_final, forcing=F, coefficient=a)


# ----------------------------------------------------------------------------
# errors, rates and reports

def l2_error(u_h: np.ndarray, u_exact: np.ndarray, h: float, d: int = 1) -> float:
    u_h, u_exact = np.ravel(u_h), np.ravel(u_exact)
    if u_h.shape != u_exact.shape:
        raise ValueError("solution and reference have different lengths")
    diff = u_h - u_exact
    return float(math.sqrt(h ** d * float(diff @ diff)))


def rates(errors: Sequence[float]) -> list[float]:
    """``log2(e_{j-1} / e_j)`` for consecutive levels refined by a factor of two."""
    e = np.asarray(errors, dtype=float)
    return [float(r) for r in np.log2(e[:-1] / e[1:])]


@dataclass
class ReportRow:
    n: int
    l2_error: float
    rate: float | None


@dataclass
class ConvergenceReport:
    case_id: str
    rows: list
    metadata: dict = field(default_factory=dict)

    @property
    def errors(self) -> list[float]:
        return [r.l2_error for r in self.rows]

    @property
    def rates(self) -> list[float]:
        return [r.rate for r in self.rows[1:]]

    def format_csv(self) -> str:
        lines = [f"# case={self.case_id}"]
        lines += [f"# {k}={_fmt_meta(v)}" for k, v in self.metadata.items()]
        lines.append("n,l2_error,rate")
        for r in self.rows:
            rate = "" if r.rate is None else f"{r.rate:.6g}"
            lines.append(f"{r.n},{r.l2_error:.5e},{rate}")
        return "\n".join(lines) + "\n"


def _fmt_meta(v) -> str:
    if isinstance(v, float):
        return f"{v:.6g}"
    if isinstance(v, (list, tuple)):
        return ";".join(_fmt_meta(x) for x in v)
    return str(v)


def make_report(case_id: str, levels: Sequence[int], errors: Sequence[float],
                metadata: dict) -> ConvergenceReport:
    r = [None] + rates(errors)
    rows = [ReportRow(int(n), float(e), r[i]) for i, (n, e) in enumerate(zip(levels, errors))]
    return ConvergenceReport(case_id=case_id, rows=rows, metadata=metadata)


def emit_report(report: ConvergenceReport, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(report.format_csv())


def write_energy_trace(trace: Sequence[tuple[float, float]], path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("t,E_H\n")
        for t, e in trace:
            fh.write(f"{t:.10e},{e:.10e}\n")


def default_policy(p: int) -> StepPolicy:
    """CFL 0.2 for order 4; order 6 uses dt proportional to h^1.5, equal to the CFL rule at h = pi/100."""
    if p >= 3:
        return StepPolicy.matched_to(H_REF_1D, q=1.5)
    return StepPolicy("cfl", 0.2)


def _policy_meta(policy: StepPolicy) -> str:
    if policy.mode == "cfl":
        return f"cfl(C={policy.C:.6g})"
    return f"rate_matched(C={policy.C:.6g},q={policy.q:.6g})"


class _EnergyRecorder:
    def __init__(self, energy: Callable):
        self.energy = energy
        self.trace = []

    def __call__(self, t, y):
        self.trace.append((t, self.energy(y)))


# ----------------------------------------------------------------------------
# studies

@dataclass
class StudyResult:
    report: ConvergenceReport
    energy_trace: list = field(default_factory=list)


def run_case_1d_dirichlet(
    p: int,
    beta: float,
    levels: Sequence[int] = DIRICHLET_LEVELS,
    policy: StepPolicy | None = None,
    t_final: float | None = None,
    constraint: str = "sum",
    record_energy: bool = False,
    timing: bool = False,
) -> StudyResult:
    """Single domain with Dirichlet data at both ends; energy trace from the finest level."""
    case = wave1d_case("dirichlet_1d")
    policy = policy or default_policy(p)
    tf = case.t_final if t_final is None else t_final
    lo, hi = case.domain
    errors, trace = [], []
    start = time.perf_counter()
    for n in levels:
        grid = Grid1D(n, lo, hi)
        ops = build_constant_ops(p, grid)
        left = Dirichlet(f_t=lambda t: case.V(lo, t), beta=beta)
        right = Dirichlet(f_t=lambda t: case.V(hi, t), beta=beta)
        semi = assemble_single(ops, left, right, constraint=constraint)
        y0 = semi.state(case.U(grid.nodes, 0.0), case.V(grid.nodes, 0.0))
        rec = _EnergyRecorder(semi.energy) if record_energy else None
        y, _ = integrate(semi, y0, 0.0, tf, policy.dt(grid.h), observers=[rec] if rec else ())
        errors.append(l2_error(y[0], case.U(grid.nodes, tf), grid.h))
        if rec:
            trace = rec.trace
    meta = {"order": 2 * p, "beta": float(beta), "t_final": float(tf),
            "dt_policy": _policy_meta(policy), "constraint": constraint}
    if timing:
        meta["wall_time_s"] = time.perf_counter() - start
    return StudyResult(make_report(case.case_id, levels, errors, meta), trace)


def run_case_1d_interface(
    p: int,
    gamma: float,
    levels: Sequence[int] = INTERFACE_LEVELS,
    tau: float = 0.5,
    policy: StepPolicy | None = None,
    t_final: float | None = None,
    seam: str = "glued",
    constraint: str = "sum",
    record_energy: bool = False,
    timing: bool = False,
) -> StudyResult:
    """Two blocks of ``n`` points each meeting at ``x = 0`` with periodic outer ends."""
    case = wave1d_case("interface_1d")
    policy = policy or default_policy(p)
    tf = case.t_final if t_final is None else t_final
    lo, hi = case.domain
    errors, trace = [], []
    start = time.perf_counter()
    for n in levels:
        gl, gr = Grid1D(n, lo, 0.0), Grid1D(n, 0.0, hi)
        semi = assemble_two_block(build_constant_ops(p, gl), build_constant_ops(p, gr),
                                  InterfaceSpec(tau=tau, gamma=gamma),
                                  outer=(Periodic(), Periodic()), seam=seam,
                                  constraint=constraint)
        x = semi.x
        y0 = semi.state(case.U(x, 0.0), case.V(x, 0.0))
        rec = _EnergyRecorder(semi.energy) if record_energy else None
        y, _ = integrate(semi, y0, 0.0, tf, policy.dt(gl.h), observers=[rec] if rec else ())
        errors.append(l2_error(y[0], case.U(x, tf), gl.h))
        if rec:
            trace = rec.trace
    meta = {"order": 2 * p, "gamma": float(gamma), "tau": float(tau), "seam": seam,
            "points": "per_block", "t_final": float(tf), "dt_policy": _policy_meta(policy),
            "constraint": constraint}
    if timing:
        meta["wall_time_s"] = time.perf_counter() - start
    return StudyResult(make_report(case.case_id, levels, errors, meta), trace)


def run_case_2d(
    p: int,
    k: float,
    levels: Sequence[int] = WAVE2D_LEVELS,
    theta: float = -1.0,
    t_final: float = 1.0,
    policy: StepPolicy | None = None,
    pcg_config: PcgConfig | None = None,
    solver: str = "pcg",
    record_energy: bool = False,
    timing: bool = False,
) -> StudyResult:
    """Unit square with ``n x n`` points and material ``a = b = material(k)``.

    ``solver`` is ``"pcg"``, ``"direct"`` or ``"diag"``; the last needs
    ``k = 0``, which gives the constant medium ``a = b = 1.5``.  The report
    metadata lists the mean number of PCG iterations per solve at each level.
    """
    case = variable_2d_case(k, t_final)
    policy = policy or StepPolicy("cfl", 0.2)
    cfg = pcg_config or PcgConfig.for_order(p)
    errors, iters, trace = [], [], []
    start = time.perf_counter()
    for n in levels:
        grid = Grid2D.unit_square(n)
        coeffs = Coefficients2D.from_functions(grid, case.coefficient)
        semi = assemble_2d(grid, coeffs, p, theta=theta,
                           boundary_ft=lambda x, y, t: case.V(x, y, t),
                           forcing=case.forcing, solver="pcg" if solver == "pcg" else "direct",
                           pcg_config=cfg)
        X, Y = semi.mesh
        y0 = semi.state(case.U(X, Y, 0.0), case.V(X, Y, 0.0))
        dt = policy.dt(grid.x.h, math.sqrt(coeffs.max))
        rec = _EnergyRecorder(semi.energy) if record_energy else None
        if solver == "diag":
            fd = build_fast_diag(semi)
            obs = [lambda t, yt: rec(t, transform_state(fd, yt, "from_diag"))] if rec else []
            yt, _ = integrate(fd, transform_state(fd, y0), 0.0, case.t_final, dt, observers=obs)
            y = transform_state(fd, yt, "from_diag")
        else:
            y, _ = integrate(semi, y0, 0.0, case.t_final, dt, observers=[rec] if rec else ())
        errors.append(l2_error(y[0], case.U(X, Y, case.t_final), grid.x.h, d=2))
        if solver == "pcg":
            iters.append(float(np.mean(semi.iterations)))
        if rec:
            trace = rec.trace
    meta = {"order": 2 * p, "k": float(k), "theta": float(theta), "t_final": float(case.t_final),
            "dt_policy": _policy_meta(policy), "solver": solver}
    if solver == "pcg":
        meta.update({"pcg_tol": cfg.rel_tol, "ichol_boost": cfg.diag_boost,
                     "ichol_drop": cfg.drop_tol, "mean_pcg_iterations": iters})
    if timing:
        meta["wall_time_s"] = time.perf_counter() - start
    return StudyResult(make_report(case.case_id, levels, errors, meta),
                       trace)
