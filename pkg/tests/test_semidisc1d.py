import math

import numpy as np
import pytest

from sbpwave.sbp_ops import Grid1D, build_constant_ops, build_variable_ops
from sbpwave.semidisc1d import (Dirichlet, InterfaceSpec, Neumann, Periodic, assemble_single,
                                assemble_two_block, constraint_vector, discrete_energy,
                                rhs_single)
from sbpwave.timestepper import integrate

PATTERNS = [
    (Dirichlet(beta=-1.0), Neumann(alpha=-0.5)),
    (Dirichlet(beta=0.0), Neumann(alpha=0.0)),
    (Neumann(alpha=-0.3), Dirichlet(beta=-2.0)),
    (Dirichlet(beta=-1.0), Dirichlet(beta=-0.25)),
    (Neumann(alpha=-1.0), Neumann(alpha=0.0)),
    (Periodic(), Periodic()),
]


def variable_ops(p, n=41):
    grid = Grid1D(n, 0.0, 1.0)
    return build_variable_ops(p, grid, 1.5 + np.sin(2 * grid.nodes))


def random_state(semi, seed=0):
    rng = np.random.default_rng(seed)
    return rng.standard_normal((2, semi.size))


# ----------------------------------------------------------------------------
# validation

def test_positive_dissipation_rejected():
    with pytest.raises(ValueError):
        Dirichlet(beta=0.5)
    with pytest.raises(ValueError):
        Neumann(alpha=1.0)
    with pytest.raises(ValueError):
        InterfaceSpec(gamma=0.1)


def test_periodic_must_pair():
    ops = build_constant_ops(2, Grid1D(21))
    with pytest.raises(ValueError, match="periodic"):
        assemble_single(ops, Periodic(), Dirichlet())


def test_blocks_must_meet():
    a = build_constant_ops(2, Grid1D(21, -1.0, 0.0))
    b = build_constant_ops(2, Grid1D(21, 0.1, 1.0))
    with pytest.raises(ValueError, match="do not meet"):
        assemble_two_block(a, b, InterfaceSpec(), outer=(Dirichlet(), Dirichlet()))


def test_unknown_constraint_and_seam():
    ops = build_constant_ops(2, Grid1D(21))
    with pytest.raises(ValueError):
        constraint_vector(ops, "mean")
    a = build_constant_ops(2, Grid1D(21, -1.0, 0.0))
    b = build_constant_ops(2, Grid1D(21, 0.0, 1.0))
    with pytest.raises(ValueError):
        assemble_two_block(a, b, InterfaceSpec(), seam="stitched")


def test_glued_seam_requirements():
    a = build_constant_ops(2, Grid1D(21, -1.0, 0.0))
    b = build_constant_ops(2, Grid1D(31, 0.0, 1.0))
    with pytest.raises(ValueError, match="spacing"):
        assemble_two_block(a, b, InterfaceSpec())
    c = build_constant_ops(3, Grid1D(21, 0.0, 1.0))
    with pytest.raises(ValueError, match="order"):
        assemble_two_block(a, c, InterfaceSpec())


# ----------------------------------------------------------------------------
# trivial states

@pytest.mark.parametrize("left, right", PATTERNS)
def test_constant_state_is_steady(left, right):
    semi = assemble_single(variable_ops(2), left, right)
    y = semi.state(np.full(semi.size, 3.0), np.zeros(semi.size))
    dy = semi.rhs(0.0, y)
    assert np.abs(dy).max() <= 1e-11


def no_flux_dissipation(bc):
    return not (isinstance(bc, Neumann) and bc.alpha)


@pytest.mark.parametrize("left, right", [pair for pair in PATTERNS
                                         if all(map(no_flux_dissipation, pair))])
def test_zero_velocity_gives_zero_displacement_rate(left, right):
    semi = assemble_single(variable_ops(3), left, right)
    rng = np.random.default_rng(1)
    y = semi.state(rng.standard_normal(semi.size), np.zeros(semi.size))
    dy = rhs_single(semi, y, 0.0)
    assert np.abs(dy[0]).max() <= 1e-12


def test_energy_of_trivial_states():
    semi = assemble_single(variable_ops(2), Dirichlet(), Neumann())
    n = semi.size
    assert discrete_energy(semi, np.zeros((2, n))) == 0.0
    assert abs(discrete_energy(semi, semi.state(np.ones(n), np.zeros(n)))) <= 1e-12


# ----------------------------------------------------------------------------
# energy-rate identities

@pytest.mark.parametrize("p", [1, 2, 3])
@pytest.mark.parametrize("left, right", PATTERNS)
@pytest.mark.parametrize("constraint", ["sum", "quadrature"])
def test_energy_rate_identity_single(p, left, right, constraint):
    semi = assemble_single(variable_ops(p), left, right, constraint=constraint)
    y = random_state(semi, seed=p)
    rate = semi.energy_rate(y)
    pred = semi.predicted_energy_rate(y)
    scale = max(1.0, abs(pred))
    assert abs(rate - pred) <= 1e-11 * scale * semi.size


@pytest.mark.parametrize("tau", [0.0, 0.5, 0.8, 1.7])
@pytest.mark.parametrize("gamma", [0.0, -1.0])
@pytest.mark.parametrize("seam", ["glued", "interface"])
def test_energy_rate_identity_two_block(tau, gamma, seam):
    gl, gr = Grid1D(31, -1.0, 0.0), Grid1D(31, 0.0, 1.0)
    semi = assemble_two_block(build_constant_ops(2, gl), build_constant_ops(2, gr),
                              InterfaceSpec(tau, gamma), seam=seam)
    y = random_state(semi, seed=3)
    rate, pred = semi.energy_rate(y), semi.predicted_energy_rate(y)
    assert abs(rate - pred) <= 1e-11 * max(1.0, abs(pred)) * semi.size
    if gamma < 0:
        assert pred < 0


def test_energy_rate_identity_two_block_dirichlet_outer():
    gl, gr = Grid1D(31, -1.0, 0.0), Grid1D(41, 0.0, 1.0)
    ol = build_variable_ops(3, gl, 1.0 + gl.nodes ** 2)
    orr = build_constant_ops(3, gr, 2.0)
    semi = assemble_two_block(ol, orr, InterfaceSpec(0.3, -0.7),
                              outer=(Dirichlet(beta=-1.0), Neumann(alpha=-0.2)))
    y = random_state(semi, seed=4)
    rate, pred = semi.energy_rate(y), semi.predicted_energy_rate(y)
    v = y[1]
    jump = v[30] - v[31]
    dn = ol.dn @ y[0, :31]
    expected = 2 * (-1.0) * v[0] ** 2 + 2 * (-0.2) * (orr.dn @ y[0, 31:]) ** 2 + 2 * (-0.7) * jump ** 2
    assert pred == pytest.approx(expected, rel=1e-13)
    assert abs(rate - pred) <= 1e-11 * max(1.0, abs(pred)) * semi.size
    assert np.isfinite(dn)


def test_energy_rate_by_finite_difference():
    """A tiny RK step reproduces the analytic dissipation rate to O(dt)."""
    semi = assemble_single(variable_ops(2), Dirichlet(beta=-1.0), Neumann(alpha=-0.5))
    y = random_state(semi, seed=5)
    ops = semi.blocks[0].ops
    analytic = 2 * (-0.5) * (ops.dn @ y[0]) ** 2 + 2 * (-1.0) * y[1, 0] ** 2
    rates = []
    for dt in (1e-5, 5e-6):
        y1, _ = integrate(semi, y, 0.0, dt, dt)
        rates.append((semi.energy(y1) - semi.energy(y)) / dt)
    err = [abs(r - analytic) for r in rates]
    assert err[1] < err[0] or err[1] <= 1e-6 * abs(analytic)
    assert err[1] <= 1e-3 * abs(analytic)


# ----------------------------------------------------------------------------
# structure of the penalties

@pytest.mark.parametrize("constraint", ["sum", "quadrature"])
def test_mean_constraint(constraint):
    semi = assemble_single(variable_ops(2), Dirichlet(beta=-1.0), Neumann(alpha=-1.0),
                           constraint=constraint)
    y = random_state(semi, seed=6)
    dy = semi.rhs(0.0, y)
    c = constraint_vector(semi.blocks[0].ops, constraint)
    assert abs(c @ (dy[0] - y[1])) <= 1e-10 * np.linalg.norm(y[1])


def test_dirichlet_mismatch_shape():
    """A velocity mismatch at the left end adds ``b1 delta A^+ d1`` to u_t."""
    ops = build_constant_ops(2, Grid1D(51))
    semi = assemble_single(ops, Dirichlet(f_t=lambda t: 0.0), Dirichlet())
    v = np.zeros(ops.n)
    v[0] = 0.3
    dy = semi.rhs(0.0, semi.state(np.zeros(ops.n), v))
    w = np.linalg.pinv(ops.A.toarray()) @ ops.d1
    np.testing.assert_allclose(dy[0] - v, ops.b1 * 0.3 * w, atol=1e-9)


def test_compatible_linear_data_across_interface():
    gl, gr = Grid1D(21, -1.0, 0.0), Grid1D(21, 0.0, 1.0)
    ol, orr = build_constant_ops(2, gl), build_constant_ops(2, gr)
    semi = assemble_two_block(ol, orr, InterfaceSpec(0.5, -1.0),
                              outer=(Dirichlet(), Dirichlet()))
    y = semi.state(semi.x, np.zeros(semi.size))
    c, s = semi.penalties(y, 0.0)
    assert np.abs(c[0, 1]) <= 1e-12 and np.abs(c[1, 0]) <= 1e-12
    assert np.abs(s[0, 1]) <= 1e-12 and np.abs(s[1, 0]) <= 1e-12
    dy = semi.rhs(0.0, y)
    np.testing.assert_allclose(dy[1], np.r_[ol.D @ gl.nodes, orr.D @ gr.nodes], atol=1e-12)


def test_blocks_solve_independently():
    gl, gr = Grid1D(21, -1.0, 0.0), Grid1D(31, 0.0, 1.0)
    semi = assemble_two_block(build_constant_ops(2, gl), build_constant_ops(2, gr),
                              InterfaceSpec(), outer=(Dirichlet(), Dirichlet()))
    assert [b.n for b in semi.blocks] == [21, 31]
    assert semi.blocks[1].offset == 21


def test_glued_seam_is_one_grid():
    gl, gr = Grid1D(21, -1.0, 0.0), Grid1D(21, 0.0, 1.0)
    semi = assemble_two_block(build_constant_ops(2, gl), build_constant_ops(2, gr),
                              InterfaceSpec())
    assert semi.size == 41
    assert len(semi.blocks) == 1 and len(semi.couplings) == 1
    # right block first, then the left block without its seam point
    np.testing.assert_allclose(semi.x, np.r_[gr.nodes, gl.nodes[1:]])


def test_glued_seam_with_variable_coefficient():
    gl, gr = Grid1D(21, -1.0, 0.0), Grid1D(21, 0.0, 1.0)
    b = lambda x: 2.0 + np.cos(np.pi * x)  # noqa: E731  continuous across x = +-1
    semi = assemble_two_block(build_variable_ops(2, gl, b(gl.nodes)),
                              build_variable_ops(2, gr, b(gr.nodes)), InterfaceSpec(0.5, -1.0))
    y = random_state(semi, seed=8)
    assert semi.energy_rate(y) == pytest.approx(semi.predicted_energy_rate(y), rel=1e-10)


# ----------------------------------------------------------------------------
# consistency and energy

def test_consistency_with_exact_solution():
    """RHS on exact samples matches (V, U_xx) up to truncation error."""
    errs = []
    for n in (101, 201, 401):
        grid = Grid1D(n, -math.pi / 2, math.pi / 2)
        ops = build_constant_ops(2, grid)
        t = 0.3
        U = lambda x, t: np.cos(3 * x + 1) * np.cos(3 * t)  # noqa: E731
        V = lambda x, t: -3 * np.cos(3 * x + 1) * np.sin(3 * t)  # noqa: E731
        lo, hi = grid.x_lo, grid.x_hi
        semi = assemble_single(ops, Dirichlet(f_t=lambda t: V(lo, t), beta=-1.0),
                               Dirichlet(f_t=lambda t: V(hi, t), beta=-1.0))
        x = grid.nodes
        dy = semi.rhs(t, semi.state(U(x, t), V(x, t)))
        np.testing.assert_allclose(dy[0], V(x, t), atol=1e-12)
        err = np.abs(dy[1] + 9 * U(x, t))
        errs.append((err[:4].max(), err[10:-10].max()))
    errs = np.array(errs)
    assert np.log2(errs[1, 0] / errs[2, 0]) == pytest.approx(2.0, abs=0.2)
    assert np.log2(errs[1, 1] / errs[2, 1]) == pytest.approx(4.0, abs=0.2)


def test_energy_matches_continuous_integral():
    n = 201
    grid = Grid1D(n, -math.pi / 2, math.pi / 2)
    ops = build_constant_ops(2, grid)
    semi = assemble_single(ops, Dirichlet(), Dirichlet())
    x = grid.nodes
    U, V = np.cos(10 * x + 1) * math.cos(2), -10 * np.cos(10 * x + 1) * math.sin(2)
    E = semi.energy(semi.state(U, V))
    # integral of V^2 + U_x^2 over the interval
    from scipy.integrate import quad
    exact = quad(lambda s: (10 * math.cos(10 * s + 1) * math.sin(2)) ** 2
                 + (10 * math.sin(10 * s + 1) * math.cos(2)) ** 2,
                 -math.pi / 2, math.pi / 2, limit=200)[0]
    assert abs(E - exact) <= 1e-4 * exact


def smooth_periodic_state(semi):
    x = semi.x
    return semi.state(np.sin(2 * x) + 0.5 * np.cos(4 * x), np.cos(2 * x))


@pytest.mark.parametrize("kind", ["single", "two_block"])
def test_energy_conservation(kind):
    if kind == "single":
        grid = Grid1D(201, -math.pi / 2, math.pi / 2)
        semi = assemble_single(build_constant_ops(2, grid), Dirichlet(), Neumann())
        x = grid.nodes
        s = x + math.pi / 2
        # data compatible with U = 0 on the left and U_x = 0 on the right
        y0 = semi.state(np.sin(s / 2) + 0.3 * np.sin(1.5 * s), 0 * x)
        h = grid.h
    else:
        gl, gr = Grid1D(101, -math.pi / 2, 0.0), Grid1D(101, 0.0, math.pi / 2)
        semi = assemble_two_block(build_constant_ops(2, gl), build_constant_ops(2, gr),
                                  InterfaceSpec(0.5, 0.0))
        y0 = smooth_periodic_state(semi)
        h = gl.h
    trace = []
    integrate(semi, y0, 0.0, 2.0, 0.2 * h, observers=[lambda t, y: trace.append(semi.energy(y))])
    trace = np.array(trace)
    assert np.abs(trace - trace[0]).max() <= 1e-9 * trace[0]


def test_energy_monotone_with_dissipation():
    gl, gr = Grid1D(61, -math.pi / 2, 0.0), Grid1D(61, 0.0, math.pi / 2)
    semi = assemble_two_block(build_constant_ops(3, gl), build_constant_ops(3, gr),
                              InterfaceSpec(0.5, -1.0), seam="interface")
    y0 = random_state(semi, seed=9)
    trace = []
    integrate(semi, y0, 0.0, 0.5, 0.05 * gl.h,
              observers=[lambda t, y: trace.append(semi.energy(y))])
    steps = np.diff(trace)
    assert np.all(steps <= 1e-12 * trace[0])
    assert trace[-1] < trace[0]
