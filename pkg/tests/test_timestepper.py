import math

import numpy as np
import pytest

from sbpwave.timestepper import StepPolicy, integrate, rk4_step, step_count


def oscillator(t, y):
    return np.array([y[1], -y[0]])


def test_zero_rhs_leaves_state():
    y0 = np.array([1.0, -2.0, 3.0])
    y = rk4_step(lambda t, y: np.zeros_like(y), 0.0, y0, 0.1)
    np.testing.assert_array_equal(y, y0)
    y, log = integrate(lambda t, y: np.zeros_like(y), y0, 0.0, 1.0, 0.3)
    np.testing.assert_array_equal(y, y0)
    assert log.steps == 4


def test_stability_polynomial():
    lam, dt = -1.0, 0.1
    z = lam * dt
    y = rk4_step(lambda t, y: lam * y, 0.0, np.array([1.0]), dt)
    assert y[0] == pytest.approx(1 + z + z * z / 2 + z ** 3 / 6 + z ** 4 / 24, rel=1e-15)


def test_four_evaluations_per_step():
    calls = []

    def rhs(t, y):
        calls.append(t)
        return y

    rk4_step(rhs, 1.0, np.ones(2), 0.2)
    assert calls == pytest.approx([1.0, 1.1, 1.1, 1.2])


def test_oscillator_order_four():
    errs = []
    for dt in (2 * math.pi / 40, 2 * math.pi / 80, 2 * math.pi / 160):
        y, _ = integrate(oscillator, np.array([1.0, 0.0]), 0.0, 2 * math.pi, dt)
        errs.append(np.linalg.norm(y - [1.0, 0.0]))
    rates = np.log2(np.array(errs[:-1]) / errs[1:])
    np.testing.assert_allclose(rates, 4.0, atol=0.1)


def test_last_step_lands_on_final_time():
    seen = []
    y, log = integrate(oscillator, np.array([1.0, 0.0]), 0.0, 1.0, 0.3,
                       observers=[lambda t, y: seen.append(t)])
    assert seen[-1] == 1.0
    assert log.times == seen
    assert np.diff(seen)[-1] == pytest.approx(0.1)
    np.testing.assert_allclose(y, [math.cos(1.0), -math.sin(1.0)], atol=1e-4)


@pytest.mark.parametrize("t0, tf, dt, n", [(0.0, 1.0, 0.1, 10), (0.0, 1.0, 0.3, 4),
                                           (0.5, 2.0, 0.5, 3), (0.0, 2.0, 0.0628, 32)])
def test_step_count(t0, tf, dt, n):
    assert step_count(t0, tf, dt) == n == math.ceil(round((tf - t0) / dt, 9))


def test_deterministic():
    y1, _ = integrate(oscillator, np.array([0.3, 0.1]), 0.0, 3.0, 0.07)
    y2, _ = integrate(oscillator, np.array([0.3, 0.1]), 0.0, 3.0, 0.07)
    assert np.array_equal(y1, y2)


def test_invalid_arguments():
    with pytest.raises(ValueError):
        rk4_step(oscillator, 0.0, np.ones(2), 0.0)
    with pytest.raises(ValueError):
        integrate(oscillator, np.ones(2), 1.0, 1.0, 0.1)
    with pytest.raises(ValueError):
        StepPolicy("adaptive")
    with pytest.raises(ValueError):
        StepPolicy("rate_matched", q=0.5)
    with pytest.raises(ValueError):
        StepPolicy("cfl", C=0.0)


def test_policies():
    cfl = StepPolicy("cfl", 0.2)
    assert cfl.dt(0.01, 2.0) == pytest.approx(0.001)
    matched = StepPolicy.matched_to(h_ref=0.04, q=1.5)
    assert matched.dt(0.04) == pytest.approx(cfl.dt(0.04))
    assert matched.dt(0.01) == pytest.approx(cfl.dt(0.04) * 0.25 ** 1.5)
    # temporal error O(dt^4) then scales like h^6
    assert math.log2(matched.dt(0.02) / matched.dt(0.01)) * 4 == pytest.approx(6.0)


def test_energy_observer_flat_on_conservative_run():
    trace = []
    integrate(oscillator, np.array([1.0, 0.0]), 0.0, 2.0, 0.002,
              observers=[lambda t, y: trace.append(y @ y)])
    trace = np.array(trace)
    assert np.abs(trace - trace[0]).max() <= 1e-10 * trace[0]
