"""Classical fourth-order Runge-Kutta time integration."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

Rhs = Callable[[float, np.ndarray], np.ndarray]
Observer = Callable[[float, np.ndarray], None]


@dataclass(frozen=True)
class StepPolicy:
    """Time-step rule.

    ``cfl`` gives ``dt = C h / c_max``.  ``rate_matched`` gives
    ``dt = C h**q / c_max`` so that the fourth-order temporal error scales
    like ``h**(4 q)``.
    """

    mode: str = "cfl"
    C: float = 0.2
    q: float = 1.0

    def __post_init__(self):
        if self.mode not in ("cfl", "rate_matched"):
            raise ValueError(f"unknown step policy {self.mode!r}")
        if not self.C > 0:
            raise ValueError("step constant must be positive")
        if self.q < 1:
            raise ValueError("rate exponent must be at least 1")

    def dt(self, h: float, c_max: float = 1.0) -> float:
        if self.mode == "cfl":
            return self.C * h / c_max
        return self.C * h ** self.q / c_max

    @classmethod
    def matched_to(cls, h_ref: float, q: float, C: float = 0.2) -> "StepPolicy":
        """Rate-matched rule that coincides with ``cfl(C)`` at spacing ``h_ref``."""
        return cls(mode="rate_matched", C=C * h_ref ** (1.0 - q), q=q)


def rk4_step(rhs: Rhs, t: float, y: np.ndarray, dt: float) -> np.ndarray:
    if not dt > 0:
        raise ValueError("dt must be positive")
    k1 = rhs(t, y)
    k2 = rhs(t + 0.5 * dt, y + (0.5 * dt) * k1)
    k3 = rhs(t + 0.5 * dt, y + (0.5 * dt) * k2)
    k4 = rhs(t + dt, y + dt * k3)
    return y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


@dataclass
class IntegrationLog:
    steps: int
    times: list


def step_count(t0: float, t_final: float, dt: float) -> int:
    n = (t_final - t0) / dt
    # tolerate roundoff in the quotient so an exact fit is not padded by one step
    return max(1, math.ceil(n - 1e-9))


def integrate(
    rhs: Rhs,
    y0: np.ndarray,
    t0: float,
    t_final: float,
    dt: float,
    observers: Sequence[Observer] = (),
) -> tuple[np.ndarray, IntegrationLog]:
    """Advance from ``t0`` to ``t_final`` with steps ``dt``, shortening the last one.

    Each observer is called as ``obs(t, y)`` at the start and after every step.
    """
    if not t_final > t0:
        raise ValueError("t_final must exceed t0")
    nsteps = step_count(t0, t_final, dt)
    y = np.array(y0, dtype=float)
    t = t0
    times = [t]
    for obs in observers:
        obs(t, y)
    for k in range(nsteps):
        step = dt if k < nsteps - 1 else t_final - t
        y = rk4_step(rhs, t, y, step)
        t = t0 + (k + 1) * dt if k < nsteps - 1 else t_final
        times.append(t)
        for obs in observers:
            obs(t, y)
    return y, IntegrationLog(steps=nsteps, times=times)
