"""Strong-stability-preserving Runge-Kutta schemes written as convex
combinations of forward-Euler steps.

Every stage value is passed through ``prepare`` (slope limiter, then
realizability limiter) before the operator is evaluated on it.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

Prepare = Callable[[np.ndarray], np.ndarray]
Operator = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class SSPScheme:
    name: str
    order: int
    stages: int
    ssp_coefficient: float


SCHEMES = {
    1: SSPScheme("forward-euler", 1, 1, 1.0),
    2: SSPScheme("ssprk(2,2)", 2, 2, 1.0),
    3: SSPScheme("ssprk(3,3)", 3, 3, 1.0),
    4: SSPScheme("ssprk(10,4)", 4, 10, 6.0),
}


def scheme_for_order(order: int) -> SSPScheme:
    try:
        return SCHEMES[order]
    except KeyError:
        raise ValueError(f"no SSP Runge-Kutta scheme of order {order} (supported: 1-4)") from None


def default_time_order(k: int) -> int:
    """Pair spatial degree k-1 with a matching time order, capped at four."""
    return min(max(k, 1), 4)


def ssp_step(u: np.ndarray, dt: float, order: int, L: Operator, prepare: Prepare) -> np.ndarray:
    """Advance ``u`` by one step of the SSP scheme of the given order.

    ``u`` is assumed to be prepared (limited) already; the result is not.
    """
    if order == 1:
        return u + dt * L(u)
    if order == 2:
        v1 = prepare(u + dt * L(u))
        return 0.5 * u + 0.5 * (v1 + dt * L(v1))
    if order == 3:
        v1 = prepare(u + dt * L(u))
        v2 = prepare(0.75 * u + 0.25 * (v1 + dt * L(v1)))
        return u / 3.0 + (2.0 / 3.0) * (v2 + dt * L(v2))
    if order == 4:
        # Ketcheson's ten-stage fourth-order scheme, SSP coefficient 6
        h = dt / 6.0
        y = u
        for _ in range(5):
            y = prepare(y + h * L(y))
        keep = u / 25.0 + (9.0 / 25.0) * y
        y = prepare(0.6 * u + 0.4 * y)
        for _ in range(4):
            y = prepare(y + h * L(y))
        return keep + 0.6 * (y + h * L(y))
    raise ValueError(f"no SSP Runge-Kutta scheme of order {order} (supported: 1-4)")
