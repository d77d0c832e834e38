"""Effective delay: travel delay plus a piecewise-linear schedule penalty.

The penalty family is two-slope: early arrivals are charged beta per hour of
earliness, late arrivals gamma per hour of lateness. The early slope must stay
below 1 so that the penalty's slope bound Delta = -beta exceeds -1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dnl import LoadingResult
from .grid import Profile, TimeGrid
from .network import Network, StructureError

__all__ = [
    "A1ViolationError",
    "SchedulePenalty",
    "CostField",
    "check_slope_bound",
    "effective_delay",
    "min_travel_cost",
]


class A1ViolationError(ValueError):
    """The schedule penalty decreases too steeply (early slope >= 1)."""


class CostInvariantError(RuntimeError):
    """An effective delay came out nonpositive; signals a loading bug."""


@dataclass(frozen=True)
class SchedulePenalty:
    """f(x) = early * max(0, -x) + late * max(0, x), x = arrival - target (hours)."""

    early: float  # beta, cost per hour of early arrival
    late: float  # gamma, cost per hour of late arrival

    def __post_init__(self) -> None:
        if self.early < 0.0 or self.late < 0.0:
            raise ValueError("penalty slopes must be nonnegative")

    def __call__(self, x: float) -> float:
        return self.early * max(0.0, -x) + self.late * max(0.0, x)

    def slope_bound(self) -> float:
        """The largest Delta with f(x2) - f(x1) >= Delta * (x2 - x1) for x1 < x2."""
        return check_slope_bound(self)


def check_slope_bound(penalty: SchedulePenalty) -> float:
    """Return Delta = -early for the two-slope family; reject Delta <= -1.

    For this family the bound is analytic: the steepest descent of f is the
    early branch's slope.
    """
    delta = -penalty.early
    if delta <= -1.0:
        raise A1ViolationError(
            f"early penalty slope {penalty.early} >= 1 makes the slope bound "
            f"{delta} <= -1"
        )
    return delta


@dataclass(frozen=True)
class CostField:
    """Image of one point under the cost mapping: cell-averaged effective
    delays per path plus the inverse-demand value per OD pair (all hours)."""

    psi: tuple[Profile, ...]
    theta: np.ndarray

    def __post_init__(self) -> None:
        theta = np.asarray(self.theta, dtype=float).copy()
        theta.setflags(write=False)
        object.__setattr__(self, "psi", tuple(self.psi))
        object.__setattr__(self, "theta", theta)


def effective_delay(
    result: LoadingResult,
    penalty: SchedulePenalty,
    arrival_target: float,
) -> tuple[Profile, ...]:
    """Cell-averaged effective delays per path.

    Each cell value averages the two endpoint evaluations of
    D(t) + f(t + D(t) - target), using the exact exit-time function.
    """
    check_slope_bound(penalty)
    grid = result.grid
    bounds = grid.boundaries
    out = []
    for p in range(len(result.network.paths)):
        exits = np.array([result.exit_time(p, t) for t in bounds])
        psi_pts = (exits - bounds) + np.array([penalty(e - arrival_target) for e in exits])
        vals = 0.5 * (psi_pts[:-1] + psi_pts[1:])
        if np.any(vals <= 0.0):
            raise CostInvariantError(
                f"nonpositive effective delay on path index {p}; "
                "free-flow times must be positive and the penalty nonnegative"
            )
        out.append(Profile(grid, vals))
    return tuple(out)


def min_travel_cost(costs: CostField, network: Network, od_index: int) -> float:
    """Discrete minimum travel cost of an OD pair: the least cell-averaged
    effective delay over its paths and cells."""
    paths = network.od_paths[od_index]
    if not paths:
        raise StructureError(f"OD pair index {od_index} has no paths")
    return min(float(costs.psi[p].values.min()) for p in paths)
