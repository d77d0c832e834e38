"""Equilibrium verification, independent of how a point was produced.

Checks a (flows, demands) point against the complementarity conditions:
used departure cells cost exactly the OD's demand value, no cell costs less.
The fixed-demand conditions are the special case where the demand value is
the OD's own minimum cost.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cost import CostField
from .grid import ExtendedPoint, ShapeError
from .network import Network

__all__ = ["ResidualReport", "due_residuals", "vi_lhs", "best_response", "random_probe"]

DEFAULT_FLOW_THRESHOLD_REL = 1e-6  # of the max cell flow; defines "used" cells


@dataclass(frozen=True)
class ResidualReport:
    """Per-OD equilibrium residuals (all nonnegative).

    r1: flow-weighted positive part of (cell cost - demand value), veh*h.
    r2: amount by which the demand value exceeds the cheapest cell cost, h.
    demand_gap: |min used cost - demand value|, h.
    """

    v: np.ndarray  # min cost over used cells (min over all cells if none used)
    theta: np.ndarray  # demand value per OD
    r1: np.ndarray
    r2: np.ndarray
    demand_gap: np.ndarray
    demand: np.ndarray

    def max_r1(self) -> float:
        return float(self.r1.max())

    def max_r2(self) -> float:
        return float(self.r2.max())

    def is_equilibrium(
        self,
        eps_r1: float = 1e-4,
        eps_r2: float = 1e-4,
        eps_demand: float = 1e-3,
    ) -> bool:
        """Relative test: r1 against demand * theta, r2 and the demand gap
        against theta, per OD pair."""
        scale1 = np.maximum(self.demand * self.theta, 1e-300)
        ok1 = np.all(self.r1 <= eps_r1 * scale1)
        ok2 = np.all(self.r2 <= eps_r2 * self.theta)
        ok3 = np.all(self.demand_gap <= eps_demand * self.theta)
        return bool(ok1 and ok2 and ok3)

    def summary_lines(self) -> list[str]:
        lines = []
        for w in range(self.v.shape[0]):
            lines.append(
                f"od {w}: v={self.v[w]!r} theta={self.theta[w]!r} "
                f"r1={self.r1[w]!r} r2={self.r2[w]!r} demand_gap={self.demand_gap[w]!r}"
            )
        return lines


def due_residuals(
    point: ExtendedPoint,
    costs: CostField,
    network: Network,
    flow_threshold: float | None = None,
) -> ResidualReport:
    """Residuals of the equilibrium conditions at a feasible point.

    ``flow_threshold`` gives "h > 0" a numerical meaning; it defaults to a
    small fraction of the maximum cell flow.
    """
    if flow_threshold is None:
        max_flow = max(float(f.values.max()) for f in point.flows)
        flow_threshold = DEFAULT_FLOW_THRESHOLD_REL * max_flow
    dt = point.grid.dt
    n_od = len(network.od_pairs)
    v = np.empty(n_od)
    r1 = np.zeros(n_od)
    r2 = np.zeros(n_od)
    for w, paths in enumerate(network.od_paths):
        theta_w = float(costs.theta[w])
        used_min = np.inf
        overall_min = np.inf
        for p in paths:
            psi = costs.psi[p].values
            h = point.flows[p].values
            overall_min = min(overall_min, float(psi.min()))
            used = h > flow_threshold
            if np.any(used):
                used_min = min(used_min, float(psi[used].min()))
            r1[w] += float(np.dot(h, np.maximum(0.0, psi - theta_w))) * dt
        v[w] = used_min if np.isfinite(used_min) else overall_min
        r2[w] = max(0.0, theta_w - overall_min)
    return ResidualReport(
        v=v,
        theta=costs.theta.copy(),
        r1=r1,
        r2=r2,
        demand_gap=np.abs(v - costs.theta),
        demand=point.demands.copy(),
    )


def vi_lhs(
    x_star: ExtendedPoint,
    x_probe: ExtendedPoint,
    costs: CostField,
    network: Network,
) -> float:
    """Left-hand side of the variational inequality at x_star, probed with
    x_probe: flow-cost pairing of the flow difference minus the demand-value
    pairing of the demand difference. Nonnegative for all feasible probes
    exactly when x_star is an equilibrium."""
    if len(x_star.flows) != len(x_probe.flows) or x_star.grid != x_probe.grid:
        raise ShapeError("probe must share the solution's grid and path set")
    if x_star.demands.shape != x_probe.demands.shape:
        raise ShapeError("probe must share the solution's OD set")
    dt = x_star.grid.dt
    acc = 0.0
    for p in range(len(x_star.flows)):
        acc += float(
            np.dot(costs.psi[p].values, x_probe.flows[p].values - x_star.flows[p].values)
        ) * dt
    acc -= float(np.dot(costs.theta, x_probe.demands - x_star.demands))
    return acc


def best_response(
    costs: CostField, network: Network, caps: np.ndarray, grid
) -> ExtendedPoint:
    """The feasible point minimizing the pairing with the given costs: per OD,
    the cap volume at the cheapest (path, cell) when its reduced cost is
    negative, nothing otherwise. Ties break to lowest path id, earliest cell."""
    from .solver import _od_argmin  # local import to avoid a cycle

    h = np.zeros((len(network.paths), grid.n))
    demands = np.zeros(len(network.od_pairs))
    for w in range(len(network.od_pairs)):
        p, j, val = _od_argmin(costs, network, w)
        if val - float(costs.theta[w]) < 0.0:
            h[p, j] = caps[w] / grid.dt
            demands[w] = caps[w]
    return ExtendedPoint.from_matrix(grid, h, demands)


def random_probe(
    rng: np.random.Generator,
    network: Network,
    caps: np.ndarray,
    grid,
) -> ExtendedPoint:
    """A random feasible point: uniform cell flows per path, rescaled so each
    OD carries a uniform fraction of its cap."""
    h = np.zeros((len(network.paths), grid.n))
    demands = np.zeros(len(network.od_pairs))
    for w, paths in enumerate(network.od_paths):
        for p in paths:
            h[p, :] = rng.uniform(0.0, 1.0, size=grid.n)
        vol = sum(h[p].sum() for p in paths) * grid.dt
        target = rng.uniform(0.0, caps[w])
        if vol > 0.0:
            for p in paths:
                h[p] *= target / vol
        demands[w] = target if vol > 0.0 else 0.0
        if vol == 0.0:
            for p in paths:
                h[p, :] = 0.0
    return ExtendedPoint.from_matrix(grid, h, demands)
