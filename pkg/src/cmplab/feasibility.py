"""Demand feasibility: link-flow propagation and the phase-activation LP.

The LP is small (one variable per phase plus the margin), so it is solved with
a dense tableau simplex using Bland's rule instead of pulling in a solver.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .network import Link, Network


class FeasibilityError(RuntimeError):
    pass


@dataclass(frozen=True)
class DemandVector:
    """Entry demands and propagated link/movement demands, all in veh/s."""

    entry: Mapping[str, float]
    link_flows: Mapping[str, float]
    movement_demands: Mapping[str, float]


@dataclass(frozen=True)
class FeasibilityResult:
    feasible: bool
    epsilon: float
    splits: Mapping[str, tuple[float, ...]]  # node -> average activation per phase
    binding: tuple[str, ...] = ()  # movements whose capacity constraint is tight
    max_violation: float = 0.0


def beta_upper_bound(link: Link) -> float:
    """k_j / k_c - 1 for one link."""
    return link.critical_spacing / link.jam_spacing - 1.0


def routing_matrix(network: Network) -> tuple[list[str], np.ndarray]:
    ids = sorted(network.links)
    index = {lid: i for i, lid in enumerate(ids)}
    R = np.zeros((len(ids), len(ids)))
    for mv in network.movements.values():
        R[index[mv.upstream], index[mv.downstream]] += mv.turning_ratio
    return ids, R


def propagate_demands(network: Network, entry_demands: Mapping[str, float]) -> DemandVector:
    """Solve f = d + R^T f for the link flows; movement demand is f_l r(l,m)."""
    ids, R = routing_matrix(network)
    d = np.zeros(len(ids))
    for lid, rate in entry_demands.items():
        if lid not in network.links:
            raise KeyError(f"unknown entry link {lid!r}")
        if rate < 0:
            raise ValueError(f"negative demand on {lid!r}")
        d[ids.index(lid)] = rate
    if len(ids) and np.max(np.abs(np.linalg.eigvals(R))) >= 1.0 - 1e-12:
        raise FeasibilityError("routing recirculates without reaching an exit")
    f = np.linalg.solve(np.eye(len(ids)) - R.T, d)
    f = np.where(np.abs(f) < 1e-15, 0.0, f)
    flows = {lid: float(f[i]) for i, lid in enumerate(ids)}
    mov = {mid: flows[mv.upstream] * mv.turning_ratio for mid, mv in network.movements.items()}
    return DemandVector(dict(entry_demands), flows, mov)


def entry_demands_per_second(rates_veh_hr: Mapping[str, float]) -> dict[str, float]:
    return {k: v / 3600.0 for k, v in rates_veh_hr.items()}


# -- LP ------------------------------------------------------------------------------


def simplex_max(c: np.ndarray, A: np.ndarray, b: np.ndarray, max_iter: int = 10000) -> np.ndarray:
    """Maximize c.x subject to A x <= b, x >= 0, with b >= 0 (origin feasible)."""
    A = np.asarray(A, float)
    b = np.asarray(b, float)
    c = np.asarray(c, float)
    if np.any(b < 0):
        raise ValueError("simplex_max needs b >= 0")
    m, n = A.shape
    T = np.zeros((m + 1, n + m + 1))
    T[:m, :n] = A
    T[:m, n:n + m] = np.eye(m)
    T[:m, -1] = b
    T[m, :n] = -c
    basis = list(range(n, n + m))
    tol = 1e-12
    for _ in range(max_iter):
        entering = next((j for j in range(n + m) if T[m, j] < -tol), None)
        if entering is None:
            break
        col = T[:m, entering]
        rows = [i for i in range(m) if col[i] > tol]
        if not rows:
            raise FeasibilityError("LP unbounded")
        ratios = [T[i, -1] / col[i] for i in rows]
        best = min(ratios)
        leaving = min((i for i, r in zip(rows, ratios) if r <= best + tol), key=lambda i: basis[i])
        T[leaving] /= T[leaving, entering]
        for i in range(m + 1):
            if i != leaving and T[i, entering] != 0.0:
                T[i] -= T[i, entering] * T[leaving]
        basis[leaving] = entering
    else:
        raise FeasibilityError("simplex did not converge")
    x = np.zeros(n + m)
    for i, j in enumerate(basis):
        x[j] = T[i, -1]
    return x[:n]


def feasibility_lp(network: Network, demand: DemandVector, capacity_factor: float = 1.0) -> FeasibilityResult:
    """Largest uniform margin eps with d(l,m) + eps <= c(l,m) sum_{phi contains (l,m)} S_phi.

    `capacity_factor` scales every saturation flow, e.g. 1 - lost_time / cycle to
    account for switching losses.
    """
    if not 0 < capacity_factor <= 1:
        raise ValueError("capacity_factor must be in (0, 1]")
    nodes = sorted(network.phases)
    var = [(nid, ph.index) for nid in nodes for ph in network.phases[nid]]
    col = {v: i for i, v in enumerate(var)}
    n_s = len(var)
    mids = sorted(m for m in network.movements if network.node_of(network.movements[m]) in network.phases)
    if not mids:
        return FeasibilityResult(True, float("inf"), {}, ())
    d = np.array([demand.movement_demands.get(m, 0.0) for m in mids])
    # substitute eps = e - E0 so that every right-hand side is non-negative
    E0 = float(d.max()) + 1.0
    rows, rhs = [], []
    for nid in nodes:
        r = np.zeros(n_s + 1)
        for ph in network.phases[nid]:
            r[col[(nid, ph.index)]] = 1.0
        rows.append(r)
        rhs.append(1.0)
    for mid in mids:
        mv = network.movements[mid]
        nid = network.node_of(mv)
        r = np.zeros(n_s + 1)
        for ph in network.phases[nid]:
            if mid in ph.movements:
                r[col[(nid, ph.index)]] = -mv.saturation_flow * capacity_factor
        r[-1] = 1.0
        rows.append(r)
        rhs.append(E0 - demand.movement_demands.get(mid, 0.0))
    A = np.array(rows)
    b = np.array(rhs)
    obj = np.zeros(n_s + 1)
    obj[-1] = 1.0
    x = simplex_max(obj, A, b)
    eps = float(x[-1] - E0)
    S = x[:n_s]

    # re-check the solution against the original constraints
    viol = float(max(0.0, np.max(A @ x - b), -np.min(S)))
    splits = {nid: tuple(float(S[col[(nid, ph.index)]]) for ph in network.phases[nid]) for nid in nodes}
    binding = []
    for i, mid in enumerate(mids):
        slack = b[len(nodes) + i] - A[len(nodes) + i] @ x
        if abs(slack) < 1e-9:
            binding.append(mid)
    return FeasibilityResult(eps > 0, eps, splits, tuple(binding), viol)


def check_scenario(config, capacity_factor: float = 1.0) -> FeasibilityResult:
    """Feasibility of a `ScenarioConfig`'s entry demand."""
    from .config import build_network

    network = build_network(config)
    demand = propagate_demands(network, entry_demands_per_second(config.demand.rates))
    return feasibility_lp(network, demand, capacity_factor)
