"""Generator for the east-west signalized arterial used in all experiments.

Layout for ``n`` intersections ``I0 .. I{n-1}`` (west to east)::

    E0 -> I0 -> E1 -> I1 -> ... -> I{n-1} -> E{n}      (eastbound, E{k} spans segment k)
    W0 <- I0 <- W1 <- I1 <- ... <- I{n-1} <- W{n}      (westbound)

Every intersection also has a northbound entry ``NB{i}``, a southbound entry
``SB{i}`` and exits ``NX{i}`` / ``SX{i}``. Segment 0 and segment n carry the
corridor entries and exits.
"""

from __future__ import annotations

from typing import Mapping

import numpy as np

from .config import ControllerSpec, DemandSpec, NetworkSpec, RunSpec, ScenarioConfig
from .network import CRITICAL_SPACING, FREE_FLOW_SPEED, JAM_SPACING, Link, Movement, Node, Phase

# Demand totals for the full 8-intersection layout (2 major + 16 minor entries).
PAPER_TOTALS = {"medium": 6336.0, "high": 7656.0}
PAPER_INTERSECTIONS = 8
LANE_SAT_FLOW = 1800.0 / 3600.0  # veh/s per lane

# Split used by vehicles without a corridor route (left, through, right).
MAJOR_UNTAGGED_SPLIT = (0.1, 0.8, 0.1)
MINOR_UNTAGGED_SPLIT = (0.2, 0.6, 0.2)

DEFAULT_LANES = {"major": {"left": 1, "through": 1, "right": 1}, "minor": {"left": 1, "through_right": 1}}

PHASE_NAMES = ("EW through+right", "EW left", "NS through+right", "NS left")


class LaneSpecError(ValueError):
    pass


def per_entry_rates(demand_spec, n_intersections: int, ratio: float = 5.0) -> tuple[float, float]:
    """Return (major, minor) entry rates in veh/hr.

    Named levels fix the per-entry rates from the 8-intersection totals, so a smaller
    corridor keeps the same per-approach loading.
    """
    if isinstance(demand_spec, Mapping):
        return float(demand_spec["major"]), float(demand_spec["minor"])
    if isinstance(demand_spec, str):
        if demand_spec not in PAPER_TOTALS:
            raise ValueError(f"unknown demand level {demand_spec!r}")
        q = PAPER_TOTALS[demand_spec] / (2 * ratio + 2 * PAPER_INTERSECTIONS)
        return ratio * q, q
    total = float(demand_spec)
    q = total / (2 * ratio + 2 * n_intersections)
    return ratio * q, q


def _check_lanes(lane_spec) -> dict:
    spec = {k: dict(v) for k, v in DEFAULT_LANES.items()}
    if lane_spec is None:
        return spec
    for group, lanes in lane_spec.items():
        if group not in spec:
            raise LaneSpecError(f"unknown lane group {group!r}")
        for key, value in lanes.items():
            if key not in spec[group]:
                raise LaneSpecError(f"unknown lane key {group}.{key}")
            if int(value) != value or value < 1:
                raise LaneSpecError(f"{group}.{key} must be a positive integer, got {value}")
            spec[group][key] = int(value)
    return spec


def generate_arterial(
    n_intersections: int = 4,
    link_lengths=None,
    lane_spec=None,
    demand_spec="medium",
    *,
    seed: int = 0,
    length_range: tuple[float, float] = (150.0, 300.0),
    boundary_length: float = 300.0,
    minor_length: float = 200.0,
    end_to_end_fraction: float = 0.6,
    major_minor_ratio: float = 5.0,
    free_flow_speed: float = FREE_FLOW_SPEED,
    jam_spacing: float = JAM_SPACING,
    critical_spacing: float = CRITICAL_SPACING,
    controller: ControllerSpec | None = None,
    run: RunSpec | None = None,
) -> ScenarioConfig:
    """Build the scenario for an east-west arterial with ``n_intersections`` 4-leg nodes."""
    n = int(n_intersections)
    if n < 2:
        raise ValueError("need at least 2 intersections")
    lanes = _check_lanes(lane_spec)
    if link_lengths is None:
        rng = np.random.default_rng(seed)
        lo, hi = length_range
        link_lengths = [round(float(x), 1) for x in rng.uniform(lo, hi, size=n - 1)]
    link_lengths = [float(x) for x in link_lengths]
    if len(link_lengths) != n - 1 or min(link_lengths) <= 0:
        raise ValueError(f"need {n - 1} positive internal link lengths")
    seg = [boundary_length, *link_lengths, boundary_length]

    node_ids = [f"I{i}" for i in range(n)]
    major_lanes = sum(lanes["major"].values())
    minor_lanes = sum(lanes["minor"].values())
    common = dict(free_flow_speed=free_flow_speed, jam_spacing=jam_spacing, critical_spacing=critical_spacing)

    links: list[Link] = []
    for k in range(n + 1):
        links.append(Link(f"E{k}", node_ids[k] if k < n else None, seg[k], major_lanes,
                          from_node=node_ids[k - 1] if k > 0 else None, direction="EB", **common))
        links.append(Link(f"W{k}", node_ids[k - 1] if k > 0 else None, seg[k], major_lanes,
                          from_node=node_ids[k] if k < n else None, direction="WB", **common))
    for i, nid in enumerate(node_ids):
        links.append(Link(f"NB{i}", nid, minor_length, minor_lanes, direction="NB", **common))
        links.append(Link(f"SB{i}", nid, minor_length, minor_lanes, direction="SB", **common))
        links.append(Link(f"NX{i}", None, minor_length, minor_lanes, from_node=nid, direction="NB", **common))
        links.append(Link(f"SX{i}", None, minor_length, minor_lanes, from_node=nid, direction="SB", **common))

    # (approach link, {turn: downstream link}) per node
    approaches = {}
    for i, nid in enumerate(node_ids):
        approaches[nid] = {
            "EB": (f"E{i}", {"left": f"NX{i}", "through": f"E{i + 1}", "right": f"SX{i}"}),
            "WB": (f"W{i + 1}", {"left": f"SX{i}", "through": f"W{i}", "right": f"NX{i}"}),
            "NB": (f"NB{i}", {"left": f"W{i}", "through": f"NX{i}", "right": f"E{i + 1}"}),
            "SB": (f"SB{i}", {"left": f"E{i + 1}", "through": f"SX{i}", "right": f"W{i}"}),
        }

    major, minor = per_entry_rates(demand_spec, n, major_minor_ratio)
    rates = {"E0": major, f"W{n}": major}
    for i in range(n):
        rates[f"NB{i}"] = minor
        rates[f"SB{i}"] = minor

    # Long-run turning ratios follow from the mix of corridor-routed and untagged flow.
    shape_major, shape_minor = (major, minor) if major + minor > 0 else (major_minor_ratio, 1.0)
    corridor_flow, untagged_flow = _class_flows(n, shape_major, shape_minor, end_to_end_fraction)

    movements: list[Movement] = []
    phases: list[Phase] = []
    nodes: list[Node] = []
    for nid in node_ids:
        mids: dict[tuple[str, str], str] = {}
        for approach, (up, turns) in approaches[nid].items():
            is_major = approach in ("EB", "WB")
            split = MAJOR_UNTAGGED_SPLIT if is_major else MINOR_UNTAGGED_SPLIT
            c_flow, u_flow = corridor_flow.get(up, 0.0), untagged_flow.get(up, 0.0)
            for turn, s in zip(("left", "through", "right"), split):
                if c_flow + u_flow > 0:
                    ratio = (u_flow * s + (c_flow if turn == "through" else 0.0)) / (c_flow + u_flow)
                else:
                    ratio = s
                if is_major:
                    mv_lanes = float(lanes["major"][turn])
                elif turn == "left":
                    mv_lanes = float(lanes["minor"]["left"])
                else:
                    # shared through+right lane, apportioned by the untagged split
                    share = s / (split[1] + split[2])
                    mv_lanes = lanes["minor"]["through_right"] * share
                mid = f"{up}>{turns[turn]}"
                mids[(approach, turn)] = mid
                movements.append(Movement(
                    mid, up, turns[turn], ratio, LANE_SAT_FLOW * mv_lanes, lanes=mv_lanes, turn=turn,
                    untagged_ratio=s,
                ))
        groups = (
            [("EB", "through"), ("EB", "right"), ("WB", "through"), ("WB", "right")],
            [("EB", "left"), ("WB", "left")],
            [("NB", "through"), ("NB", "right"), ("SB", "through"), ("SB", "right")],
            [("NB", "left"), ("SB", "left")],
        )
        for idx, group in enumerate(groups):
            phases.append(Phase(nid, idx, tuple(mids[g] for g in group), PHASE_NAMES[idx]))
        nodes.append(Node(nid, _conflicts(mids)))

    demand = DemandSpec(rates, {"EB": end_to_end_fraction, "WB": end_to_end_fraction})
    return ScenarioConfig(
        NetworkSpec(tuple(nodes), tuple(links), tuple(movements), tuple(phases)),
        demand,
        controller or ControllerSpec(),
        run or RunSpec(seed=seed),
    )


def _conflicts(mids: dict[tuple[str, str], str]) -> tuple[tuple[str, str], ...]:
    opposite = {"EB": "WB", "WB": "EB", "NB": "SB", "SB": "NB"}
    axis = {"EB": 0, "WB": 0, "NB": 1, "SB": 1}
    out = []
    keys = sorted(mids)
    for i, a in enumerate(keys):
        for b in keys[i + 1:]:
            (ap_a, t_a), (ap_b, t_b) = a, b
            crossing = axis[ap_a] != axis[ap_b]
            left_vs_opposing = opposite[ap_a] == ap_b and (t_a == "left") != (t_b == "left")
            if crossing or left_vs_opposing:
                out.append((mids[a], mids[b]))
    return tuple(out)


def _class_flows(n, major, minor, e2e):
    """Expected corridor-routed and untagged flow on each corridor link (any consistent unit)."""
    corridor = {f"{d}{k}": e2e * major for d in "EW" for k in range(n + 1)}
    left, through, right = MAJOR_UNTAGGED_SPLIT
    m_left, _, m_right = MINOR_UNTAGGED_SPLIT
    untagged = {"E0": (1 - e2e) * major, f"W{n}": (1 - e2e) * major}
    for i in range(n):
        # NB right and SB left join eastbound; NB left and SB right join westbound
        untagged[f"E{i + 1}"] = untagged[f"E{i}"] * through + minor * (m_right + m_left)
    for i in range(n - 1, -1, -1):
        untagged[f"W{i}"] = untagged[f"W{i + 1}"] * through + minor * (m_left + m_right)
    for i in range(n):
        untagged[f"NB{i}"] = untagged[f"SB{i}"] = minor
    return corridor, untagged
