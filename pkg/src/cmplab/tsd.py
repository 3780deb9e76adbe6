"""Time-space diagram export along a chain of links."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from .metrics import write_csv
from .network import Network
from .sim import SignalDecision

SIGNAL_GREEN, SIGNAL_RED = "green", "red"


class ChainError(ValueError):
    pass


@dataclass(frozen=True)
class TsdExport:
    points: list[dict]  # vehicle_id, time_s, distance_m, link_id, state
    bands: list[dict]  # node_id, position_m, t_start, t_end, state
    length: float
    horizon: float

    def points_csv(self) -> str:
        return write_csv(self.points, ("vehicle_id", "time_s", "distance_m", "link_id", "state"))

    def bands_csv(self) -> str:
        return write_csv(self.bands, ("node_id", "position_m", "t_start", "t_end", "state"))

    def svg(self, width: int = 900, height: int = 500) -> str:
        sx = width / self.horizon if self.horizon > 0 else 1.0
        sy = height / self.length if self.length > 0 else 1.0
        out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
               f'<rect width="{width}" height="{height}" fill="white"/>']
        for b in self.bands:
            color = "#2a2" if b["state"] == SIGNAL_GREEN else "#d22"
            y = height - b["position_m"] * sy
            out.append(f'<line x1="{b["t_start"] * sx:.2f}" y1="{y:.2f}" x2="{b["t_end"] * sx:.2f}" '
                       f'y2="{y:.2f}" stroke="{color}" stroke-width="3"/>')
        tracks: dict[int, list[str]] = {}
        for p in self.points:
            tracks.setdefault(p["vehicle_id"], []).append(
                f'{p["time_s"] * sx:.2f},{height - p["distance_m"] * sy:.2f}')
        for vid in sorted(tracks):
            out.append(f'<polyline points="{" ".join(tracks[vid])}" fill="none" stroke="#246" '
                       'stroke-width="0.6"/>')
        out.append("</svg>")
        return "\n".join(out) + "\n"


def chain_offsets(network: Network, chain: Sequence[str]) -> dict[str, float]:
    """Distance from the chain start to each link's upstream end. Raises on a gap."""
    if not chain:
        raise ChainError("empty link chain")
    offsets = {}
    pos = 0.0
    for i, lid in enumerate(chain):
        if lid not in network.links:
            raise ChainError(f"unknown link {lid!r}")
        if i > 0:
            prev = network.links[chain[i - 1]]
            if not any(m.downstream == lid for m in network.movements_from(prev.id)):
                raise ChainError(f"link chain not contiguous: {prev.id} -> {lid}")
        offsets[lid] = pos
        pos += network.links[lid].length
    return offsets


def signal_bands(network: Network, chain: Sequence[str], decisions: Iterable[SignalDecision],
                 horizon: float, lost_time: float = 0.0) -> list[dict]:
    """Green/red intervals of the chain's through movement at each stopline."""
    offsets = chain_offsets(network, chain)
    by_node: dict[str, list[SignalDecision]] = {}
    for d in decisions:
        by_node.setdefault(d.node, []).append(d)
    bands = []
    for i, lid in enumerate(chain[:-1]):
        link = network.links[lid]
        node = link.to_node
        mv = next(m for m in network.movements_from(lid) if m.downstream == chain[i + 1])
        serving = {p.index for p in network.phases[node] if mv.id in p.movements}
        pos = offsets[lid] + link.length
        phase, t_prev = None, 0.0
        segments = []
        for d in sorted(by_node.get(node, []), key=lambda d: d.valid_from):
            if d.phase == phase:
                continue
            if phase is not None:
                segments.append((t_prev, d.valid_from, phase))
                t_prev = d.valid_from + lost_time
                segments.append((d.valid_from, t_prev, None))
            else:
                t_prev = d.valid_from
            phase = d.phase
        if phase is not None:
            segments.append((t_prev, horizon, phase))
        for a, b, ph in segments:
            if b > a:
                state = SIGNAL_GREEN if ph in serving else SIGNAL_RED
                bands.append({"node_id": node, "position_m": pos, "t_start": a, "t_end": b, "state": state})
    return bands


def export_tsd(trajectory: Iterable[tuple], network: Network, chain: Sequence[str] | None = None,
               decisions: Iterable[SignalDecision] = (), horizon: float | None = None,
               lost_time: float = 0.0, direction: str = "EB") -> TsdExport:
    """Trajectory rows (time, vehicle, link, distance_to_stopline, state) mapped onto the chain.

    Without an explicit chain the through corridor heading `direction` is used.
    """
    if chain is None:
        chain = [l.id for l in network.corridor(direction)]
    offsets = chain_offsets(network, chain)
    points = []
    t_max = 0.0
    for t, vid, lid, d, state in trajectory:
        if lid not in offsets:
            continue
        L = network.links[lid].length
        points.append({"vehicle_id": vid, "time_s": t, "distance_m": offsets[lid] + (L - d),
                       "link_id": lid, "state": state})
        t_max = max(t_max, t)
    horizon = t_max if horizon is None else horizon
    length = offsets[chain[-1]] + network.links[chain[-1]].length
    bands = signal_bands(network, chain, decisions, horizon, lost_time)
    return TsdExport(points, bands, length, horizon)
