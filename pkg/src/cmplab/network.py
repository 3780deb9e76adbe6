"""Network topology: links, movements, phases and the validated `Network`."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Iterable, Mapping

FREE_FLOW_SPEED = 50 / 3.6  # 50 km/h in m/s
JAM_SPACING = 7.5
CRITICAL_SPACING = 37.5
RATIO_TOL = 1e-9


class NetworkError(ValueError):
    """Raised when a network description is inconsistent."""


@dataclass(frozen=True)
class Link:
    """A unidirectional road stretch. Entry links have no `from_node`, exit links no `to_node`."""

    id: str
    to_node: str | None
    length: float
    lanes: int
    from_node: str | None = None
    free_flow_speed: float = FREE_FLOW_SPEED
    jam_spacing: float = JAM_SPACING
    critical_spacing: float = CRITICAL_SPACING
    direction: str = ""

    def __post_init__(self):
        if not self.length > 0:
            raise NetworkError(f"link {self.id}: length must be > 0, got {self.length}")
        if self.lanes < 1:
            raise NetworkError(f"link {self.id}: lanes must be >= 1, got {self.lanes}")
        if not self.free_flow_speed > 0:
            raise NetworkError(f"link {self.id}: free_flow_speed must be > 0")
        if not self.jam_spacing > 0:
            raise NetworkError(f"link {self.id}: jam_spacing must be > 0")
        if self.critical_spacing < self.jam_spacing:
            raise NetworkError(f"link {self.id}: critical_spacing must be >= jam_spacing")
        if self.storage < 1:
            raise NetworkError(f"link {self.id}: storage capacity below one vehicle")

    @property
    def storage(self) -> int:
        return math.floor(self.length * self.lanes / self.jam_spacing)

    @property
    def free_flow_time(self) -> float:
        return self.length / self.free_flow_speed

    @property
    def density_ratio(self) -> float:
        """k_j / k_c, equal to critical_spacing / jam_spacing."""
        return self.critical_spacing / self.jam_spacing

    @property
    def is_entry(self) -> bool:
        return self.from_node is None

    @property
    def is_exit(self) -> bool:
        return self.to_node is None


@dataclass(frozen=True)
class Movement:
    """Permitted transition from `upstream` to `downstream` at the upstream link's node.

    `turning_ratio` is the long-run share of the upstream link's traffic taking this
    movement (what controllers and the LP see). `untagged_ratio`, when set, is the
    share used to sample turns for vehicles without a fixed route; it defaults to
    `turning_ratio`. `saturation_flow` is in veh/s.
    """

    id: str
    upstream: str
    downstream: str
    turning_ratio: float
    saturation_flow: float
    lanes: float = 1.0
    turn: str = ""
    untagged_ratio: float | None = None

    def __post_init__(self):
        if not 0.0 <= self.turning_ratio <= 1.0:
            raise NetworkError(f"movement {self.id}: turning ratio {self.turning_ratio} outside [0, 1]")
        if not self.saturation_flow > 0:
            raise NetworkError(f"movement {self.id}: saturation flow must be > 0")
        if not self.lanes > 0:
            raise NetworkError(f"movement {self.id}: lanes must be > 0")
        if self.untagged_ratio is not None and not 0.0 <= self.untagged_ratio <= 1.0:
            raise NetworkError(f"movement {self.id}: untagged ratio outside [0, 1]")

    @property
    def sampling_ratio(self) -> float:
        return self.turning_ratio if self.untagged_ratio is None else self.untagged_ratio


@dataclass(frozen=True)
class Phase:
    node: str
    index: int
    movements: tuple[str, ...]
    name: str = ""


@dataclass(frozen=True)
class Node:
    id: str
    conflicts: tuple[tuple[str, str], ...] = ()


@dataclass(frozen=True)
class Network:
    """Validated, immutable network. Build through `Network.from_parts`."""

    nodes: Mapping[str, Node]
    links: Mapping[str, Link]
    movements: Mapping[str, Movement]
    phases: Mapping[str, tuple[Phase, ...]]
    _out: Mapping[str, tuple[str, ...]] = field(repr=False)
    _node_movements: Mapping[str, tuple[str, ...]] = field(repr=False)

    @classmethod
    def from_parts(
        cls,
        nodes: Iterable[Node],
        links: Iterable[Link],
        movements: Iterable[Movement],
        phases: Iterable[Phase],
    ) -> "Network":
        nodes, links, movements, phases = list(nodes), list(links), list(movements), list(phases)
        node_map = _unique({n.id: n for n in nodes}, nodes, "node")
        link_map = _unique({l.id: l for l in links}, links, "link")
        mov_map = _unique({m.id: m for m in movements}, movements, "movement")

        for link in link_map.values():
            for end in (link.from_node, link.to_node):
                if end is not None and end not in node_map:
                    raise NetworkError(f"link {link.id}: unknown node {end!r}")

        out: dict[str, list[str]] = {lid: [] for lid in link_map}
        node_movs: dict[str, list[str]] = {nid: [] for nid in node_map}
        for mv in mov_map.values():
            for lid in (mv.upstream, mv.downstream):
                if lid not in link_map:
                    raise NetworkError(f"movement {mv.id}: unknown link {lid!r}")
            up, down = link_map[mv.upstream], link_map[mv.downstream]
            if up.to_node is None:
                raise NetworkError(f"movement {mv.id}: upstream link {up.id} is an exit link")
            if down.from_node != up.to_node:
                raise NetworkError(
                    f"movement {mv.id}: {down.id} does not leave node {up.to_node}"
                )
            out[up.id].append(mv.id)
            node_movs[up.to_node].append(mv.id)

        for lid, mids in out.items():
            link = link_map[lid]
            if link.to_node is None:
                continue
            if not mids:
                raise NetworkError(f"link {lid}: ends at node {link.to_node} but has no movements")
            for attr in ("turning_ratio", "sampling_ratio"):
                total = math.fsum(getattr(mov_map[m], attr) for m in mids)
                if abs(total - 1.0) > RATIO_TOL:
                    raise NetworkError(f"link {lid}: ratios sum {total:.6g} != 1")

        phase_map: dict[str, list[Phase]] = {nid: [] for nid in node_map}
        for ph in phases:
            if ph.node not in node_map:
                raise NetworkError(f"phase {ph.index}: unknown node {ph.node!r}")
            for mid in ph.movements:
                if mid not in mov_map:
                    raise NetworkError(f"phase {ph.node}/{ph.index}: unknown movement {mid!r}")
                if link_map[mov_map[mid].upstream].to_node != ph.node:
                    raise NetworkError(f"phase {ph.node}/{ph.index}: movement {mid} is not at this node")
            phase_map[ph.node].append(ph)

        for nid, plist in phase_map.items():
            plist.sort(key=lambda p: p.index)
            if [p.index for p in plist] != list(range(len(plist))):
                raise NetworkError(f"node {nid}: phase indices must be 0..{len(plist) - 1}")
            conflicts = {frozenset(pair) for pair in node_map[nid].conflicts}
            for ph in plist:
                for i, a in enumerate(ph.movements):
                    for b in ph.movements[i + 1:]:
                        if frozenset((a, b)) in conflicts:
                            raise NetworkError(f"node {nid} phase {ph.index}: {a} conflicts with {b}")
            served = {m for p in plist for m in p.movements}
            for mid in node_movs[nid]:
                if mid not in served:
                    raise NetworkError(f"movement {mid} is unserved by any phase of node {nid}")

        return cls(
            nodes=MappingProxyType(node_map),
            links=MappingProxyType(link_map),
            movements=MappingProxyType(mov_map),
            phases=MappingProxyType({k: tuple(v) for k, v in phase_map.items()}),
            _out=MappingProxyType({k: tuple(v) for k, v in out.items()}),
            _node_movements=MappingProxyType({k: tuple(v) for k, v in node_movs.items()}),
        )

    # -- topology queries -------------------------------------------------

    def movements_from(self, link_id: str) -> tuple[Movement, ...]:
        return tuple(self.movements[m] for m in self._out[link_id])

    def node_movements(self, node_id: str) -> tuple[Movement, ...]:
        return tuple(self.movements[m] for m in self._node_movements[node_id])

    def node_of(self, movement: Movement) -> str:
        return self.links[movement.upstream].to_node  # type: ignore[return-value]

    def downstream_movements(self, movement: Movement) -> tuple[Movement, ...]:
        """Movements (m, n) for n in D(m); empty when m is an exit link."""
        return self.movements_from(movement.downstream)

    def free_flow_speed(self, movement: Movement) -> float:
        return self.links[movement.upstream].free_flow_speed

    @property
    def entry_links(self) -> tuple[Link, ...]:
        return tuple(l for l in self.links.values() if l.is_entry)

    @property
    def exit_links(self) -> tuple[Link, ...]:
        return tuple(l for l in self.links.values() if l.is_exit)

    @property
    def beta_bound(self) -> float:
        """Tightest k_j/k_c - 1 over all links."""
        return min(l.density_ratio for l in self.links.values()) - 1.0

    def through_movement(self, link_id: str) -> Movement | None:
        for mv in self.movements_from(link_id):
            if mv.turn == "through":
                return mv
        return None

    def corridor(self, direction: str) -> list[Link]:
        """Links followed by through movements from the entry link heading `direction`."""
        starts = [l for l in self.entry_links if l.direction == direction]
        if not starts:
            raise NetworkError(f"no entry link with direction {direction!r}")
        chain = [starts[0]]
        seen = {starts[0].id}
        while True:
            mv = self.through_movement(chain[-1].id)
            if mv is None:
                return chain
            nxt = self.links[mv.downstream]
            if nxt.id in seen:
                raise NetworkError(f"corridor {direction} loops at {nxt.id}")
            seen.add(nxt.id)
            chain.append(nxt)

    def corridor_nodes(self, direction: str = "EB") -> list[str]:
        return [l.to_node for l in self.corridor(direction) if l.to_node is not None]


def _unique(mapping: dict, items: list, kind: str) -> dict:
    if len(mapping) != len(items):
        seen: set[str] = set()
        for it in items:
            if it.id in seen:
                raise NetworkError(f"duplicate {kind} id {it.id!r}")
            seen.add(it.id)
    return mapping
