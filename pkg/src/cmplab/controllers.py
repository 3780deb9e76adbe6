"""Signal-control policies.

The weight functions are pure and operate on `MovementObservation` values.
Controller classes bind them to a network and keep the small amount of
per-node state each policy needs. Pressures use saturation flow in veh/s.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

from .network import Network
from .sim import MovementObservation, Simulation, SignalDecision

Downstream = Sequence[tuple[MovementObservation, float]]


@dataclass(frozen=True)
class CmpParams:
    alpha: float = 0.0
    beta: float = 0.0
    beta_bound: float = 4.0

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha {self.alpha} outside [0, 1]")
        if not 0.0 <= self.beta <= self.beta_bound + 1e-12:
            raise ValueError(f"beta {self.beta} outside [0, {self.beta_bound:g}]")


@dataclass(frozen=True)
class WeightBreakdown:
    movement: str
    w_up: float
    w_down: float

    @property
    def w(self) -> float:
        return self.w_up - self.w_down


@dataclass(frozen=True)
class PhasePressure:
    node: str
    phase: int
    pressure: float
    terms: tuple[tuple[str, float, float], ...] = ()


# -- movement weights ----------------------------------------------------------


def qmp_weight(obs_up: MovementObservation, obs_down: Downstream) -> WeightBreakdown:
    """Queue-based weight: x(l,m) - sum_n x(m,n) r(m,n)."""
    w_down = 0.0
    for obs, r in obs_down:
        w_down += obs.x * r
    return WeightBreakdown(obs_up.movement, float(obs_up.x), w_down)


def cmp_weight(obs_up: MovementObservation, obs_down: Downstream, params: CmpParams,
               v_f: float | None = None) -> WeightBreakdown:
    """Speed-aware weight: moving vehicles count more upstream and less downstream.

    With alpha = beta = 0 this performs the same floating-point operations as
    `qmp_weight` apart from multiplications by exactly 1.0, so the two agree bit for bit.
    """
    alpha, beta = params.alpha, params.beta
    vf = obs_up.free_flow_speed if v_f is None else v_f
    w_up = obs_up.x * (1.0 + beta * obs_up.sms / vf)
    w_down = 0.0
    for obs, r in obs_down:
        vf_n = obs.free_flow_speed if v_f is None else v_f
        w_down += obs.x * r * (1.0 - alpha * obs.sms / vf_n)
    return WeightBreakdown(obs_up.movement, w_up, w_down)


def cmp_weight_decomposed(obs_up: MovementObservation, obs_down: Downstream,
                          params: CmpParams) -> WeightBreakdown:
    """Same weight written as the queue weight plus moving-vehicle bonuses.

    Kept as an independent check on `cmp_weight`; uses counts only, no speeds.
    """
    q = qmp_weight(obs_up, obs_down)
    bonus_down = sum(obs.x_m * r for obs, r in obs_down)
    return WeightBreakdown(
        obs_up.movement,
        q.w_up + params.beta * obs_up.x_m,
        q.w_down - params.alpha * bonus_down,
    )


def ttmp_weight(obs_up: MovementObservation, obs_down: Downstream) -> WeightBreakdown:
    """Travel-time weight from vehicle-seconds accumulated over the last interval."""
    w_down = 0.0
    for obs, r in obs_down:
        w_down += obs.accumulated_travel_time * r
    return WeightBreakdown(obs_up.movement, obs_up.accumulated_travel_time, w_down)


def pwbp_weight(obs_up: MovementObservation, obs_down: Downstream) -> WeightBreakdown:
    """Position-weighted weight: each vehicle counts 1 - d/L (1 at the stop line)."""
    w_down = 0.0
    for obs, r in obs_down:
        w_down += r * math.fsum(obs.positions)
    return WeightBreakdown(obs_up.movement, math.fsum(obs_up.positions), w_down)


# -- phase selection --------------------------------------------------------------


def phase_pressure(phase, weights: Mapping[str, float], saturations: Mapping[str, float]) -> PhasePressure:
    """Sum of weight x saturation flow over the phase's movements."""
    terms = []
    total = 0.0
    for mid in phase.movements:
        if mid not in weights:
            raise KeyError(f"no weight for movement {mid!r}")
        w = weights[mid]
        if isinstance(w, WeightBreakdown):
            w = w.w
        c = saturations[mid]
        terms.append((mid, w, c))
        total += w * c
    return PhasePressure(phase.node, phase.index, total, tuple(terms))


def select_phase(pressures: Sequence[PhasePressure], current: int | None = None,
                 t: float = 0.0, duration: float = 0.0) -> SignalDecision:
    """Argmax pressure; ties keep `current` if it is a maximizer, else the lowest index."""
    if not pressures:
        raise ValueError("no phases to select from")
    best = max(p.pressure for p in pressures)
    winners = [p for p in pressures if p.pressure == best]
    chosen = next((p for p in winners if p.phase == current), None)
    if chosen is None:
        chosen = min(winners, key=lambda p: p.phase)
    return SignalDecision(chosen.node, chosen.phase, t, duration, chosen.pressure)


def smoothing_mp_decide(pressures: Sequence[PhasePressure], upstream_served: bool,
                        coordinated_phase: int | None, smoothing_weight: float = 20000.0,
                        current: int | None = None, t: float = 0.0,
                        duration: float = 0.0) -> SignalDecision:
    """Q-MP selection with a constant bonus on the coordinated phase after an upstream green."""
    if upstream_served and coordinated_phase is not None:
        pressures = [
            PhasePressure(p.node, p.phase, p.pressure + smoothing_weight, p.terms)
            if p.phase == coordinated_phase else p
            for p in pressures
        ]
    return select_phase(pressures, current, t, duration)


def fixed_time_decide(plan: Sequence[float], t: float, node: str = "", t0: float = 0.0) -> SignalDecision:
    """Cyclic rotation through phases with the given durations."""
    if not plan or min(plan) <= 0:
        raise ValueError("plan needs positive phase durations")
    cycle = math.fsum(plan)
    tau = (t - t0) % cycle
    acc = 0.0
    for idx, dur in enumerate(plan):
        acc += dur
        if tau < acc - 1e-9:
            return SignalDecision(node, idx, t, dur)
    return SignalDecision(node, 0, t, plan[0])


# -- SCATS-L plan update -------------------------------------------------------------


@dataclass(frozen=True)
class ScatsPlan:
    cycle: float
    splits: tuple[float, ...]
    offsets: tuple[float, ...] = ()
    dos: tuple[float, ...] = ()


def scats_l_update(per_phase_flows: Sequence[float], green_times: Sequence[float],
                   saturations: Sequence[float], current_cycle: float,
                   link_fftt: Sequence[float] = (), *, target_dos: float = 0.9,
                   c_min: float = 40.0, c_max: float = 150.0, lost_time: float = 0.0,
                   min_green: float = 0.0) -> ScatsPlan:
    """Next cyclic plan from the master node's last-cycle counts.

    DoS per phase is flow / (green x saturation). The cycle scales by max DoS /
    target and is clamped; green is shared in proportion to DoS after the lost
    time and minimum greens are set aside. Offsets accumulate free-flow travel
    times along the coordinated direction, starting at 0 for the master.
    """
    dos = []
    for flow, green, sat in zip(per_phase_flows, green_times, saturations):
        dos.append(flow / (green * sat) if green > 0 and sat > 0 else 0.0)
    n = len(dos)
    if n == 0:
        raise ValueError("need at least one phase")
    peak = max(dos) if dos else 0.0
    cycle = min(max(current_cycle * peak / target_dos, c_min), c_max)
    spare = max(cycle - n * (lost_time + min_green), 0.0)
    total = math.fsum(dos)
    shares = [d / total for d in dos] if total > 0 else [1.0 / n] * n
    splits = tuple(lost_time + min_green + spare * s for s in shares)
    return ScatsPlan(cycle, splits, cumulative_offsets(link_fftt), tuple(dos))


def cumulative_offsets(link_fftt: Sequence[float]) -> tuple[float, ...]:
    """Offsets along the coordinated chain: 0 at the master, then running free-flow times."""
    offsets = [0.0]
    for tt in link_fftt:
        offsets.append(offsets[-1] + tt)
    return tuple(offsets)


# -- controllers ----------------------------------------------------------------------

WeightFn = Callable[[MovementObservation, Downstream], WeightBreakdown]


class Controller:
    """Common interface: `decide(t, sim)` returns decisions for the nodes it changes."""

    name = "base"
    cyclic = False  # cyclic controllers are queried every sub-step

    def __init__(self, network: Network, delta_t: float = 6.0):
        self.network = network
        self.delta_t = delta_t
        self.current: dict[str, int] = {}

    def start(self, t: float, sim: Simulation) -> None:
        self.current = {nid: sim.active_phase(nid) for nid in self.network.phases}

    def decide(self, t: float, sim: Simulation) -> list[SignalDecision]:
        raise NotImplementedError


class MaxPressureController(Controller):
    name = "qmp"

    def __init__(self, network: Network, delta_t: float = 6.0, weight: WeightFn = qmp_weight):
        super().__init__(network, delta_t)
        self.weight = weight
        self._sat = {mid: mv.saturation_flow for mid, mv in network.movements.items()}
        self._down = {
            mid: tuple((d.id, d.turning_ratio) for d in network.downstream_movements(mv))
            for mid, mv in network.movements.items()
        }
        self._node_movs = {nid: [m.id for m in network.node_movements(nid)] for nid in network.phases}

    def node_pressures(self, node: str, sim: Simulation) -> list[PhasePressure]:
        """Pressures at one node from its own approaches and their receiving links."""
        cache: dict[str, MovementObservation] = {}

        def obs(mid: str) -> MovementObservation:
            if mid not in cache:
                cache[mid] = sim.observe(mid)
            return cache[mid]

        weights = {}
        for mid in self._node_movs[node]:
            down = [(obs(d), r) for d, r in self._down[mid]]
            weights[mid] = self.weight(obs(mid), down).w
        return [phase_pressure(ph, weights, self._sat) for ph in self.network.phases[node]]

    def decide(self, t: float, sim: Simulation) -> list[SignalDecision]:
        out = []
        for node in sorted(self.network.phases):
            dec = select_phase(self.node_pressures(node, sim), self.current.get(node), t, self.delta_t)
            self.current[node] = dec.phase
            out.append(dec)
        return out


class CmpController(MaxPressureController):
    name = "cmp"

    def __init__(self, network: Network, delta_t: float = 6.0, alpha: float = 0.0, beta: float = 0.0):
        self.params = CmpParams(alpha, beta, network.beta_bound)
        super().__init__(network, delta_t, lambda up, down: cmp_weight(up, down, self.params))


class SmoothingController(MaxPressureController):
    """Q-MP plus a fixed bonus for the coordinated through phase after the upstream node served it."""

    name = "smoothing"

    def __init__(self, network: Network, delta_t: float = 6.0, direction: str = "EB",
                 smoothing_weight: float = 20000.0):
        if not direction:
            raise ValueError("smoothing needs a coordinated direction")
        super().__init__(network, delta_t)
        self.smoothing_weight = smoothing_weight
        self.coordinated: dict[str, int] = {}
        self.upstream: dict[str, str | None] = {}
        for link in network.corridor(direction):
            if link.to_node is None:
                continue
            mv = network.through_movement(link.id)
            phase = next(p.index for p in network.phases[link.to_node] if mv.id in p.movements)
            self.coordinated[link.to_node] = phase
            self.upstream[link.to_node] = link.from_node
        self.last: dict[str, int] = {}

    def decide(self, t: float, sim: Simulation) -> list[SignalDecision]:
        out = []
        for node in sorted(self.network.phases):
            up = self.upstream.get(node)
            coord = self.coordinated.get(node)
            served = up is not None and coord is not None and self.last.get(up) == self.coordinated.get(up)
            dec = smoothing_mp_decide(self.node_pressures(node, sim), served, coord,
                                      self.smoothing_weight, self.current.get(node), t, self.delta_t)
            self.current[node] = dec.phase
            out.append(dec)
        self.last = {d.node: d.phase for d in out}
        return out


class FixedTimeController(Controller):
    name = "fixed"
    cyclic = True

    def __init__(self, network: Network, plan: Sequence[float] = (42.0, 6.0, 12.0, 6.0), t0: float = 0.0):
        super().__init__(network)
        self.plan = tuple(float(x) for x in plan)
        self.t0 = t0
        for node, phases in network.phases.items():
            if len(phases) != len(self.plan):
                raise ValueError(f"plan has {len(self.plan)} phases, node {node} has {len(phases)}")

    def decide(self, t: float, sim: Simulation) -> list[SignalDecision]:
        out = []
        for node in sorted(self.network.phases):
            dec = fixed_time_decide(self.plan, t, node, self.t0)
            if dec.phase != self.current.get(node):
                self.current[node] = dec.phase
                out.append(dec)
        return out


@dataclass
class _Cycle:
    start: float
    plan: ScatsPlan
    counts: dict[str, int] = field(default_factory=dict)


class ScatsController(Controller):
    """Cyclic DoS-driven plan at the master node, shared by all nodes with free-flow offsets."""

    name = "scats_l"
    cyclic = True

    def __init__(self, network: Network, delta_t: float = 6.0, direction: str = "EB",
                 initial_plan: Sequence[float] = (42.0, 6.0, 12.0, 6.0), lost_time: float = 2.0,
                 target_dos: float = 0.9, c_min: float = 40.0, c_max: float = 150.0,
                 min_green: float = 5.0):
        super().__init__(network, delta_t)
        chain = [l for l in network.corridor(direction) if l.to_node is not None]
        self.order = [l.to_node for l in chain]
        self.master = self.order[0]
        fftt = [l.free_flow_time for l in chain[1:]]
        self.offsets = dict(zip(self.order, cumulative_offsets(fftt)))
        self.kw = dict(target_dos=target_dos, c_min=c_min, c_max=c_max, lost_time=lost_time,
                       min_green=min_green)
        self.lost_time = lost_time
        self.initial = ScatsPlan(math.fsum(initial_plan), tuple(float(x) for x in initial_plan))
        self.cycles: list[_Cycle] = []
        self._phases = network.phases[self.master]

    def start(self, t: float, sim: Simulation) -> None:
        super().start(t, sim)
        self.cycles = [_Cycle(t, self.initial, self._counts(sim))]

    def _counts(self, sim: Simulation) -> dict[str, int]:
        return {m: sim.movs[m].departures for ph in self._phases for m in ph.movements}

    def _close_cycle(self, sim: Simulation) -> None:
        cyc = self.cycles[-1]
        now = self._counts(sim)
        flows, greens, sats = [], [], []
        for ph, split in zip(self._phases, cyc.plan.splits):
            green = max(split - self.lost_time, 0.0)
            best = (0.0, 0.0, 1.0)
            for mid in ph.movements:
                c = self.network.movements[mid].saturation_flow
                f = now[mid] - cyc.counts[mid]
                if green > 0 and f / (green * c) >= best[0]:
                    best = (f / (green * c), f, c)
            flows.append(best[1])
            greens.append(green)
            sats.append(best[2])
        plan = scats_l_update(flows, greens, sats, cyc.plan.cycle, **self.kw)
        self.cycles.append(_Cycle(cyc.start + cyc.plan.cycle, plan, now))

    def phase_at(self, node: str, t: float) -> int | None:
        local = t - self.offsets[node]
        for cyc in reversed(self.cycles):
            if cyc.start <= local + 1e-9:
                tau = local - cyc.start
                acc = 0.0
                for idx, split in enumerate(cyc.plan.splits):
                    acc += split
                    if tau < acc - 1e-9:
                        return idx
                return len(cyc.plan.splits) - 1
        return None

    def decide(self, t: float, sim: Simulation) -> list[SignalDecision]:
        while t + 1e-9 >= self.cycles[-1].start + self.cycles[-1].plan.cycle:
            self._close_cycle(sim)
        out = []
        for node in sorted(self.network.phases):
            idx = self.phase_at(node, t)
            if idx is not None and idx != self.current.get(node):
                self.current[node] = idx
                out.append(SignalDecision(node, idx, t, 0.0))
        return out


def make_controller(name: str, params: Mapping, network: Network, delta_t: float = 6.0,
                    lost_time: float = 2.0) -> Controller:
    params = dict(params)
    if name == "qmp":
        return MaxPressureController(network, delta_t)
    if name == "cmp":
        return CmpController(network, delta_t, float(params.get("alpha", 0.0)), float(params.get("beta", 0.0)))
    if name == "ttmp":
        ctrl = MaxPressureController(network, delta_t, ttmp_weight)
        ctrl.name = "ttmp"
        return ctrl
    if name == "pwbp":
        ctrl = MaxPressureController(network, delta_t, pwbp_weight)
        ctrl.name = "pwbp"
        return ctrl
    if name == "smoothing":
        return SmoothingController(network, delta_t, params.get("direction", "EB"),
                                   float(params.get("smoothing_weight", 20000.0)))
    if name == "scats_l":
        params.setdefault("lost_time", lost_time)
        return ScatsController(network, delta_t, **params)
    if name == "fixed":
        return FixedTimeController(network, params.get("plan", (42.0, 6.0, 12.0, 6.0)))
    raise ValueError(f"unknown controller {name!r}")
