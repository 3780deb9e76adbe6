"""Two-state mesoscopic simulator.

Every vehicle either moves at its link's free-flow speed or is stopped in the
FIFO queue of the movement it intends to take. Queues discharge at saturation
flow during green as long as the receiving link has storage. Positions are
kept so that position-weighted controllers and time-space diagrams work, but
queue joining is instantaneous so the moving/stopped split is exact.
"""

from __future__ import annotations

import bisect
import zlib
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from .config import RunSpec
from .network import Link, Movement, Network

MOVING = "Moving"
STOPPED = "Stopped"


@dataclass(frozen=True)
class MovementObservation:
    """Detector snapshot of one movement at a control boundary."""

    movement: str
    x: int
    x_s: int
    x_m: int
    free_flow_speed: float
    positions: tuple[float, ...] = ()
    accumulated_travel_time: float = 0.0
    departures: int = 0

    @property
    def sms(self) -> float:
        """Space-mean speed; 0 on an empty movement."""
        if self.x == 0:
            return 0.0
        return self.x_m * self.free_flow_speed / self.x

    @property
    def speed_ratio(self) -> float:
        """Moving share x_m / x, which equals sms / v_f under the two-state model."""
        return self.x_m / self.x if self.x else 0.0


@dataclass(frozen=True)
class SignalDecision:
    node: str
    phase: int
    valid_from: float
    duration: float
    pressure: float = float("nan")


class Vehicle:
    __slots__ = (
        "id", "origin", "link", "movement", "d", "moving", "created", "entered", "link_entry",
        "stops", "stopped_time", "stop_since", "corridor", "direction", "step",
    )

    def __init__(self, vid: int, origin: str, created: float, corridor: bool, direction: str):
        self.id = vid
        self.origin = origin
        self.link: str | None = None
        self.movement: str | None = None
        self.d = 0.0
        self.moving = True
        self.created = created
        self.entered: float | None = None
        self.link_entry: dict[str, float] = {}
        self.stops = 0
        self.stopped_time = 0.0
        self.stop_since = 0.0
        self.corridor = corridor
        self.direction = direction
        self.step = -1

    @property
    def state(self) -> str:
        return MOVING if self.moving else STOPPED


@dataclass
class Trip:
    """Raw trip log entry written when a vehicle leaves the network."""

    vehicle_id: int
    origin: str
    destination: str
    created: float
    entered: float
    exited: float
    stops: int
    stopped_time: float
    free_flow_speed: float
    corridor: bool
    direction: str

    @property
    def entry_wait(self) -> float:
        return self.entered - self.created

    @property
    def moving_time(self) -> float:
        return self.exited - self.entered - self.stopped_time


class _MovState:
    __slots__ = ("mv", "link", "down", "spacing", "sat", "moving", "queue", "credit", "green",
                 "tt", "departures", "v", "length")

    def __init__(self, mv: Movement, link: "_LinkState", down: "_LinkState"):
        self.mv = mv
        self.link = link
        self.down = down
        self.spacing = link.link.jam_spacing / mv.lanes
        self.sat = mv.saturation_flow
        self.moving: deque[Vehicle] = deque()
        self.queue: deque[Vehicle] = deque()
        self.credit = 0.0
        self.green = False
        self.tt = 0.0
        self.departures = 0
        self.v = link.link.free_flow_speed
        self.length = link.link.length


class _LinkState:
    __slots__ = ("link", "count", "storage", "movs", "exit_moving", "rng", "turn_ids", "turn_p",
                 "through")

    def __init__(self, link: Link, rng: np.random.Generator):
        self.link = link
        self.count = 0
        self.storage = link.storage
        self.movs: list[_MovState] = []
        self.exit_moving: deque[Vehicle] = deque()
        self.rng = rng
        self.turn_ids: list[str] = []
        self.turn_p: list[float] | None = None  # cumulative
        self.through: str | None = None


class _NodeSignal:
    __slots__ = ("phase", "green_from", "movements")

    def __init__(self):
        self.phase = -1
        self.green_from = 0.0
        self.movements: list[list[_MovState]] = []


def stream(seed: int, *key: int) -> np.random.Generator:
    """Independent RNG stream for (seed, key...)."""
    return np.random.default_rng(np.random.SeedSequence([seed, *key]))


class Simulation:
    """Single-owner simulation state. Advance it with `step`; read it with `observe`."""

    def __init__(self, network: Network, rates: Mapping[str, float], run: RunSpec,
                 end_to_end: Mapping[str, float] | None = None, seed: int | None = None):
        self.network = network
        self.run = run
        self.dt = run.dt
        self.seed = run.seed if seed is None else seed
        self.t = 0.0
        self.k = 0
        self.detection = run.detection_length
        end_to_end = end_to_end or {}

        link_index = {lid: zlib.crc32(lid.encode()) for lid in network.links}
        self.links: dict[str, _LinkState] = {
            lid: _LinkState(l, stream(self.seed, 1, link_index[lid])) for lid, l in network.links.items()
        }
        self.movs: dict[str, _MovState] = {}
        for lid, ls in self.links.items():
            mvs = network.movements_from(lid)
            for mv in mvs:
                ms = _MovState(mv, ls, self.links[mv.downstream])
                ls.movs.append(ms)
                self.movs[mv.id] = ms
            if mvs:
                ls.turn_ids = [m.id for m in mvs]
                p = np.cumsum([m.sampling_ratio for m in mvs])
                ls.turn_p = list(p / p[-1])
                thr = network.through_movement(lid)
                ls.through = thr.id if thr is not None else None
        self._mov_order = [self.movs[m] for m in sorted(self.movs)]
        self._exit_links = [self.links[l] for l in sorted(self.links) if self.links[l].link.is_exit]

        self.entries: list[tuple[_LinkState, float, float, np.random.Generator, deque]] = []
        for lid in sorted(rates):
            ls = self.links[lid]
            frac = float(end_to_end.get(ls.link.direction, 0.0))
            self.entries.append((ls, float(rates[lid]), frac, stream(self.seed, 2, link_index[lid]), deque()))

        self.signals: dict[str, _NodeSignal] = {}
        for nid, phases in network.phases.items():
            sig = _NodeSignal()
            sig.movements = [[self.movs[m] for m in ph.movements] for ph in phases]
            self.signals[nid] = sig

        self.next_id = 0
        self.generated = 0
        self.exited = 0
        self.trips: list[Trip] = []
        self.trajectory: list[tuple] | None = [] if run.record_trajectories else None
        self.discharge_log: list[tuple[float, str, int]] | None = None  # (t, movement, vehicle)

    # -- signals ------------------------------------------------------------

    def apply(self, decisions: Iterable[SignalDecision]) -> None:
        """Activate phases. A change of phase costs `lost_time` of all-red."""
        for dec in decisions:
            sig = self.signals[dec.node]
            if dec.phase != sig.phase:
                if sig.phase >= 0:
                    sig.green_from = self.t + self.run.lost_time
                else:
                    sig.green_from = self.t
                sig.phase = dec.phase

    def active_phase(self, node: str) -> int:
        return self.signals[node].phase

    def _update_greens(self) -> None:
        t = self.t + 1e-9
        for sig in self.signals.values():
            on = sig.phase >= 0 and t >= sig.green_from
            for idx, group in enumerate(sig.movements):
                g = on and idx == sig.phase
                for ms in group:
                    if g and not ms.green:
                        ms.credit = 0.0
                    ms.green = g

    # -- dynamics -----------------------------------------------------------

    def _enter(self, veh: Vehicle, ls: _LinkState, d: float) -> None:
        veh.link = ls.link.id
        veh.d = d
        veh.moving = True
        veh.step = self.k
        veh.link_entry[ls.link.id] = self.t + self.dt
        ls.count += 1
        if ls.turn_p is None:
            veh.movement = None
            ls.exit_moving.append(veh)
            return
        if veh.corridor and ls.through is not None:
            mid = ls.through
        else:
            idx = bisect.bisect_right(ls.turn_p, ls.rng.random())
            mid = ls.turn_ids[min(idx, len(ls.turn_ids) - 1)]
        veh.movement = mid
        self.movs[mid].moving.append(veh)

    def _transfer(self, veh: Vehicle, ms: _MovState, overshoot: float) -> None:
        ms.link.count -= 1
        ms.departures += 1
        if self.discharge_log is not None:
            self.discharge_log.append((self.t + self.dt, ms.mv.id, veh.id))
        down = ms.down
        self._enter(veh, down, max(down.link.length - overshoot, 0.0))

    def step(self) -> None:
        """Advance the state by one sub-step `dt`."""
        dt = self.dt
        k = self.k
        t_end = self.t + dt
        self._update_greens()

        for ms in self._mov_order:
            if ms.green:
                cap = ms.sat * dt
                ms.credit = min(ms.credit + cap, cap if cap > 1.0 else 1.0)
            queue = ms.queue
            down = ms.down
            while queue and ms.credit >= 1.0 and down.count < down.storage:
                veh = queue.popleft()
                ms.credit -= 1.0
                veh.stopped_time += t_end - veh.stop_since
                self._transfer(veh, ms, 0.0)

        for ms in self._mov_order:
            moving = ms.moving
            if not moving:
                continue
            adv = ms.v * dt
            queue = ms.queue
            down = ms.down
            keep: deque[Vehicle] = deque()
            while moving:
                veh = moving.popleft()
                if veh.step == k:
                    keep.append(veh)
                    continue
                d_new = veh.d - adv
                back = len(queue) * ms.spacing
                if d_new > back:
                    veh.d = d_new
                    keep.append(veh)
                elif not queue and d_new <= 0.0 and ms.green and ms.credit >= 1.0 \
                        and down.count < down.storage:
                    ms.credit -= 1.0
                    self._transfer(veh, ms, -d_new)
                else:
                    target = back if back < ms.length else ms.length
                    # stop instant interpolated inside the sub-step
                    frac = (veh.d - target) / adv if adv > 0 else 0.0
                    veh.stop_since = self.t + dt * min(max(frac, 0.0), 1.0)
                    veh.d = target
                    veh.moving = False
                    veh.stops += 1
                    queue.append(veh)
            ms.moving = keep

        for ls in self._exit_links:
            moving = ls.exit_moving
            adv = ls.link.free_flow_speed * dt
            if not moving:
                continue
            keep = deque()
            for veh in moving:
                if veh.step == k:
                    keep.append(veh)
                elif veh.d - adv <= 0.0:
                    ls.count -= 1
                    self._finish(veh, ls.link, t_end)
                else:
                    veh.d -= adv
                    keep.append(veh)
            ls.exit_moving = keep

        for ms in self._mov_order:
            ms.tt += (len(ms.moving) + len(ms.queue)) * dt

        self.t = t_end
        self.k += 1
        self._arrivals()
        if self.trajectory is not None:
            self._log_positions()

    def _arrivals(self) -> None:
        dt = self.dt
        for ls, rate, frac, rng, vq in self.entries:
            if rate > 0:
                n = inject_arrivals(rng, rate, dt)
                for _ in range(n):
                    corridor = frac > 0 and rng.random() < frac
                    vq.append(Vehicle(self.next_id, ls.link.id, self.t, corridor, ls.link.direction))
                    self.next_id += 1
                self.generated += n
            while vq and ls.count < ls.storage:
                veh = vq.popleft()
                veh.entered = self.t
                self._enter(veh, ls, ls.link.length)
                veh.link_entry[ls.link.id] = self.t
                veh.step = self.k - 1  # may move from the next sub-step on

    def place_vehicle(self, link_id: str, d: float, moving: bool = True, movement: str | None = None,
                      corridor: bool = False) -> Vehicle:
        """Put a vehicle on a link directly (scenario set-up and tests).

        Stopped vehicles join the back of their movement's queue regardless of `d`.
        """
        ls = self.links[link_id]
        veh = Vehicle(self.next_id, link_id, self.t, corridor, ls.link.direction)
        self.next_id += 1
        self.generated += 1
        veh.entered = self.t
        if not 0.0 <= d <= ls.link.length:
            raise ValueError("distance outside the link")
        self._enter(veh, ls, d)
        veh.link_entry[link_id] = self.t
        veh.step = self.k - 1
        if movement is not None and veh.movement != movement:
            if self.movs[movement].link is not ls:
                raise ValueError(f"movement {movement} does not leave {link_id}")
            self.movs[veh.movement].moving.remove(veh)
            veh.movement = movement
            self.movs[movement].moving.append(veh)
        if not moving:
            if veh.movement is None:
                raise ValueError("exit links hold no queues")
            ms = self.movs[veh.movement]
            ms.moving.remove(veh)
            veh.moving = False
            veh.stop_since = self.t
            veh.stops += 1
            veh.d = min(len(ms.queue) * ms.spacing, ms.length)
            ms.queue.append(veh)
        return veh

    def _finish(self, veh: Vehicle, link: Link, t: float) -> None:
        self.exited += 1
        self.trips.append(Trip(
            veh.id, veh.origin, link.id, veh.created, veh.entered, t, veh.stops, veh.stopped_time,
            link.free_flow_speed, veh.corridor, veh.direction,
        ))

    # -- bookkeeping ---------------------------------------------------------

    @property
    def virtual_queue(self) -> int:
        return sum(len(e[4]) for e in self.entries)

    @property
    def on_links(self) -> int:
        return sum(ls.count for ls in self.links.values())

    @property
    def accumulation(self) -> int:
        return self.on_links + self.virtual_queue

    def check_conservation(self) -> None:
        if self.generated != self.exited + self.accumulation:
            raise RuntimeError(
                f"conservation violated at t={self.t}: generated {self.generated}, "
                f"exited {self.exited}, in network {self.accumulation}"
            )

    def stopped_positions(self, ms: _MovState) -> Iterable[tuple[Vehicle, float]]:
        for i, veh in enumerate(ms.queue):
            d = i * ms.spacing
            yield veh, d if d < ms.length else ms.length

    def _log_positions(self) -> None:
        t = self.t
        rows = self.trajectory
        for ms in self._mov_order:
            lid = ms.link.link.id
            for veh, d in self.stopped_positions(ms):
                rows.append((t, veh.id, lid, d, STOPPED))
            for veh in ms.moving:
                rows.append((t, veh.id, lid, veh.d, MOVING))
        for ls in self._exit_links:
            for veh in ls.exit_moving:
                rows.append((t, veh.id, ls.link.id, veh.d, MOVING))

    # -- observation --------------------------------------------------------

    def observe(self, movement_id: str) -> MovementObservation:
        """Snapshot of one movement (restricted to the detection window when set)."""
        ms = self.movs[movement_id]
        L = ms.length
        window = self.detection
        positions: list[float] = []
        x_s = 0
        for _, d in self.stopped_positions(ms):
            if window is not None and d > window:
                break
            x_s += 1
            positions.append(1.0 - d / L)
        x_m = 0
        for veh in ms.moving:
            if window is not None and veh.d > window:
                continue
            x_m += 1
            positions.append(1.0 - veh.d / L)
        return MovementObservation(
            movement_id, x_s + x_m, x_s, x_m, ms.v, tuple(positions), ms.tt, ms.departures,
        )

    def observe_all(self) -> dict[str, MovementObservation]:
        return {mid: self.observe(mid) for mid in sorted(self.movs)}

    def reset_travel_time(self) -> None:
        """Start a new accumulation window for per-movement vehicle-seconds."""
        for ms in self._mov_order:
            ms.tt = 0.0


def inject_arrivals(rng: np.random.Generator, rate: float, dt: float) -> int:
    """Number of arrivals in `dt` seconds for a Poisson stream of `rate` veh/hr."""
    if rate < 0:
        raise ValueError("rate must be >= 0")
    if rate == 0:
        return 0
    return int(rng.poisson(rate * dt / 3600.0))
