"""Evaluation measures: fuel, travel time, stops, accumulation stability, Pareto fronts."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .network import FREE_FLOW_SPEED
from .sim import Trip

IDLE, DECEL, ACCEL, CRUISE = "idle", "decel", "accel", "cruise"
STATES = (IDLE, DECEL, ACCEL, CRUISE)
FILTERS = ("all", "corridor_EB", "corridor_WB", "corridor_both")


@dataclass(frozen=True)
class FuelModel:
    """Four-mode fuel model. Rates in ml/s; speeds in m/s; accelerations in m/s^2.

    accel: c1 + c2 * v * a
    cruise: k1 + k2 * v^2
    idle, decel: constant idle rate
    """

    idle_rate: float = 0.333
    c1: float = 0.260
    c2: float = 0.420
    k1: float = 0.0991
    k2: float = 0.008743
    accel: float = 2.0
    decel: float = 3.0
    reference_speed: float = FREE_FLOW_SPEED  # V_m = 50 km/h

    def rate(self, state: str, v: float = 0.0, a: float = 0.0) -> float:
        return fuel_rate(state, v, a, self)

    def accel_episode(self, v_f: float) -> tuple[float, float]:
        """(duration, fuel) for one stop-to-v_f acceleration at the fixed rate."""
        dur = v_f / self.accel
        return dur, self.c1 * dur + self.c2 * v_f * v_f / 2.0

    def decel_episode(self, v_f: float) -> tuple[float, float]:
        dur = v_f / self.decel
        return dur, self.idle_rate * dur


DEFAULT_FUEL = FuelModel()


def fuel_rate(state: str, v: float = 0.0, a: float = 0.0, model: FuelModel = DEFAULT_FUEL) -> float:
    if v < 0:
        raise ValueError("speed must be >= 0")
    if state in (IDLE, DECEL):
        return model.idle_rate
    if state == ACCEL:
        return model.c1 + model.c2 * v * a
    if state == CRUISE:
        return model.k1 + model.k2 * v * v
    raise ValueError(f"unknown state {state!r}")


@dataclass(frozen=True)
class TripRecord:
    vehicle_id: int
    origin: str
    destination: str
    entry: float
    exit: float
    stops: int
    durations: dict  # state -> seconds
    corridor_through: bool = False
    direction: str = ""
    free_flow_speed: float = FREE_FLOW_SPEED
    accel_episodes: float = 0.0  # full-episode equivalents actually driven
    decel_episodes: float = 0.0

    @property
    def travel_time(self) -> float:
        return self.exit - self.entry


def trip_record(trip: Trip, model: FuelModel = DEFAULT_FUEL, include_entry_queue: bool = True) -> TripRecord:
    """Split a raw trip into idle/accel/decel/cruise time.

    Each stop adds one deceleration and one acceleration episode. Their time is
    taken from the moving time first (the vehicle was not cruising then), then
    from the idle time if the trip was too short.
    """
    v_f = trip.free_flow_speed
    start = trip.created if include_entry_queue else trip.entered
    idle = trip.stopped_time + (trip.entry_wait if include_entry_queue else 0.0)
    moving = max(trip.moving_time, 0.0)
    t_acc = v_f / model.accel
    t_dec = v_f / model.decel
    need = trip.stops * (t_acc + t_dec)
    available = moving + idle
    scale = min(1.0, available / need) if need > 0 else 0.0
    acc, dec = trip.stops * t_acc * scale, trip.stops * t_dec * scale
    from_moving = min(acc + dec, moving)
    cruise = moving - from_moving
    idle -= acc + dec - from_moving
    durations = {IDLE: max(idle, 0.0), DECEL: dec, ACCEL: acc, CRUISE: cruise}
    return TripRecord(
        trip.vehicle_id, trip.origin, trip.destination, start, trip.exited, trip.stops, durations,
        trip.corridor, trip.direction, v_f, trip.stops * scale, trip.stops * scale,
    )


def trip_fuel(trip: TripRecord, model: FuelModel = DEFAULT_FUEL) -> float:
    """Fuel in ml: idle and decel at the idle rate, cruise at v_f, accel episodes integrated."""
    v_f = trip.free_flow_speed
    d = trip.durations
    _, acc_fuel = model.accel_episode(v_f)
    return (
        model.idle_rate * (d[IDLE] + d[DECEL])
        + fuel_rate(CRUISE, v_f, 0.0, model) * d[CRUISE]
        + acc_fuel * trip.accel_episodes
    )


# -- travel time ---------------------------------------------------------------------


@dataclass(frozen=True)
class TravelTimeStats:
    filter: str
    n: int
    total_tt: float
    mean_tt: float
    total_fuel: float
    stops: int
    mean_stops: float
    empty: bool


def select_trips(trips: Iterable[TripRecord], which: str = "all") -> list[TripRecord]:
    if which == "all":
        return list(trips)
    if which == "corridor_both":
        return [t for t in trips if t.corridor_through]
    if which in ("corridor_EB", "corridor_WB"):
        d = which[-2:]
        return [t for t in trips if t.corridor_through and t.direction == d]
    raise ValueError(f"unknown filter {which!r}; expected one of {FILTERS}")


def travel_time_stats(trips: Iterable[TripRecord], which: str = "all",
                      model: FuelModel = DEFAULT_FUEL) -> TravelTimeStats:
    sel = select_trips(trips, which)
    if not sel:
        return TravelTimeStats(which, 0, 0.0, 0.0, 0.0, 0, 0.0, True)
    total = math.fsum(t.travel_time for t in sel)
    fuel = math.fsum(trip_fuel(t, model) for t in sel)
    stops = sum(t.stops for t in sel)
    n = len(sel)
    return TravelTimeStats(which, n, total, total / n, fuel, stops, stops / n, False)


# -- accumulation & stability ------------------------------------------------------------


@dataclass(frozen=True)
class AccumulationSeries:
    times: np.ndarray
    counts: np.ndarray

    def __post_init__(self):
        if len(self.times) != len(self.counts):
            raise ValueError("times and counts differ in length")
        if len(self.counts) and np.min(self.counts) < 0:
            raise ValueError("negative accumulation")

    @classmethod
    def from_pairs(cls, pairs: Sequence[tuple[float, int]]) -> "AccumulationSeries":
        arr = np.asarray(pairs, float).reshape(-1, 2)
        return cls(arr[:, 0], arr[:, 1])


@dataclass(frozen=True)
class StabilityResult:
    stable: bool
    slope: float
    threshold: float

    @property
    def label(self) -> str:
        return "stable" if self.stable else "unstable"


def tail_slope(series: AccumulationSeries, tail: float = 0.5) -> float:
    """Least-squares slope (veh/s) over the final `tail` share of the series' time span."""
    t = np.asarray(series.times, float)
    y = np.asarray(series.counts, float)
    cut = t[0] + (1.0 - tail) * (t[-1] - t[0])
    mask = t >= cut
    tt, yy = t[mask], y[mask]
    if len(tt) < 2:
        raise ValueError("series too short")
    tc = tt - tt.mean()
    return float(np.dot(tc, yy - yy.mean()) / np.dot(tc, tc))


def stability_classify(series: AccumulationSeries, threshold: float = 0.05,
                       warmup: float = 0.0) -> StabilityResult:
    if len(series.times) < 4:
        raise ValueError("series too short")
    span = series.times[-1] - series.times[0]
    if warmup > 0 and span < 2 * warmup:
        raise ValueError(f"series too short: spans {span:g} s, need >= {2 * warmup:g} s")
    slope = tail_slope(series)
    return StabilityResult(slope < threshold, slope, threshold)


# -- Pareto front ------------------------------------------------------------------------


@dataclass(frozen=True)
class ParetoPoint:
    label: str
    f1: float
    f2: float
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not (math.isfinite(self.f1) and math.isfinite(self.f2)):
            raise ValueError(f"objectives of {self.label} must be finite")


def dominates(p: ParetoPoint, q: ParetoPoint) -> bool:
    return p.f1 <= q.f1 and p.f2 <= q.f2 and (p.f1 < q.f1 or p.f2 < q.f2)


def pareto_front(points: Sequence[ParetoPoint]) -> list[ParetoPoint]:
    """Non-dominated points under minimization of both objectives (input order kept).

    Sort by (f1, f2) and sweep keeping the best f2 seen so far. Exact duplicates
    of a front point are themselves non-dominated and are kept.
    """
    if not points:
        raise ValueError("need at least one point")
    order = sorted(range(len(points)), key=lambda i: (points[i].f1, points[i].f2))
    keep = set()
    best_f2 = math.inf
    last = None
    for i in order:
        p = points[i]
        if p.f2 < best_f2:
            keep.add(i)
            best_f2 = p.f2
            last = (p.f1, p.f2)
        elif (p.f1, p.f2) == last:
            keep.add(i)
    return [points[i] for i in sorted(keep)]


# -- CSV -------------------------------------------------------------------------------------

METRICS_COLUMNS = ("filter", "n_trips", "total_tt_s", "mean_tt_s", "total_fuel_ml", "stops",
                   "mean_stops", "empty", "classification", "tail_slope")


def metrics_rows(records: Sequence[TripRecord], stability: StabilityResult,
                 model: FuelModel = DEFAULT_FUEL) -> list[dict]:
    rows = []
    for which in FILTERS:
        s = travel_time_stats(records, which, model)
        rows.append({
            "filter": which, "n_trips": s.n, "total_tt_s": s.total_tt, "mean_tt_s": s.mean_tt,
            "total_fuel_ml": s.total_fuel, "stops": s.stops, "mean_stops": s.mean_stops,
            "empty": int(s.empty), "classification": stability.label, "tail_slope": stability.slope,
        })
    return rows


def write_csv(rows: Sequence[dict], columns: Sequence[str]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow({k: _fmt(row[k]) for k in columns})
    return buf.getvalue()


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v
