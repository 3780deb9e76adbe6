"""Scenario runner, parameter sweeps and the stability ladder."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .arterial import generate_arterial
from .config import ConfigError, RunSpec, ScenarioConfig, build_network, dumps
from .controllers import FixedTimeController, make_controller
from .feasibility import check_scenario
from .metrics import (
    DEFAULT_FUEL, METRICS_COLUMNS, AccumulationSeries, FuelModel, StabilityResult, TripRecord,
    metrics_rows, stability_classify, travel_time_stats, trip_record, write_csv,
)
from .sim import SignalDecision, Simulation

DESK = dict(n_intersections=4, seeds=(0, 1, 2, 3, 4))
PAPER = dict(n_intersections=8, seeds=tuple(range(10)))


def preset(scale: str = "desk", demand="medium", *, layout_seed: int = 0, **run) -> ScenarioConfig:
    """Arterial scenario at desk scale (4 nodes) or the full 8-node layout."""
    n = {"desk": DESK, "paper": PAPER}[scale]["n_intersections"]
    return generate_arterial(n, demand_spec=demand, seed=layout_seed, run=RunSpec(**run))


def preset_seeds(scale: str = "desk") -> tuple[int, ...]:
    return {"desk": DESK, "paper": PAPER}[scale]["seeds"]


@dataclass
class RunRecord:
    scenario_hash: str
    seed: int
    decisions: list[SignalDecision]
    trips: list[TripRecord]
    accumulation: AccumulationSeries
    entered: np.ndarray  # cumulative vehicles generated at each accumulation sample
    exited: np.ndarray
    stability: StabilityResult
    metrics: list[dict]
    vehicle_seconds: float  # integral of accumulation over the horizon
    trajectories: list[tuple] | None = None

    def metric(self, which: str, key: str):
        return next(r[key] for r in self.metrics if r["filter"] == which)

    # -- CSV views ---------------------------------------------------------------

    def decisions_csv(self) -> str:
        rows = [{"time_s": d.valid_from, "node_id": d.node, "phase_index": d.phase, "pressure": d.pressure}
                for d in self.decisions]
        return write_csv(rows, ("time_s", "node_id", "phase_index", "pressure"))

    def trips_csv(self) -> str:
        cols = ("vehicle_id", "origin", "destination", "entry_s", "exit_s", "travel_time_s", "stops",
                "idle_s", "accel_s", "decel_s", "cruise_s", "corridor_through", "direction")
        rows = [{
            "vehicle_id": t.vehicle_id, "origin": t.origin, "destination": t.destination,
            "entry_s": t.entry, "exit_s": t.exit, "travel_time_s": t.travel_time, "stops": t.stops,
            "idle_s": t.durations["idle"], "accel_s": t.durations["accel"],
            "decel_s": t.durations["decel"], "cruise_s": t.durations["cruise"],
            "corridor_through": int(t.corridor_through), "direction": t.direction,
        } for t in self.trips]
        return write_csv(rows, cols)

    def accumulation_csv(self) -> str:
        rows = [{"time_s": float(t), "count": int(c)}
                for t, c in zip(self.accumulation.times, self.accumulation.counts)]
        return write_csv(rows, ("time_s", "count"))

    def metrics_csv(self) -> str:
        return write_csv(self.metrics, METRICS_COLUMNS)

    def trajectories_csv(self) -> str:
        cols = ("time_s", "vehicle_id", "link_id", "distance_to_stopline_m", "state")
        rows = [dict(zip(cols, r)) for r in self.trajectories or ()]
        return write_csv(rows, cols)

    def write(self, out_dir: str | Path) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "decisions.csv").write_text(self.decisions_csv())
        (out / "trips.csv").write_text(self.trips_csv())
        (out / "accumulation.csv").write_text(self.accumulation_csv())
        (out / "metrics.csv").write_text(self.metrics_csv())
        if self.trajectories is not None:
            (out / "trajectories.csv").write_text(self.trajectories_csv())
        return out


def run_scenario(config: ScenarioConfig, seed: int | None = None, out_dir: str | Path | None = None, *,
                 fuel: FuelModel = DEFAULT_FUEL, threshold: float = 0.05,
                 include_entry_queue: bool = True, observer=None) -> RunRecord:
    """Fixed-time warmup, then the configured controller up to the horizon.

    `observer(t, sim)` is called at each controller boundary before deciding,
    which lets callers sample observations from a live run.
    """
    network = build_network(config)
    run = config.run
    seed = run.seed if seed is None else int(seed)
    sim = Simulation(network, config.demand.rates, run, config.demand.end_to_end_fraction, seed=seed)
    ctrl = make_controller(config.controller.name, config.controller.params, network,
                           run.delta_t, run.lost_time)
    warm = FixedTimeController(network, run.warmup_plan) if run.warmup > 0 else None

    per_interval = int(round(run.delta_t / run.dt))
    n_steps = int(round(run.horizon / run.dt))
    warm_steps = int(round(run.warmup / run.dt))
    decisions: list[SignalDecision] = []
    times, counts, entered, exited = [0.0], [0], [0], [0]
    vs = 0.0

    for k in range(n_steps):
        t = sim.t
        if k < warm_steps:
            dec = warm.decide(t, sim)
        else:
            j = k - warm_steps
            if j == 0:
                ctrl.start(t, sim)
            if j % per_interval == 0:
                if observer is not None:
                    observer(t, sim)
                dec = ctrl.decide(t, sim)
                sim.reset_travel_time()
            elif ctrl.cyclic:
                dec = ctrl.decide(t, sim)
            else:
                dec = []
        if dec:
            sim.apply(dec)
            decisions.extend(dec)
        before = sim.accumulation
        sim.step()
        sim.check_conservation()
        vs += 0.5 * (before + sim.accumulation) * run.dt
        if (k + 1) % per_interval == 0:
            times.append(sim.t)
            counts.append(sim.accumulation)
            entered.append(sim.generated)
            exited.append(sim.exited)

    series = AccumulationSeries(np.array(times), np.array(counts))
    stability = stability_classify(series, threshold)
    records = [trip_record(tr, fuel, include_entry_queue) for tr in sim.trips]
    record = RunRecord(
        config.scenario_hash(), seed, decisions, records, series, np.array(entered), np.array(exited),
        stability, metrics_rows(records, stability, fuel), vs, sim.trajectory,
    )
    if out_dir is not None:
        path = record.write(out_dir)
        (path / "scenario.yaml").write_text(dumps(config.with_run(seed=seed)))
    return record


# -- sweeps ------------------------------------------------------------------------------

SWEEP_METRICS = (
    ("total_tt_s", "all", "total_tt_s"),
    ("mean_tt_s", "all", "mean_tt_s"),
    ("corridor_tt_s", "corridor_both", "mean_tt_s"),
    ("corridor_eb_tt_s", "corridor_EB", "mean_tt_s"),
    ("corridor_wb_tt_s", "corridor_WB", "mean_tt_s"),
    ("total_fuel_ml", "all", "total_fuel_ml"),
    ("corridor_fuel_ml", "corridor_both", "total_fuel_ml"),
    ("corridor_stops", "corridor_both", "mean_stops"),
    ("corridor_eb_stops", "corridor_EB", "mean_stops"),
    ("corridor_wb_stops", "corridor_WB", "mean_stops"),
)


@dataclass(frozen=True)
class SweepSpec:
    """alpha x beta grid for C-MP plus a list of benchmark controllers, each over all seeds."""

    alphas: Sequence[float] = (0.0,)
    betas: Sequence[float] = (0.0,)
    seeds: Sequence[int] = (0,)
    demand: str | float = "medium"  # named level or a multiplier on the base demand
    controllers: Sequence[str] = ()
    base: ScenarioConfig | None = None
    scale: str = "desk"

    def __post_init__(self):
        if not self.seeds:
            raise ConfigError("sweep needs at least one seed")
        for a in self.alphas:
            if not 0.0 <= a <= 1.0:
                raise ConfigError(f"alpha {a} outside [0, 1]")

    def scenario(self) -> ScenarioConfig:
        if isinstance(self.demand, str):
            if self.base is not None:
                raise ConfigError("use a numeric multiplier with a custom base scenario")
            return preset(self.scale, self.demand)
        base = self.base if self.base is not None else preset(self.scale, "medium")
        return base.with_demand_multiplier(float(self.demand))

    def cells(self) -> list[tuple[str, str, dict]]:
        scen = self.scenario()
        bound = build_network(scen).beta_bound
        out = []
        for a in self.alphas:
            for b in self.betas:
                if not 0.0 <= b <= bound + 1e-12:
                    raise ConfigError(f"beta {b} exceeds k_j/k_c - 1 = {bound:g}")
                out.append((f"cmp(a={a:g},b={b:g})", "cmp", {"alpha": float(a), "beta": float(b)}))
        for name in self.controllers:
            out.append((name, name, {}))
        return out


def _run_cell(args):
    config, seed = args
    try:
        rec = run_scenario(config, seed)
    except Exception as exc:  # reported per cell, sweep continues
        return seed, None, f"{type(exc).__name__}: {exc}"
    values = {key: rec.metric(which, col) for key, which, col in SWEEP_METRICS}
    values["vehicle_hours"] = rec.vehicle_seconds / 3600.0
    values["tail_slope"] = rec.stability.slope
    values["stable"] = float(rec.stability.stable)
    return seed, values, None


def mean_se(values: Sequence[float]) -> tuple[float, float]:
    """Sample mean and standard error s / sqrt(n) (0 for a single sample)."""
    x = np.asarray(values, float)
    if len(x) == 0:
        return math.nan, math.nan
    if len(x) == 1:
        return float(x[0]), 0.0
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(len(x)))


SWEEP_KEYS = tuple(k for k, _, _ in SWEEP_METRICS) + ("vehicle_hours", "tail_slope", "stable")


@dataclass
class SweepTable:
    rows: list[dict]
    per_seed: dict = field(default_factory=dict)  # label -> {seed: values}

    def row(self, label: str) -> dict:
        return next(r for r in self.rows if r["label"] == label)

    def to_csv(self) -> str:
        cols = ["label", "controller", "alpha", "beta", "n_ok", "failures"]
        for k in SWEEP_KEYS:
            cols += [f"{k}_mean", f"{k}_se"]
        return write_csv(self.rows, cols)


def run_sweep(spec: SweepSpec, workers: int = 1) -> SweepTable:
    scen = spec.scenario()
    jobs, keys = [], []
    for label, name, params in spec.cells():
        cfg = scen.with_controller(name, **params)
        for seed in spec.seeds:
            jobs.append((cfg, int(seed)))
            keys.append((label, name, params))
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_run_cell, jobs))
    else:
        results = [_run_cell(j) for j in jobs]

    grouped: dict[str, dict] = {}
    for (label, name, params), (seed, values, err) in zip(keys, results):
        g = grouped.setdefault(label, {"name": name, "params": params, "ok": {}, "fail": []})
        if err is None:
            g["ok"][seed] = values
        else:
            g["fail"].append(f"seed {seed}: {err}")
    rows = []
    for label, g in grouped.items():
        row = {"label": label, "controller": g["name"], "alpha": g["params"].get("alpha", ""),
               "beta": g["params"].get("beta", ""), "n_ok": len(g["ok"]), "failures": "; ".join(g["fail"])}
        for k in SWEEP_KEYS:
            row[f"{k}_mean"], row[f"{k}_se"] = mean_se([v[k] for v in g["ok"].values()])
        rows.append(row)
    return SweepTable(rows, {label: g["ok"] for label, g in grouped.items()})


def sweep_pareto(table: SweepTable, x: str = "vehicle_hours_mean", y: str = "corridor_tt_s_mean"):
    from .metrics import ParetoPoint, pareto_front

    pts = [ParetoPoint(r["label"], r[x], r[y], {"controller": r["controller"]})
           for r in table.rows if r["n_ok"] > 0]
    return pts, pareto_front(pts)


# -- stability ladder -----------------------------------------------------------------------


@dataclass
class LadderRow:
    controller: str
    multiplier: float
    slopes: tuple[float, ...]
    n_stable: int
    n_seeds: int
    lp_epsilon: float

    @property
    def all_stable(self) -> bool:
        return self.n_stable == self.n_seeds

    @property
    def majority_stable(self) -> bool:
        return 2 * self.n_stable > self.n_seeds


@dataclass
class LadderResult:
    rows: list[LadderRow]
    boundary: dict  # controller label -> largest multiplier with every seed stable (None if none)
    lp_violations: list[str]  # stable at an LP-infeasible demand
    monotonicity_notes: list[str]

    def get(self, controller: str, multiplier: float) -> LadderRow:
        return next(r for r in self.rows if r.controller == controller and r.multiplier == multiplier)

    def to_csv(self) -> str:
        rows = [{"controller": r.controller, "multiplier": r.multiplier, "n_stable": r.n_stable,
                 "n_seeds": r.n_seeds, "lp_epsilon": r.lp_epsilon,
                 "slopes": " ".join(repr(s) for s in r.slopes)} for r in self.rows]
        return write_csv(rows, ("controller", "multiplier", "n_stable", "n_seeds", "lp_epsilon", "slopes"))


def controller_label(name: str, params: dict) -> str:
    if not params:
        return name
    return name + "(" + ",".join(f"{k}={v:g}" for k, v in sorted(params.items())) + ")"


def stability_ladder(base: ScenarioConfig, multipliers: Sequence[float],
                     controllers: Sequence[tuple[str, dict]], seeds: Sequence[int],
                     threshold: float = 0.05) -> LadderResult:
    mults = [float(m) for m in multipliers]
    if mults != sorted(mults):
        raise ValueError("multipliers must be sorted ascending")
    eps = {}
    for m in mults:
        eps[m] = check_scenario(base.with_demand_multiplier(m)).epsilon if m > 0 else math.inf
    rows, boundary, violations, notes = [], {}, [], []
    for name, params in controllers:
        label = controller_label(name, params)
        boundary[label] = None
        unstable_seen = None
        for m in mults:
            cfg = base.with_demand_multiplier(m).with_controller(name, **params)
            slopes = tuple(run_scenario(cfg, s, threshold=threshold).stability.slope for s in seeds)
            n_stable = sum(s < threshold for s in slopes)
            row = LadderRow(label, m, slopes, n_stable, len(seeds), eps[m])
            rows.append(row)
            if row.all_stable and eps[m] <= 0:
                violations.append(f"{label} stable at x{m:g} although LP eps = {eps[m]:.4g}")
            if row.all_stable and (boundary[label] is None or m > boundary[label]):
                boundary[label] = m
            if not row.majority_stable:
                unstable_seen = m if unstable_seen is None else unstable_seen
            elif unstable_seen is not None:
                notes.append(f"{label}: majority stable at x{m:g} after unstable at x{unstable_seen:g}")
    return LadderResult(rows, boundary, violations, notes)
