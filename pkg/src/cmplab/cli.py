"""Command-line entry point: `cmplab <subcommand> ...`."""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

from . import config as cfgmod
from .arterial import generate_arterial
from .experiments import (
    SweepSpec, controller_label, preset, preset_seeds, run_scenario, run_sweep, stability_ladder,
)
from .feasibility import check_scenario
from .metrics import ParetoPoint, pareto_front, write_csv
from .sim import SignalDecision
from .tsd import export_tsd


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _ints(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def _controller(text: str) -> tuple[str, dict]:
    """`cmp:alpha=0.6:beta=1` -> ("cmp", {"alpha": 0.6, "beta": 1.0})."""
    name, *rest = text.split(":")
    params = {}
    for item in rest:
        key, _, value = item.partition("=")
        try:
            params[key] = float(value)
        except ValueError:
            params[key] = value
    return name, params


def _base(args) -> cfgmod.ScenarioConfig:
    if getattr(args, "config", None):
        return cfgmod.load(args.config)
    return preset(args.scale, getattr(args, "demand", "medium"))


def _seeds(args) -> list[int]:
    return _ints(args.seeds) if args.seeds else list(preset_seeds(args.scale))


def _add_scale(p):
    g = p.add_mutually_exclusive_group()
    g.add_argument("--desk-scale", dest="scale", action="store_const", const="desk")
    g.add_argument("--paper-scale", dest="scale", action="store_const", const="paper")
    p.set_defaults(scale="desk")
    p.add_argument("--config", help="scenario file (overrides the preset)")


def cmd_run(args) -> int:
    config = _base(args)
    if args.controller:
        name, params = _controller(args.controller)
        config = config.with_controller(name, **params)
    if args.trajectories:
        config = config.with_run(record_trajectories=True)
    seed = args.seed if args.seed is not None else config.run.seed
    rec = run_scenario(config, seed, args.out_dir)
    sys.stdout.write(rec.metrics_csv())
    return 0


def cmd_sweep(args) -> int:
    base = cfgmod.load(args.config) if args.config else None
    demand = args.demand
    if base is not None or args.multiplier is not None:
        demand = args.multiplier if args.multiplier is not None else 1.0
    spec = SweepSpec(_floats(args.alphas), _floats(args.betas), _seeds(args), demand,
                     [c for c in args.controllers.split(",") if c], base, args.scale)
    table = run_sweep(spec, args.workers)
    text = table.to_csv()
    if args.out_dir:
        Path(args.out_dir).mkdir(parents=True, exist_ok=True)
        (Path(args.out_dir) / "sweep.csv").write_text(text)
    sys.stdout.write(text)
    return 0


def _read_decisions(path: Path) -> list[SignalDecision]:
    with path.open() as fh:
        return [SignalDecision(r["node_id"], int(r["phase_index"]), float(r["time_s"]), 0.0,
                               float(r["pressure"])) for r in csv.DictReader(fh)]


def cmd_tsd(args) -> int:
    run_dir = Path(args.run_dir)
    config = cfgmod.load(run_dir / "scenario.yaml")
    network = cfgmod.build_network(config)
    traj_path = run_dir / "trajectories.csv"
    if not traj_path.exists():
        print(f"error: {traj_path} missing; rerun with --trajectories", file=sys.stderr)
        return 2
    with traj_path.open() as fh:
        rows = [(float(r["time_s"]), int(r["vehicle_id"]), r["link_id"], float(r["distance_to_stopline_m"]),
                 r["state"]) for r in csv.DictReader(fh)]
    chain = args.chain.split(",") if args.chain else None
    export = export_tsd(rows, network, chain, _read_decisions(run_dir / "decisions.csv"),
                        config.run.horizon, config.run.lost_time, args.direction)
    out = Path(args.out_dir or run_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / f"tsd_{args.direction}.csv").write_text(export.points_csv())
    (out / f"tsd_{args.direction}_signals.csv").write_text(export.bands_csv())
    (out / f"tsd_{args.direction}.svg").write_text(export.svg())
    print(f"{len(export.points)} points, {len(export.bands)} signal bands -> {out}")
    return 0


def cmd_ladder(args) -> int:
    base = _base(args)
    controllers = [_controller(c) for c in args.controllers.split(",") if c]
    result = stability_ladder(base, _floats(args.multipliers), controllers, _seeds(args), args.threshold)
    text = result.to_csv()
    if args.out_dir:
        Path(args.out_dir).mkdir(parents=True, exist_ok=True)
        (Path(args.out_dir) / "ladder.csv").write_text(text)
    sys.stdout.write(text)
    for label, m in result.boundary.items():
        print(f"# {label}: largest all-seed-stable multiplier = {m}")
    for line in result.lp_violations + result.monotonicity_notes:
        print(f"# {line}")
    return 0


def cmd_pareto(args) -> int:
    with open(args.sweep_csv) as fh:
        rows = list(csv.DictReader(fh))
    points = [ParetoPoint(r["label"], float(r[args.x]), float(r[args.y])) for r in rows
              if r[args.x] not in ("", "nan") and r[args.y] not in ("", "nan")]
    front = pareto_front(points)
    text = write_csv([{"label": p.label, args.x: p.f1, args.y: p.f2} for p in front], ("label", args.x, args.y))
    if args.out_dir:
        Path(args.out_dir).mkdir(parents=True, exist_ok=True)
        (Path(args.out_dir) / "pareto.csv").write_text(text)
    sys.stdout.write(text)
    return 0


def cmd_feas(args) -> int:
    config = cfgmod.load(args.scenario) if args.scenario else preset(args.scale, args.demand)
    if args.multiplier != 1.0:
        config = config.with_demand_multiplier(args.multiplier)
    res = check_scenario(config, args.capacity_factor)
    print(f"feasible: {res.feasible}")
    print(f"epsilon_veh_per_s: {res.epsilon!r}")
    for node, splits in sorted(res.splits.items()):
        print(f"splits {node}: " + " ".join(f"{s:.4f}" for s in splits))
    print("binding: " + " ".join(res.binding))
    return 0


def cmd_net(args) -> int:
    if args.net_cmd == "validate":
        try:
            cfgmod.build_network(cfgmod.load(args.file))
        except (cfgmod.ConfigError, ValueError) as exc:
            print(f"invalid: {exc}", file=sys.stderr)
            return 1
        print("ok")
        return 0
    lengths = _floats(args.lengths) if args.lengths else None
    demand = args.demand
    try:
        demand = float(demand)
    except ValueError:
        pass
    config = generate_arterial(args.n, lengths, None, demand, seed=args.seed)
    text = cfgmod.dumps(config)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cmplab", description="Max-pressure signal control laboratory")
    sub = p.add_subparsers(dest="cmd", required=True)

    r = sub.add_parser("run", help="run one seeded scenario")
    _add_scale(r)
    r.add_argument("--demand", default="medium")
    r.add_argument("--controller", help="e.g. qmp or cmp:alpha=0.6:beta=1")
    r.add_argument("--seed", type=int)
    r.add_argument("--out-dir")
    r.add_argument("--trajectories", action="store_true")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="alpha x beta sweep plus benchmarks")
    _add_scale(s)
    s.add_argument("--alphas", default="0")
    s.add_argument("--betas", default="0")
    s.add_argument("--seeds")
    s.add_argument("--demand", default="medium")
    s.add_argument("--multiplier", type=float)
    s.add_argument("--controllers", default="")
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--out-dir")
    s.set_defaults(func=cmd_sweep)

    t = sub.add_parser("tsd", help="time-space diagram from a run directory")
    t.add_argument("run_dir")
    t.add_argument("--direction", default="EB")
    t.add_argument("--chain", help="comma-separated link ids")
    t.add_argument("--out-dir")
    t.set_defaults(func=cmd_tsd)

    lad = sub.add_parser("ladder", help="stability ladder over demand multipliers")
    _add_scale(lad)
    lad.add_argument("--demand", default="medium")
    lad.add_argument("--multipliers", required=True)
    lad.add_argument("--controllers", default="qmp,cmp:alpha=0.6:beta=1")
    lad.add_argument("--seeds")
    lad.add_argument("--threshold", type=float, default=0.05)
    lad.add_argument("--out-dir")
    lad.set_defaults(func=cmd_ladder)

    pa = sub.add_parser("pareto", help="non-dominated rows of a sweep table")
    pa.add_argument("sweep_csv")
    pa.add_argument("--x", default="vehicle_hours_mean")
    pa.add_argument("--y", default="corridor_tt_s_mean")
    pa.add_argument("--out-dir")
    pa.set_defaults(func=cmd_pareto)

    f = sub.add_parser("feas", help="demand feasibility LP")
    fsub = f.add_subparsers(dest="feas_cmd", required=True)
    fc = fsub.add_parser("check")
    fc.add_argument("scenario", nargs="?")
    _add_scale(fc)
    fc.add_argument("--demand", default="medium")
    fc.add_argument("--multiplier", type=float, default=1.0)
    fc.add_argument("--capacity-factor", type=float, default=1.0)
    fc.set_defaults(func=cmd_feas)

    n = sub.add_parser("net", help="network tools")
    nsub = n.add_subparsers(dest="net_cmd", required=True)
    nv = nsub.add_parser("validate")
    nv.add_argument("file")
    nv.set_defaults(func=cmd_net)
    ng = nsub.add_parser("generate-arterial")
    ng.add_argument("--n", type=int, default=4)
    ng.add_argument("--lengths")
    ng.add_argument("--demand", default="medium")
    ng.add_argument("--seed", type=int, default=0)
    ng.add_argument("--out")
    ng.set_defaults(func=cmd_net)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except cfgmod.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
