"""Small alpha/beta sweep at high demand, then the network-vs-corridor trade-off front."""

from cmplab.experiments import SweepSpec, run_sweep, sweep_pareto

spec = SweepSpec(alphas=(0.0, 0.6, 1.0), betas=(0.0, 1.0, 4.0), seeds=(0, 1), demand="high",
                 controllers=("qmp", "smoothing", "fixed"))
table = run_sweep(spec)
points, front = sweep_pareto(table, "vehicle_hours_mean", "corridor_tt_s_mean")
on_front = {p.label for p in front}
for p in sorted(points, key=lambda p: p.f1):
    print(f"{p.label:<18}{p.f1:9.1f} veh-h {p.f2:8.1f} s {'*' if p.label in on_front else ''}")
