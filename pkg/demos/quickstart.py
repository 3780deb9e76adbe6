"""Run one desk-scale scenario under Q-MP and C-MP and compare headline metrics."""

from cmplab.experiments import preset, run_scenario

cfg = preset("desk", "medium")
print(f"{'controller':<22}{'veh-h':>8}{'EB stops':>10}{'WB stops':>10}{'EB TT':>8}{'WB TT':>8}")
for name, params in [("qmp", {}), ("cmp", {"alpha": 0.6, "beta": 1.0}), ("smoothing", {}), ("fixed", {})]:
    rec = run_scenario(cfg.with_controller(name, **params), seed=0)
    label = name + (f"({params['alpha']},{params['beta']})" if params else "")
    print(f"{label:<22}{rec.vehicle_seconds / 3600:8.1f}"
          f"{rec.metric('corridor_EB', 'mean_stops'):10.2f}{rec.metric('corridor_WB', 'mean_stops'):10.2f}"
          f"{rec.metric('corridor_EB', 'mean_tt_s'):8.1f}{rec.metric('corridor_WB', 'mean_tt_s'):8.1f}"
          f"   {rec.stability.label}")
