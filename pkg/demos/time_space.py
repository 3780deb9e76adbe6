"""Record trajectories for one run and write an eastbound time-space diagram."""

import sys
from pathlib import Path

from cmplab.config import build_network
from cmplab.experiments import preset, run_scenario
from cmplab.tsd import export_tsd

out = Path(sys.argv[1] if len(sys.argv) > 1 else "tsd_demo")
cfg = preset("desk", "medium", horizon=900.0, record_trajectories=True).with_controller("cmp", alpha=0.6, beta=1.0)
rec = run_scenario(cfg, seed=0)
tsd = export_tsd(rec.trajectories, build_network(cfg), decisions=rec.decisions, horizon=900.0,
                 lost_time=cfg.run.lost_time)
out.mkdir(parents=True, exist_ok=True)
(out / "tsd_EB.svg").write_text(tsd.svg())
print(f"{len(tsd.points)} points over {tsd.length:.0f} m -> {out / 'tsd_EB.svg'}")
