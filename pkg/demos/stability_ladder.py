"""Walk demand upward and see where each controller stops clearing its queues."""

from cmplab.experiments import preset, stability_ladder

res = stability_ladder(preset("desk", "medium"), [0.6, 0.7, 0.8, 0.9, 1.0],
                       [("qmp", {}), ("cmp", {"alpha": 0.6, "beta": 1.0})], seeds=(0, 1, 2))
for row in res.rows:
    slopes = " ".join(f"{s:+.3f}" for s in row.slopes)
    print(f"{row.controller:<24} x{row.multiplier:<4g} eps={row.lp_epsilon:+.4f} "
          f"stable {row.n_stable}/{row.n_seeds}  slopes {slopes}")
print("highest all-stable multiplier:", res.boundary)
