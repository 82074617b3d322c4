"""Shortest paths next to the two learning strategies on one shared layout.

Trains a small Q-network for a 15x15 grid, then plays the same evaluation
episodes with RL, GAME and OPTIMAL.  Takes around ten seconds.

    python demos/02_planner_and_learners.py
"""
from sagrid import harness

cfg = harness.ExperimentConfig()
cfg.sweep.grid_sizes = [15]
cfg.sweep.radii = [3]
cfg.sweep.runs_per_cell = 30
models = harness.prepare_models(cfg)
print(f"estimator trusted for {models.horizon} steps after losing sight of x")

records = harness.run_records(cfg, models)
for c in harness.aggregate(records):
    print(f"{c.strategy:8s} mean steps {c.mean_steps:6.2f}  collisions {c.total_collisions:3d}  "
          f"failures {c.failures}")

for row in harness.compare_to_optimal(cfg, records=records):
    print(f"{row.strategy:8s} ratio to optimal {row.ratio:.3f} over {row.paired_episodes} layouts")

# the first episode in which the x-agent comes into view, step by step
for i in range(cfg.sweep.runs_per_cell):
    trace = []
    rec = harness.run_episode(15, 3, "GAME", models, cfg.sweep.seed, i, trace=trace)
    if rec.steps_learn_mode:
        break
modes = [t["mode"] for t in trace]
print(f"\nepisode {rec.episode_id}: {rec.steps} steps, modes used: "
      + ", ".join(f"{m} x{modes.count(m)}" for m in dict.fromkeys(modes)))
