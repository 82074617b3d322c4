"""How far ahead the x-agent's moves can be trusted.

Trains the next-action estimator on recorded x-agent runs, measures iterated
prediction accuracy for 1..10 steps and turns it into a risk-limited horizon.

    python demos/03_estimator_risk.py
"""
import numpy as np

from sagrid import harness
from sagrid.risk import horizon_risk, reliable_horizon

cfg = harness.ExperimentConfig()
study = harness.estimation_study(cfg)

for name in ("heldout", "deterministic"):
    acc = study.accuracy[name]
    print(f"{name:13s} accuracy " + " ".join(f"{a:.2f}" for a in acc))
    print(f"{'':13s} risk     " + " ".join(f"{r:.2f}" for r in study.risk[name]))

held = horizon_risk(np.nan_to_num(study.accuracy["heldout"]))
for thr in (0.3, 0.4, 0.5, 0.6):
    print(f"threshold {thr:.1f}: rely on the estimator for {reliable_horizon(held, thr)} steps")
