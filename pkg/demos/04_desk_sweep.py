"""Desk-scale sweep over grid size, written to CSV.

Equivalent to ``sagrid sweep configs/desk.yaml --out-dir runs/desk``; prints
the sweep table and the collision totals per grid size.  Takes about half a minute.

    python demos/04_desk_sweep.py
"""
from pathlib import Path

from sagrid import harness

root = Path(__file__).resolve().parent.parent
cfg = harness.load_config(root / "configs" / "desk.yaml")
result = harness.run_sweep(cfg, out_dir=root / "runs" / "desk")

print(",".join(harness.SWEEP_HEADER))
for c in result.cells:
    print(",".join(c.row()))

print()
for s in cfg.sweep.strategies:
    totals = [result.cell(L, cfg.sweep.radii[0], s).total_collisions for L in cfg.sweep.grid_sizes]
    print(f"{s:8s} collisions by L {dict(zip(cfg.sweep.grid_sizes, totals))}")
