"""Fit all three pressure models to the bundled benchmark and compare
them on held-out data: open-loop prediction traces, IAE per chamber,
and per-step evaluation cost.

Run:  python demos/05_model_comparison.py          (few minutes)
      python demos/05_model_comparison.py --quick  (one chamber, fewer restarts)
Writes demos/out/model_comparison.png
"""

import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from pneusim.control import gauge_kpa
from pneusim.sysid import (
    compare_models,
    load_dataset,
    predict_open_loop,
    split_dataset,
)

QUICK = "--quick" in sys.argv
RESTARTS = 4 if QUICK else 20

root = Path(__file__).parent.parent
ds = load_dataset(root / "data" / "bench_nonlinear.csv")
train, val = split_dataset(ds, 20000)
print(f"{len(train)} training and {len(val)} validation samples")

report = compare_models(train, val, n_restarts=RESTARTS, seed=0)
print(report.format_table())

fig, axes = plt.subplots(2, 2, figsize=(10, 7), sharex=True)
for chamber, ax in enumerate(axes.flat):
    ax.plot(val.t, gauge_kpa(val.p[:, chamber]), "k", lw=1.2, label="measured")
    for kind in ("linear", "nonlinear", "parametric"):
        cell = report.cell(kind, chamber)
        if cell.failed:
            continue
        predicted = predict_open_loop(cell.params, val, chamber)
        ax.plot(val.t, gauge_kpa(predicted), lw=0.9,
                label=f"{kind} (R2 {cell.r2_val_pressure:.3f})")
    ax.set_title(f"chamber {chamber}")
    ax.grid(alpha=0.3)
    ax.legend(fontsize=7)
for ax in axes[-1]:
    ax.set_xlabel("time [s]")
for ax in axes[:, 0]:
    ax.set_ylabel("pressure [kPa gauge]")
fig.suptitle("open-loop prediction on 20 s of held-out data")
fig.tight_layout()

out = Path(__file__).parent / "out"
out.mkdir(exist_ok=True)
fig.savefig(out / "model_comparison.png", dpi=120)
print(f"wrote {out / 'model_comparison.png'}")
