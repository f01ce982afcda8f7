"""Closed-loop step response of a four-chamber device: mean of ten noisy
trials with a 95% confidence band, per chamber.

Run:  python demos/03_step_response.py
Writes demos/out/step_response.png
"""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from pneusim.control import absolute_pa, gauge_kpa, make_bench_device, step_response

TRIALS = 10
NOISE_KPA = 0.5
P0, P_CMD = absolute_pa(50.0), absolute_pa(300.0)

runs = []
for trial in range(TRIALS):
    device = make_bench_device(sensor_noise_kpa=NOISE_KPA, seed=trial)
    log, metrics = step_response(device, float(P0), float(P_CMD), 2.0)
    runs.append(log.p)
stack = np.stack(runs)
mean = stack.mean(axis=0)
sem = stack.std(axis=0) / np.sqrt(TRIALS)
t = log.t

fig, axes = plt.subplots(2, 2, figsize=(9, 6), sharex=True, sharey=True)
for i, ax in enumerate(axes.flat):
    m = gauge_kpa(mean[:, i])
    ax.fill_between(t, m - 1.96 * gauge_kpa(sem[:, i] + 101325.0),
                    m + 1.96 * gauge_kpa(sem[:, i] + 101325.0),
                    alpha=0.3, label="95% CI")
    ax.plot(t, m, label=f"chamber {i}")
    ax.axhline(300.0, ls="--", c="k", lw=0.8, label="command")
    ax.set_title(f"chamber {i}")
    ax.grid(alpha=0.3)
axes[0, 0].legend()
for ax in axes[-1]:
    ax.set_xlabel("time [s]")
for ax in axes[:, 0]:
    ax.set_ylabel("pressure [kPa gauge]")
fig.suptitle(f"50 -> 300 kPa step, mean of {TRIALS} trials")
fig.tight_layout()

out = Path(__file__).parent / "out"
out.mkdir(exist_ok=True)
fig.savefig(out / "step_response.png", dpi=120)
print(f"rise time (chamber 0): {metrics[0].rise_time:.3f} s")
print(f"settling (+-5% band):  {metrics[0].settling_time:.3f} s")
print(f"wrote {out / 'step_response.png'}")
