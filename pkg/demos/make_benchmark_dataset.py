"""Regenerate the bundled benchmark dataset (data/bench_nonlinear.csv).

220 s of closed-loop operation of the stock four-chamber device: random
step references between 60 and 280 kPa held for 2 s each, a gentle
prescribed joint wobble so the volume-coupling terms are exercised, and
0.5 kPa of sensor noise.  Seeded, so repeated runs are byte-identical.

Run:  python demos/make_benchmark_dataset.py
"""

from pathlib import Path

from pneusim.cli import main

root = Path(__file__).parent.parent
out = root / "data"
code = main(["make-dataset", "--seed", "42", "--noise", "0.5",
             "--out", str(out)])
assert code == 0
(out / "dataset.csv").replace(out / "bench_nonlinear.csv")
(out / "config_echo.json").unlink()
print(f"regenerated {out / 'bench_nonlinear.csv'}")
