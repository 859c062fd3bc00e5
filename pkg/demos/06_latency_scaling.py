"""Is the per-step check fast enough for a real sampling period?

Times `check_safety` on the 50-state surrogate with early exit disabled
(worst case: every offset of the horizon is tested every step), sweeping
the prediction horizon at fixed constraint count and vice versa.  Both
sweeps should fit a line — the check is one matrix stack plus a
clearance evaluation per offset — and the worst point should sit far
below a one-second sampling period.

Reduced to 100 timed checks per point; takes ~10 s.

Run from the repository root:  python3 demos/06_latency_scaling.py
"""

from pathlib import Path

import numpy as np

from reachmon.estimation import calibrate_kalman
from reachmon.harness import run_benchmark
from reachmon.io import load_model
from reachmon.reachability import compute_certificate
from reachmon.stats import fit_line

ROOT = Path(__file__).resolve().parent.parent

model = load_model(ROOT / "models" / "tep_like.json")
cal = calibrate_kalman(model.a, model.c, model.process_cov, model.measurement_cov)
cert = compute_certificate(model, cal, beta=0.05, p=0.99, delta_h=0.9)
idle = {"type": "static",
        "gain": np.zeros((model.n_inputs, model.n_sensors)).tolist()}

k_list = [125, 250, 500, 1000]
c_list = [5, 50, 200, 500]
records = run_benchmark(model, cert, idle, k_list=k_list,
                        constraint_list=c_list, checks=100,
                        fixed_constraints=5, fixed_k=500, seed=7)

print(f"n = {model.n_states} states, early exit off, 100 checks per point\n")
print(f"{'K':>5} {'constraints':>12} {'mean':>9} {'p95':>9} {'max':>9}")
for r in records:
    print(f"{r.k_horizon:>5} {r.constraints:>12} {r.mean_seconds*1e3:>7.2f}ms"
          f" {r.p95_seconds*1e3:>7.2f}ms {r.max_seconds*1e3:>7.2f}ms")

k_part, c_part = records[: len(k_list)], records[len(k_list):]
k_fit = fit_line([r.k_horizon for r in k_part], [r.mean_seconds for r in k_part])
c_fit = fit_line([r.constraints for r in c_part], [r.mean_seconds for r in c_part])
print(f"\nlinear fits: R² = {k_fit.r_squared:.4f} vs horizon, "
      f"{c_fit.r_squared:.4f} vs constraint count")
print(f"worst mean latency {max(r.mean_seconds for r in records)*1e3:.2f} ms — "
      f"three orders of magnitude inside a 1 s sampling period")
