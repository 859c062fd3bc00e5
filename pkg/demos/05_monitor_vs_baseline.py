"""Why reach-set impact beats distance-to-unsafe under a slow bias attack.

The traditional safety proxy watches the estimate's Euclidean distance to
the unsafe region (d_u) and divides by its trailing rate of approach to
get a time-to-unsafe (t_u).  Both read the *estimate* — exactly the
signal a stealthy attacker controls.  This demo runs one trial of the
baseline-comparison scenario, where a slow sensor bias walks the plant
into a kill face while the estimate recedes from a decoy face, and
tabulates what each metric says on the way down.

Run from the repository root:  python3 demos/05_monitor_vs_baseline.py
"""

from pathlib import Path

import numpy as np

from reachmon.harness import ScenarioRuntime, load_scenario, simulate_trial

ROOT = Path(__file__).resolve().parent.parent

scenario = load_scenario(ROOT / "scenarios" / "baseline.json")
runtime = ScenarioRuntime.calibrated(scenario)
trial = simulate_trial(runtime, np.random.SeedSequence(20250606).spawn(1)[0])

damage = trial.damage_step
dt = scenario.model.dt
print(f"growing bias on sensor 0 from step {trial.attack.start}; "
      f"damage at step {damage}; detector alarms in the attack window: "
      f"{int(trial.trace.alarm[trial.attack.start:].sum())} (stealth holds)\n")

print(f"{'step':>6} {'truth Tc':>9} {'monitor Tc':>11} {'impact':>9} "
      f"{'baseline d_u':>13} {'baseline t_u':>13}")
for k in [*range(500, damage, 300), damage]:
    truth = (damage - k) * dt
    t_u = trial.series.t_u[k]
    print(f"{k:>6} {truth:>9.0f} {trial.series.tc_seconds[k]:>11.0f} "
          f"{trial.series.impact[k]:>9.1e} {trial.series.d_u[k]:>13.2f} "
          f"{'nan' if not np.isfinite(t_u) else f'{t_u:.0f}':>13}")

# Error-vs-truth summary over the approach.
w0 = 500
steps = np.arange(w0, damage)
truth = (damage - steps) * dt
err_mon = np.abs(trial.series.tc_seconds[w0:damage] - truth)
err_base = np.abs(trial.series.t_u[w0:damage] - truth)
half = (damage - w0) // 2
d_mon = np.nanmean(err_mon[half:]) - np.nanmean(err_mon[:half])
d_base = np.nanmean(err_base[half:]) - np.nanmean(err_base[:half])
print(f"\n|prediction - truth|, early half vs late half of the approach:")
print(f"  monitor Tc  : {np.nanmean(err_mon[:half]):8.1f} -> "
      f"{np.nanmean(err_mon[half:]):8.1f}  (shift {d_mon:+.0f} s)")
print(f"  baseline t_u: {np.nanmean(err_base[:half]):8.1f} -> "
      f"{np.nanmean(err_base[half:]):8.1f}  (shift {d_base:+.0f} s)")

k_imp = int(np.flatnonzero(trial.series.impact > 0)[0])
t_u_window = trial.series.t_u[w0:damage]
print(f"""
both errors fall as the truth runs down to zero — that much is mechanical —
but the monitor improves by more ({d_mon:+.0f} vs {d_base:+.0f} s), the margin
the twenty-run acceptance battery turns into a paired sign test.  The failure
modes differ in kind, too: the monitor errs on the conservative side from the
start — reach-set overlap flagged from step {k_imp}, Tc below the truth — and
meets the truth exactly at damage, while t_u wanders between
{np.nanmin(t_u_window):.0f} and {np.nanmax(t_u_window):.0f} s with no relation
to the actual countdown: it is reading the estimate's clearance to a decoy
face the attacker is receding from, blind to the certified error set.""")
