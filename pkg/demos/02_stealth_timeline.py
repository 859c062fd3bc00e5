"""One stealthy sensor attack, narrated step by step.

`scenarios/stealth.json` steers two of the three sensors at the stealth
boundary: the injected residual is held just under the detector threshold,
with occasional deliberate alarms at the detector's own false-alarm rate so
the alarm statistics look nominal.  The plant drifts toward the unsafe
half-space while the estimate stays innocent-looking.

The interesting ordering is

    warning (reach set overlaps unsafe)  <  damage (true state unsafe)

with the detector alarming only at its design rate throughout.

Run from the repository root:  python3 demos/02_stealth_timeline.py
"""

from pathlib import Path

import numpy as np

from reachmon.harness import ScenarioRuntime, load_scenario, simulate_trial

ROOT = Path(__file__).resolve().parent.parent

scenario = load_scenario(ROOT / "scenarios" / "stealth.json")
print(f"scenario '{scenario.name}': horizon {scenario.horizon} steps, "
      f"K = {scenario.k_horizon}, attack {scenario.attack_spec['strategy']} "
      f"on sensors {scenario.attack_spec['sensors']} "
      f"from step {scenario.attack_spec['start']}")

runtime = ScenarioRuntime.calibrated(scenario)
trial = simulate_trial(runtime, scenario.seed)

warning = trial.series.warning_step(scenario.k_horizon)
events = {
    "attack starts": trial.attack.start,
    "monitor warning (reach set touches unsafe)": warning,
    "true state enters unsafe set": trial.damage_step,
    "first detector alarm in the attack window": trial.detection_step,
}
print("\ntimeline:")
for label, step in sorted(events.items(), key=lambda kv: (kv[1] is None, kv[1])):
    when = "never" if step is None else f"step {step:4d}"
    print(f"  {when}  {label}")

lead = (trial.damage_step - warning) * scenario.model.dt
print(f"\nthe monitor leads damage by {trial.damage_step - warning} steps "
      f"({lead:.0f} s of wall-clock at dt = {scenario.model.dt} s)")

window = trial.trace.alarm[trial.attack.start:]
print(f"attack-window alarm rate: {window.mean():.4f} "
      f"(detector design rate beta = {scenario.beta}) — nothing to see here: "
      f"the attacker raises its own camouflage alarms at the nominal rate, so "
      f"individual alarms carry no evidence")

unsafe_steps = int((~trial.series.safe).sum())
k_f = trial.series.k_f
active = k_f[k_f >= 0]
print(f"\nmonitor verdicts: {unsafe_steps}/{len(trial.series)} steps flag a "
      f"reachable violation; predicted time-of-violation offset falls from "
      f"{active.max()} to {active.min()} steps as the state closes in")

# The first flagged step, in detail.
first = int(np.flatnonzero(~trial.series.safe)[0])
print(f"\nfirst flagged step {first}: k_f = {k_f[first]}, "
      f"Tc = {trial.series.tc_seconds[first]:.0f} s, "
      f"impact = {trial.series.impact[first]:.3f}, "
      f"baseline d_u = {trial.series.d_u[first]:.2f} "
      f"(baseline still sees a comfortable distance)")
