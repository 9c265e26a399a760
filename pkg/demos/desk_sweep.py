"""Desk-scale launch-power sweep: FDE only, linear MIMO regression and bi-VRNNs.

Three 16 GBd dual-pol 16QAM channels over 8 x 50 km. Each power point takes
several minutes on one core (simulation plus two RNN trainings); pass
``--jobs`` to spread points over processes.

Run:  python demos/desk_sweep.py [--jobs 4] [--out out/desk]
"""
import argparse

from wdmlab.harness import ExperimentConfig, run_sweep
from wdmlab.harness.runners import central_curve

ap = argparse.ArgumentParser()
ap.add_argument("--jobs", type=int, default=1)
ap.add_argument("--out", default="out/desk")
args = ap.parse_args()

cfg = ExperimentConfig.preset("desk")
print(f"config {cfg.hash()}: {cfg['tx']['n_channels']} x {cfg['tx']['spacing_hz'] / 1e9:g} GHz, "
      f"powers {cfg['sweep']['powers_dbm']} dBm")
rows, manifest = run_sweep(cfg, args.out, jobs=args.jobs)

# %% Central-channel BER per equalizer (both polarizations pooled)
curve = central_curve(rows)
print(" ".join(f"{c:>12s}" for c in curve["columns"]))
for r in curve["rows"]:
    print(" ".join(f"{r[c]:12.3e}" if c != "power_dbm" else f"{r[c]:12g}" for c in curve["columns"]))
for err in manifest.errors:
    print("failed:", err["power_dbm"], err["error"])
