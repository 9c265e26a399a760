"""Multiplications per detected symbol for the bi-VRNN, FDE and DBP.

Run:  python demos/complexity_tables.py
"""
from wdmlab.analysis import ComplexityInputs, bivrnn_mults, channel_inputs, dbp_complexity, fde_complexity
from wdmlab.harness.runners import REFERENCE_CASES, complexity_summary

# %% Reference configurations: dual-pol simulation and single-pol experiment
for name, m, n_pol, H in REFERENCE_CASES:
    rep = bivrnn_mults(channel_inputs(m, H, n_pol))
    print(f"{name:8s} m={m} pol={n_pol} H={H:2d}: {rep.total:8.0f} mults/word, {rep.mps} mps")

# %% Linear stages
base = ComplexityInputs()
print(f"FDE: {fde_complexity(base).mps} mps")
dbp = dbp_complexity(base)
print(f"DBP (20 steps/span, 2 spans): {dbp.total:.1f} per bit, {dbp.mps} per symbol")

# %% Joint processing gets cheaper per symbol as channels are added
print("\n H   1ch   3ch   5ch")
for H in range(12, 25, 2):
    row = [bivrnn_mults(channel_inputs(m, H, 2)).mps for m in (1, 3, 5)]
    print(f"{H:2d} " + " ".join(f"{v:5d}" for v in row))

# %% Headline comparisons
for k, v in complexity_summary().items():
    print(f"{k}: {v:.2f}")
