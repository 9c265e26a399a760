"""Analytic checks of the split-step fiber model.

Dispersion broadens a Gaussian pulse by sqrt(1 + (z/L_D)^2); Kerr
nonlinearity rotates a CW field by (8/9) gamma P L_eff; a lossless
nonlinear span conserves energy; back-propagation undoes a span.

Run:  python demos/physics_checks.py
"""
import numpy as np

from wdmlab.analysis import evm_db
from wdmlab.dsp import DbpConfig, dbp
from wdmlab.fiber import FiberSpec, LinkSpec, SsfmConfig, propagate_link, ssfm_span, step_lengths
from wdmlab.sigkit import QAM16, DualPolField, prng_symbols, set_power
from wdmlab.transmitter import TxSpec, shape_dual_pol

# %% Gaussian pulse, T0 = 10 ps, beta2 = -20 ps^2/km: L_D = 5 km
fs, n, t0 = 2e12, 1 << 14, 10e-12
t = (np.arange(n) - n // 2) / fs
pulse = np.exp(-t**2 / (2 * t0**2))
field = DualPolField(np.vstack([pulse, 0 * pulse]), fs)


def rms(x):
    p = np.abs(x) ** 2
    return np.sqrt(np.sum(t**2 * p) / np.sum(p))


for z in (2.5, 5.0, 10.0):
    out = ssfm_span(field, FiberSpec(0.0, -20.0, 0.0, z))
    print(f"z = {z:4.1f} km: T1/T0 = {rms(out.samples[0]) / rms(pulse):.4f} "
          f"(analytic {np.sqrt(1 + (z / 5) ** 2):.4f})")

# %% CW self-phase modulation over one lossy span
fiber = FiberSpec(0.2, -20.0, 1.3, 50.0)
for p_mw in (1, 10, 50):
    cw = DualPolField(np.vstack([np.full(64, np.sqrt(p_mw * 1e-3)), np.zeros(64)]), 1e11)
    phi = np.angle(ssfm_span(cw, fiber, SsfmConfig(1.0)).samples[0, 0])
    print(f"P = {p_mw:2d} mW: phase {phi:.6f} rad, analytic {8 / 9 * 1.3 * p_mw * 1e-3 * fiber.effective_length:.6f}")

# %% Propagate a 16QAM channel two spans and back-propagate at the same resolution
tx = TxSpec(16e9, 0.1, 4)
wave = set_power(shape_dual_pol(prng_symbols(1, 4096, QAM16), prng_symbols(2, 4096, QAM16), tx), 10e-3)
link = LinkSpec(fiber, n_spans=2)
rx = propagate_link(wave, link, SsfmConfig(0.5), noiseless=True)
back = dbp(rx, link, DbpConfig(100, 4), steps=step_lengths(50.0, 0.5))
print(f"after link (dispersed): EVM {evm_db(rx.samples, wave.samples):.1f} dB; after DBP: {evm_db(back.samples, wave.samples):.1f} dB")
