"""Manakov split-step propagation over amplified fiber spans."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft

from .constants import (
    MANAKOV_FACTOR,
    PLANCK,
    angular_grid,
    carrier_frequency,
    db_km_to_neper_km,
    dispersion_phase,
)
from .sigkit import DualPolField, make_rng


class PropagationError(FloatingPointError):
    """The field became non-finite during integration."""

    def __init__(self, message, step):
        super().__init__(f"{message} (step {step})")
        self.step = step


@dataclass(frozen=True)
class FiberSpec:
    alpha_db_km: float = 0.2
    beta2_ps2_km: float = -20.0
    gamma_w_km: float = 1.3
    length_km: float = 50.0

    def __post_init__(self):
        if self.alpha_db_km < 0:
            raise ValueError("alpha_db_km must be non-negative")
        if self.length_km <= 0:
            raise ValueError("length_km must be positive")

    @property
    def loss_db(self) -> float:
        return self.alpha_db_km * self.length_km

    @property
    def alpha_np(self) -> float:
        """Power attenuation [1/km]."""
        return db_km_to_neper_km(self.alpha_db_km)

    @property
    def effective_length(self) -> float:
        a = self.alpha_np
        return self.length_km if a == 0 else (1 - np.exp(-a * self.length_km)) / a


@dataclass(frozen=True)
class LinkSpec:
    fiber: FiberSpec = field(default_factory=FiberSpec)
    n_spans: int = 24
    amp_noise_figure_db: float = 5.0
    center_wavelength_nm: float = 1550.0

    def __post_init__(self):
        if self.n_spans < 1:
            raise ValueError("n_spans must be at least 1")

    @property
    def length_km(self) -> float:
        return self.fiber.length_km * self.n_spans

    @property
    def total_beta2_ps2(self) -> float:
        return self.fiber.beta2_ps2_km * self.length_km


@dataclass(frozen=True)
class SsfmConfig:
    step_km: float = 0.1
    manakov_factor: float = MANAKOV_FACTOR

    def __post_init__(self):
        if self.step_km <= 0:
            raise ValueError("step_km must be positive")


def step_lengths(length_km: float, step_km: float) -> np.ndarray:
    """Fixed steps covering ``length_km``; the last one may be shorter."""
    n_full = int(np.floor(length_km / step_km + 1e-9))
    steps = [step_km] * n_full
    rest = length_km - n_full * step_km
    if rest > 1e-9 * length_km:
        steps.append(rest)
    return np.asarray(steps)


def effective_step(alpha_np: float, h: float) -> float:
    """Integral of the power profile over a step, relative to its midpoint power."""
    if alpha_np == 0:
        return h
    return 2 * np.sinh(alpha_np * h / 2) / alpha_np


def split_step(samples, sample_rate, steps, alpha_np, beta2_ps2_km, gamma, *,
               center_offset=0.0, manakov_factor=MANAKOV_FACTOR):
    """Symmetric split-step integration of the Manakov equation.

    Every step of length ``h`` is ``D(h/2) N(h) D(h/2)``; consecutive linear
    half steps are merged. ``alpha_np`` may be negative (gain) and ``beta2``
    and ``gamma`` may be negated, which is how back-propagation reuses this
    routine. Returns a new ``(2, N)`` array.
    """
    a = np.array(samples, dtype=complex, copy=True)
    steps = np.asarray(steps, dtype=float)
    if steps.size == 0:
        return a
    omega = angular_grid(a.shape[-1], sample_rate) + 2 * np.pi * center_offset
    cache = {}

    def linear(h):
        key = round(h, 12)
        if key not in cache:
            cache[key] = np.exp(-alpha_np * h / 2) * dispersion_phase(omega, beta2_ps2_km * h)
        return cache[key]

    nl_coef = gamma * manakov_factor
    if nl_coef == 0:
        # linear operators commute: one spectral multiplication covers all steps
        if alpha_np == 0 and beta2_ps2_km == 0:
            return a
        return sfft.ifft(sfft.fft(a, axis=-1) * linear(steps.sum()), axis=-1)
    spec = sfft.fft(a, axis=-1)
    prev = 0.0
    for i, h in enumerate(steps):
        spec *= linear((prev + h) / 2)
        a = sfft.ifft(spec, axis=-1)
        power = a.real**2 + a.imag**2
        power = power[0] + power[1]
        if not np.isfinite(power.sum()):
            raise PropagationError("non-finite field", i)
        a *= np.exp(1j * nl_coef * effective_step(alpha_np, h) * power)
        spec = sfft.fft(a, axis=-1)
        prev = h
    spec *= linear(prev / 2)
    a = sfft.ifft(spec, axis=-1)
    if not np.all(np.isfinite(a)):
        raise PropagationError("non-finite field", len(steps) - 1)
    return a


def ssfm_span(fld: DualPolField, fiber: FiberSpec, cfg: SsfmConfig = SsfmConfig()) -> DualPolField:
    """Propagate one span of fiber (no amplification)."""
    out = split_step(
        fld.samples, fld.sample_rate, step_lengths(fiber.length_km, cfg.step_km),
        fiber.alpha_np, fiber.beta2_ps2_km, fiber.gamma_w_km,
        center_offset=fld.center_offset, manakov_factor=cfg.manakov_factor,
    )
    return fld.with_samples(out)


def ase_power(gain_db, nf_db, bandwidth, wavelength_nm=1550.0):
    """ASE power per polarization [W] over ``bandwidth`` Hz; n_sp is NF/2."""
    g = 10 ** (gain_db / 10)
    n_sp = 10 ** (nf_db / 10) / 2
    return (g - 1) * PLANCK * carrier_frequency(wavelength_nm) * n_sp * bandwidth


def edfa(fld: DualPolField, gain_db: float, nf_db: float, seed: int, *,
         wavelength_nm=1550.0, noiseless=False) -> DualPolField:
    """Lumped amplifier with white circular Gaussian ASE over the sampled band."""
    if gain_db < 0:
        raise ValueError("gain_db must be non-negative")
    out = fld.samples * 10 ** (gain_db / 20)
    if not noiseless:
        var = ase_power(gain_db, nf_db, fld.sample_rate, wavelength_nm)
        rng = make_rng(seed)
        noise = rng.standard_normal(out.shape) + 1j * rng.standard_normal(out.shape)
        out = out + np.sqrt(var / 2) * noise
    return fld.with_samples(out)


def span_seed(seed: int, span: int) -> int:
    """Independent 32-bit seed for the amplifier after ``span``."""
    return int(np.random.SeedSequence([int(seed), int(span)]).generate_state(1)[0])


def propagate_link(fld: DualPolField, link: LinkSpec, cfg: SsfmConfig = SsfmConfig(),
                   seed: int = 0, noiseless: bool = False) -> DualPolField:
    """``n_spans`` x (fiber span, then an amplifier restoring the span loss)."""
    for span in range(link.n_spans):
        fld = ssfm_span(fld, link.fiber, cfg)
        fld = edfa(fld, link.fiber.loss_db, link.amp_noise_figure_db, span_seed(seed, span),
                   wavelength_nm=link.center_wavelength_nm, noiseless=noiseless)
    return fld
