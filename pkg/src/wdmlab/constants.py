"""Physical constants and the propagation sign convention.

Fields use the numpy FFT convention ``A(t) = sum_k A_k exp(+j w_k t)``. The
envelope obeys

    dA/dz = -(alpha/2) A - j (beta2/2) d2A/dt2 + j gamma (8/9) |A|^2 A

so a length ``z`` of fiber multiplies each spectral line by
``exp(+j (beta2/2) w**2 z)`` and rotates the phase by ``+gamma (8/9) P z``.
Chromatic-dispersion compensation applies the conjugate phase. Every module
that touches dispersion imports :func:`dispersion_phase` from here.
"""

import numpy as np
import scipy.constants as const

PLANCK = const.h
LIGHT_SPEED = const.c
MANAKOV_FACTOR = 8.0 / 9.0
DEFAULT_WAVELENGTH_NM = 1550.0


def db_km_to_neper_km(alpha_db_km):
    """Power attenuation coefficient [1/km] from dB/km."""
    return alpha_db_km * np.log(10) / 10


def carrier_frequency(wavelength_nm=DEFAULT_WAVELENGTH_NM):
    return LIGHT_SPEED / (wavelength_nm * 1e-9)


def angular_grid(n, sample_rate):
    """Angular frequencies [rad/s] of an ``n``-point FFT, in FFT order."""
    return 2 * np.pi * np.fft.fftfreq(n, d=1.0 / sample_rate)


def dispersion_phase(omega, accumulated_ps2):
    """Spectral factor of ``accumulated_ps2`` (beta2 x length, ps^2) of dispersion.

    ``omega`` is in rad/s.
    """
    return np.exp(0.5j * accumulated_ps2 * 1e-24 * omega**2)
