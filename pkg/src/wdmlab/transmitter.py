"""Root-raised-cosine pulse shaping and WDM multiplexing."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft

from .sigkit import DualPolField, EmptyInputError, dbm_to_watts, set_power


class ConfigurationError(ValueError):
    """Parameters describe a system that cannot be simulated faithfully."""


@dataclass(frozen=True)
class TxSpec:
    baud: float
    rolloff: float = 0.1
    sps_sim: int = 8
    filter_span: int = 32

    def __post_init__(self):
        if not 0 < self.rolloff <= 1:
            raise ConfigurationError("rolloff must be in (0, 1]")
        if self.filter_span % 2:
            raise ConfigurationError("filter_span must be even")
        if self.sps_sim < 2:
            raise ConfigurationError("sps_sim must be at least 2")

    @property
    def sample_rate(self) -> float:
        return self.baud * self.sps_sim

    @property
    def group_delay(self) -> float:
        """Delay of one RRC filter [s]."""
        return self.filter_span / 2 / self.baud


@dataclass(frozen=True)
class WdmGrid:
    n_channels: int
    spacing: float

    def __post_init__(self):
        if self.n_channels < 1 or self.n_channels % 2 == 0:
            raise ConfigurationError("n_channels must be a positive odd integer")

    @property
    def offsets(self) -> np.ndarray:
        i = np.arange(self.n_channels)
        return (i - (self.n_channels - 1) / 2) * self.spacing

    def channel_indices(self) -> np.ndarray:
        """Channel numbers relative to the central channel (0 is central)."""
        return np.arange(self.n_channels) - (self.n_channels - 1) // 2


def simulation_sps(baud, rolloff, n_channels, spacing, guard=0.9):
    """Smallest power-of-two oversampling that fits the WDM band with a guard band."""
    occupied = n_channels * spacing + (1 + rolloff) * baud
    sps = 2
    while occupied > guard * sps * baud:
        sps *= 2
    return sps


def rrc_taps(rolloff: float, span_symbols: int, sps: int) -> np.ndarray:
    """Unit-energy root-raised-cosine impulse response with ``span*sps + 1`` taps."""
    if rolloff < 1e-3:
        raise ConfigurationError("rolloff below 1e-3 makes the RRC formula singular")
    if span_symbols < 2 or span_symbols % 2:
        raise ConfigurationError("span_symbols must be a positive even integer")
    b = rolloff
    t = np.arange(-span_symbols * sps // 2, span_symbols * sps // 2 + 1) / sps
    h = np.empty_like(t)
    at_zero = np.isclose(t, 0.0, atol=1e-12)
    at_sing = np.isclose(np.abs(t), 1 / (4 * b), atol=1e-9)
    reg = ~(at_zero | at_sing)
    tr = t[reg]
    h[reg] = (np.sin(np.pi * tr * (1 - b)) + 4 * b * tr * np.cos(np.pi * tr * (1 + b))) / (
        np.pi * tr * (1 - (4 * b * tr) ** 2)
    )
    h[at_zero] = 1 - b + 4 * b / np.pi
    h[at_sing] = b / np.sqrt(2) * (
        (1 + 2 / np.pi) * np.sin(np.pi / (4 * b)) + (1 - 2 / np.pi) * np.cos(np.pi / (4 * b))
    )
    return h / np.sqrt(np.sum(h**2))


def cyclic_filter(x: np.ndarray, taps: np.ndarray) -> np.ndarray:
    """Circular convolution along the last axis; ``taps[0]`` aligns with sample 0."""
    n = x.shape[-1]
    if len(taps) > n:
        raise ConfigurationError("sequence shorter than filter")
    kernel = np.zeros(n, dtype=complex)
    kernel[: len(taps)] = taps
    return sfft.ifft(sfft.fft(x, axis=-1) * sfft.fft(kernel), axis=-1)


def rrc_response(n: int, sps: float, rolloff: float) -> np.ndarray:
    """Square root of the raised-cosine spectrum on an ``n``-point FFT grid.

    Frequencies are normalized to the symbol rate; the response is 1 in the
    flat band. Used as an untruncated (exactly Nyquist) RRC filter on cyclic
    blocks.
    """
    f = np.abs(np.fft.fftfreq(n, d=1.0 / sps))
    lo, hi = (1 - rolloff) / 2, (1 + rolloff) / 2
    rc = np.zeros(n)
    rc[f <= lo] = 1.0
    mid = (f > lo) & (f < hi)
    rc[mid] = 0.5 * (1 + np.cos(np.pi / rolloff * (f[mid] - lo)))
    return np.sqrt(rc)


def delay_phasor(n: int, sample_rate: float, delay: float) -> np.ndarray:
    """Spectral factor of a pure delay of ``delay`` seconds."""
    return np.exp(-1j * 2 * np.pi * np.fft.fftfreq(n, d=1.0 / sample_rate) * delay)


def pulse_shape(symbols, tx: TxSpec) -> np.ndarray:
    """Upsample by ``tx.sps_sim`` and RRC filter.

    Filtering is circular and uses the exact RRC frequency response, so the
    transmit/matched pair is Nyquist on the block. Output mean power equals
    mean symbol power. The filter carries the group delay of a causal
    ``filter_span``-symbol FIR: symbol ``k`` peaks at sample
    ``(k + filter_span/2) * sps`` (``tx.group_delay`` seconds).
    """
    s = np.asarray(symbols)
    if s.shape[-1] == 0:
        raise EmptyInputError("no symbols to shape")
    n = s.shape[-1] * tx.sps_sim
    up = np.zeros(s.shape[:-1] + (n,), dtype=complex)
    up[..., :: tx.sps_sim] = s
    h = tx.sps_sim * rrc_response(n, tx.sps_sim, tx.rolloff)
    h = h * delay_phasor(n, tx.sample_rate, tx.group_delay)
    return sfft.ifft(sfft.fft(up, axis=-1) * h, axis=-1)


def shape_dual_pol(sym_x, sym_y, tx: TxSpec) -> DualPolField:
    wave = pulse_shape(np.vstack([sym_x, sym_y]), tx)
    return DualPolField(wave, tx.sample_rate, 0.0, tx.group_delay)


def frequency_shift(samples: np.ndarray, shift_hz: float, sample_rate: float) -> np.ndarray:
    """Multiply by ``exp(j 2 pi f t)``; exact on the cyclic grid when ``f`` is an FFT bin."""
    n = samples.shape[-1]
    bins = shift_hz * n / sample_rate
    k = int(round(bins))
    if abs(bins - k) < 1e-6:
        # integer bin: reduce k*n/N mod N so the phasor is exactly periodic
        phasor = np.exp(2j * np.pi * ((k * np.arange(n)) % n) / n)
    else:
        phasor = np.exp(2j * np.pi * shift_hz * np.arange(n) / sample_rate)
    return samples * phasor


def wdm_mux(channels, grid: WdmGrid, powers_dbm, channel_bandwidth=None) -> DualPolField:
    """Scale each baseband channel to its launch power, shift it onto the grid and sum.

    Parameters
    ----------
    channels : sequence of DualPolField
        Baseband channels in ascending frequency order.
    grid : WdmGrid
    powers_dbm : float or sequence of float
        Launch power per channel (both polarizations together).
    channel_bandwidth : float, optional
        Occupied bandwidth per channel, used for the aliasing check. Defaults
        to the grid spacing.
    """
    channels = list(channels)
    if len(channels) != grid.n_channels:
        raise ConfigurationError(f"expected {grid.n_channels} channels, got {len(channels)}")
    powers = np.broadcast_to(np.asarray(powers_dbm, dtype=float), (grid.n_channels,))
    ref = channels[0]
    for ch in channels:
        if ch.n_samples != ref.n_samples or ch.sample_rate != ref.sample_rate:
            raise ConfigurationError("channels differ in length or sample rate")
    bw = grid.spacing if channel_bandwidth is None else channel_bandwidth
    edge = np.max(np.abs(grid.offsets)) + bw / 2
    if edge > ref.sample_rate / 2:
        raise ConfigurationError(
            f"WDM band edge {edge / 1e9:.1f} GHz exceeds Nyquist {ref.sample_rate / 2e9:.1f} GHz"
        )
    total = np.zeros_like(ref.samples)
    for ch, p, off in zip(channels, powers, grid.offsets):
        scaled = set_power(ch, float(dbm_to_watts(p)))
        total += frequency_shift(scaled.samples, off, ch.sample_rate)
    return DualPolField(total, ref.sample_rate, 0.0, ref.delay)
