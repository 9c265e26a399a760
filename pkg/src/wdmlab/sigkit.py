"""Signal containers, Gray-mapped QAM constellations and seeded symbol sources.

Symbol streams are plain complex ``numpy`` arrays at one sample per symbol.
Waveforms travel as :class:`DualPolField`, a ``(2, N)`` complex array with
sample-rate and frequency bookkeeping attached.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np


class EmptyInputError(ValueError):
    """An operation received a zero-length input."""


class FramingError(ValueError):
    """Bit count is not a multiple of the bits per symbol."""


def make_rng(seed: int) -> np.random.Generator:
    """Mersenne Twister generator for a 32-bit seed."""
    return np.random.Generator(np.random.MT19937(int(seed) & 0xFFFFFFFF))


@dataclass(frozen=True)
class ComplexSeq:
    samples: np.ndarray
    sample_rate: float

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")

    def __len__(self):
        return len(self.samples)


@dataclass(frozen=True)
class DualPolField:
    """Two-polarization complex baseband field.

    Parameters
    ----------
    samples : ndarray, shape (2, N)
        Row 0 is the x polarization, row 1 the y polarization. ``|E|**2`` is
        instantaneous power in watts.
    sample_rate : float
        Samples per second.
    center_offset : float
        Frequency of the array's baseband DC relative to the simulation band
        center [Hz].
    delay : float
        Accumulated filter group delay [s]; receivers use it to find symbol
        instants.
    """

    samples: np.ndarray
    sample_rate: float
    center_offset: float = 0.0
    delay: float = 0.0

    def __post_init__(self):
        s = np.asarray(self.samples)
        if s.ndim != 2 or s.shape[0] != 2:
            raise ValueError(f"samples must have shape (2, N), got {s.shape}")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        object.__setattr__(self, "samples", s.astype(complex, copy=False))

    @classmethod
    def from_pols(cls, pol_x: ComplexSeq, pol_y: ComplexSeq, center_offset=0.0, delay=0.0):
        if len(pol_x) != len(pol_y) or pol_x.sample_rate != pol_y.sample_rate:
            raise ValueError("polarizations must share length and sample rate")
        return cls(np.vstack([pol_x.samples, pol_y.samples]), pol_x.sample_rate, center_offset, delay)

    @property
    def pol_x(self) -> ComplexSeq:
        return ComplexSeq(self.samples[0], self.sample_rate)

    @property
    def pol_y(self) -> ComplexSeq:
        return ComplexSeq(self.samples[1], self.sample_rate)

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]

    def with_samples(self, samples, **changes) -> "DualPolField":
        return replace(self, samples=samples, **changes)


@dataclass(frozen=True)
class Constellation:
    """Square Gray-labelled QAM constellation with unit mean power.

    ``points[label]`` is the symbol carrying bit label ``label`` (MSB first,
    in-phase bits before quadrature bits), so the label table is the identity
    permutation and ``bit_map`` is kept only for explicitness.
    """

    name: str
    order: int
    points: np.ndarray = field(repr=False)
    bit_map: np.ndarray = field(repr=False)

    @property
    def bits_per_symbol(self) -> int:
        return int(np.log2(self.order))


def _gray_axis(bits_per_axis: int) -> np.ndarray:
    """Amplitude level for every axis label; first bit is the sign (0 -> +)."""
    n = 2**bits_per_axis
    levels = np.empty(n)
    for label in range(n):
        # gray -> binary rank, ordered from most positive level downwards
        rank, g = 0, label
        while g:
            rank ^= g
            g >>= 1
        levels[label] = (n - 1) - 2 * rank
    return levels


@lru_cache(maxsize=None)
def qam(order: int) -> Constellation:
    """Gray-mapped square QAM; ``order`` must be an even power of two."""
    k = int(round(np.log2(order)))
    if 2**k != order or k % 2:
        raise ValueError(f"square QAM order required, got {order}")
    half = k // 2
    axis = _gray_axis(half)
    labels = np.arange(order)
    i_lab = labels >> half
    q_lab = labels & ((1 << half) - 1)
    pts = axis[i_lab] + 1j * axis[q_lab]
    pts = pts / np.sqrt(np.mean(np.abs(pts) ** 2))
    pts.setflags(write=False)
    name = "QPSK" if order == 4 else f"{order}QAM"
    return Constellation(name, order, pts, labels)


QPSK = qam(4)
QAM16 = qam(16)


def constellation_by_name(name: str) -> Constellation:
    key = name.upper().replace("-", "")
    table = {"QPSK": 4, "4QAM": 4, "16QAM": 16, "64QAM": 64}
    if key not in table:
        raise ValueError(f"unknown constellation {name!r}")
    return qam(table[key])


def prng_symbols(seed: int, n: int, constellation: Constellation) -> np.ndarray:
    """``n`` i.i.d. uniform constellation symbols drawn from MT19937(seed)."""
    if n <= 0:
        raise EmptyInputError("symbol count must be positive")
    idx = make_rng(seed).integers(0, constellation.order, size=n)
    return constellation.points[constellation.bit_map[idx]]


def prng_bits(seed: int, n: int) -> np.ndarray:
    if n <= 0:
        raise EmptyInputError("bit count must be positive")
    return make_rng(seed).integers(0, 2, size=n, dtype=np.uint8)


def qam_map(bits, constellation: Constellation) -> np.ndarray:
    bits = np.asarray(bits, dtype=np.int64).ravel()
    k = constellation.bits_per_symbol
    if bits.size % k:
        raise FramingError(f"{bits.size} bits is not a multiple of {k}")
    groups = bits.reshape(-1, k)
    labels = groups @ (1 << np.arange(k - 1, -1, -1))
    return constellation.points[constellation.bit_map[labels]]


def nearest_labels(symbols, constellation: Constellation) -> np.ndarray:
    """Minimum-distance decision; exact ties resolve to the lowest label."""
    s = np.asarray(symbols).ravel()
    order = np.argsort(constellation.bit_map)  # positions sorted by label
    pts = constellation.points[order]
    out = np.empty(s.size, dtype=np.int64)
    chunk = 1 << 16
    for start in range(0, s.size, chunk):
        d = np.abs(s[start:start + chunk, None] - pts[None, :]) ** 2
        out[start:start + chunk] = constellation.bit_map[order[np.argmin(d, axis=1)]]
    return out


def qam_demap(symbols, constellation: Constellation) -> np.ndarray:
    labels = nearest_labels(symbols, constellation)
    k = constellation.bits_per_symbol
    shifts = np.arange(k - 1, -1, -1)
    return ((labels[:, None] >> shifts) & 1).astype(np.uint8).ravel()


def dbm_to_watts(p_dbm):
    return 10 ** (np.asarray(p_dbm, dtype=float) / 10) / 1e3


def watts_to_dbm(p_w):
    return 10 * np.log10(np.asarray(p_w, dtype=float) * 1e3)


def power_of(field: DualPolField) -> float:
    """Mean total power of both polarizations [W]."""
    if field.n_samples == 0:
        raise EmptyInputError("empty field")
    return float(np.mean(np.sum(np.abs(field.samples) ** 2, axis=0)))


def set_power(field: DualPolField, watts: float) -> DualPolField:
    scale = np.sqrt(watts / power_of(field))
    return field.with_samples(field.samples * scale)


def normalize_power(x, axis=-1):
    """Scale to unit mean power along ``axis``."""
    x = np.asarray(x)
    return x / np.sqrt(np.mean(np.abs(x) ** 2, axis=axis, keepdims=True))


def add_awgn(symbols, snr_db: float, seed: int) -> np.ndarray:
    """Complex AWGN at ``snr_db`` relative to the mean symbol power."""
    s = np.asarray(symbols)
    p = np.mean(np.abs(s) ** 2)
    n0 = p / 10 ** (snr_db / 10)
    rng = make_rng(seed)
    noise = rng.standard_normal(s.shape) + 1j * rng.standard_normal(s.shape)
    return s + np.sqrt(n0 / 2) * noise
