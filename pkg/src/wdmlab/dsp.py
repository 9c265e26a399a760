"""Receiver DSP: channel selection, CD compensation, back-propagation, matched
filtering and the linear equalizers used as baselines."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft
from numpy.lib.stride_tricks import sliding_window_view

from .constants import MANAKOV_FACTOR, angular_grid, dispersion_phase
from .fiber import LinkSpec, split_step, step_lengths
from .sigkit import DualPolField
from .transmitter import ConfigurationError, delay_phasor, frequency_shift, rrc_response

log = logging.getLogger(__name__)


class StepSizeError(RuntimeError):
    """Adaptive equalizer taps diverged."""


@dataclass(frozen=True)
class RxChain:
    baud: float
    rolloff: float = 0.1
    select_bw: float | None = None
    target_sps: int = 2
    filter_span: int = 32

    def __post_init__(self):
        if self.select_bw is not None and self.select_bw < (1 + self.rolloff) * self.baud * (1 - 1e-9):
            raise ConfigurationError("select_bw narrower than the signal band")

    @property
    def bandwidth(self) -> float:
        return (1 + self.rolloff) * self.baud if self.select_bw is None else self.select_bw

    @property
    def group_delay(self) -> float:
        return self.filter_span / 2 / self.baud


@dataclass(frozen=True)
class DbpConfig:
    steps_per_span: int = 20
    sps: int = 4
    n_channels_backprop: int = 1

    def __post_init__(self):
        if self.steps_per_span < 1:
            raise ValueError("steps_per_span must be at least 1")
        if self.sps < 2:
            raise ValueError("sps must be at least 2")


@dataclass(frozen=True)
class AdaptiveEqConfig:
    n_taps: int = 21
    step_size: float = 1e-3
    mode: str = "lms"
    n_passes: int = 1
    tap_bound: float = 1e3

    def __post_init__(self):
        if self.n_taps % 2 == 0:
            raise ValueError("n_taps must be odd")
        if self.mode not in ("lms", "cma"):
            raise ValueError(f"unknown mode {self.mode!r}")


def resample_spectrum(spec: np.ndarray, n_out: int) -> np.ndarray:
    """Truncate or zero-pad an FFT-ordered spectrum to ``n_out`` bins."""
    n = spec.shape[-1]
    if n_out == n:
        return spec
    out = np.zeros(spec.shape[:-1] + (n_out,), dtype=complex)
    m = min(n, n_out)
    pos = (m + 1) // 2
    neg = m // 2
    out[..., :pos] = spec[..., :pos]
    if neg:
        out[..., -neg:] = spec[..., -neg:]
    return out * (n_out / n)


def channel_select(fld: DualPolField, offset: float, rx: RxChain, bandwidth=None,
                   sample_rate=None) -> DualPolField:
    """Shift ``offset`` (absolute, Hz) to DC, brick-wall filter and resample.

    The output rate is ``rx.target_sps * rx.baud`` unless ``sample_rate`` is
    given; the passband is ``rx.bandwidth`` unless ``bandwidth`` is given.
    """
    rel = offset - fld.center_offset
    if abs(rel) >= fld.sample_rate / 2:
        raise ConfigurationError(f"offset {offset / 1e9:.2f} GHz outside the sampled band")
    bw = rx.bandwidth if bandwidth is None else bandwidth
    rate = rx.target_sps * rx.baud if sample_rate is None else sample_rate
    n = fld.n_samples
    n_out = n * rate / fld.sample_rate
    if abs(n_out - round(n_out)) > 1e-6:
        raise ConfigurationError("output rate does not give an integer sample count")
    shifted = frequency_shift(fld.samples, -rel, fld.sample_rate)
    spec = sfft.fft(shifted, axis=-1)
    f = np.fft.fftfreq(n, d=1.0 / fld.sample_rate)
    spec[:, np.abs(f) > bw / 2] = 0
    out = sfft.ifft(resample_spectrum(spec, int(round(n_out))), axis=-1)
    return DualPolField(out, rate, offset, fld.delay)


def fde(fld: DualPolField, total_beta2_ps2: float) -> DualPolField:
    """Ideal all-pass chromatic-dispersion compensation of ``total_beta2_ps2``."""
    if total_beta2_ps2 == 0:
        return fld
    omega = angular_grid(fld.n_samples, fld.sample_rate) + 2 * np.pi * fld.center_offset
    h = np.conj(dispersion_phase(omega, total_beta2_ps2))
    return fld.with_samples(sfft.ifft(sfft.fft(fld.samples, axis=-1) * h, axis=-1))


def dbp_sample_rate(baud, spacing, n_channels, sps, max_rate=None):
    """Integer multiple of ``baud`` giving ``sps`` samples per channel-equivalent band."""
    k = int(np.ceil(sps * (1 + (n_channels - 1) * spacing / baud) - 1e-9))
    rate = k * baud
    return rate if max_rate is None else min(rate, max_rate)


def dbp_select(fld: DualPolField, center: float, spacing: float, rx: RxChain,
               cfg: DbpConfig) -> DualPolField:
    """Optical-filter ``cfg.n_channels_backprop`` channels around ``center`` and
    resample to the back-propagation rate."""
    n = cfg.n_channels_backprop
    bw = (n - 1) * spacing + rx.bandwidth
    rate = dbp_sample_rate(rx.baud, spacing, n, cfg.sps, max_rate=fld.sample_rate)
    return channel_select(fld, center, rx, bandwidth=bw, sample_rate=rate)


def dbp(fld: DualPolField, link: LinkSpec, cfg: DbpConfig, manakov_factor=MANAKOV_FACTOR,
        steps=None) -> DualPolField:
    """Full-field digital back-propagation through ``link``.

    Spans are undone in reverse order: remove the amplifier gain, then
    integrate the fiber with negated dispersion and nonlinearity and gain in
    place of loss, using the same symmetric scheme as the forward model.
    ``steps`` overrides the per-span step list of the forward direction
    (reversed internally), which makes an exact inverse possible.
    """
    fiber = link.fiber
    if steps is None:
        steps = step_lengths(fiber.length_km, fiber.length_km / cfg.steps_per_span)
    back_steps = np.asarray(steps)[::-1]
    a = fld.samples
    inv_gain = 10 ** (-fiber.loss_db / 20)
    for _ in range(link.n_spans):
        a = split_step(
            a * inv_gain, fld.sample_rate, back_steps, -fiber.alpha_np,
            -fiber.beta2_ps2_km, -fiber.gamma_w_km,
            center_offset=fld.center_offset, manakov_factor=manakov_factor,
        )
    return fld.with_samples(a)


def matched_filter(fld: DualPolField, rx: RxChain) -> DualPolField:
    """RRC matched filter (unit gain at the symbol instant), adding its group delay."""
    n = fld.n_samples
    sps = fld.sample_rate / rx.baud
    h = rrc_response(n, sps, rx.rolloff) * delay_phasor(n, fld.sample_rate, rx.group_delay)
    out = sfft.ifft(sfft.fft(fld.samples, axis=-1) * h, axis=-1)
    return DualPolField(out, fld.sample_rate, fld.center_offset, fld.delay + rx.group_delay)


def matched_downsample(fld: DualPolField, rx: RxChain, timing_offset: int = 0) -> np.ndarray:
    """Matched filter and sample once per symbol at the bookkept symbol centers.

    Returns a ``(2, n_symbols)`` array (x and y polarization).
    """
    sps = fld.sample_rate / rx.baud
    if abs(sps - round(sps)) > 1e-9:
        raise ConfigurationError("sample rate must be an integer multiple of the baud")
    sps = int(round(sps))
    mf = matched_filter(fld, rx)
    start = int(round(mf.delay * mf.sample_rate)) + int(timing_offset)
    return np.roll(mf.samples, -start, axis=-1)[:, ::sps]


def carrier_sync(rx_sym, tx_sym, fit=slice(None)):
    """Data-aided one-tap complex gain per lane (ideal phase and scale recovery).

    The gain minimizing ``|g*rx - tx|^2`` on the ``fit`` segment is applied to
    the full lane. Works on arrays of shape ``(..., n)``.
    """
    r = np.asarray(rx_sym)
    t = np.asarray(tx_sym)
    num = np.sum(np.conj(r[..., fit]) * t[..., fit], axis=-1, keepdims=True)
    den = np.sum(np.abs(r[..., fit]) ** 2, axis=-1, keepdims=True)
    return r * (num / den)


def _windows(x: np.ndarray, n_taps: int) -> np.ndarray:
    """Centered circular windows: ``out[..., t, j] = x[..., t - k + j]``."""
    k = n_taps // 2
    padded = np.concatenate([x[..., -k:], x, x[..., :k]], axis=-1) if k else x
    return sliding_window_view(padded, n_taps, axis=-1)


def _lms_rails(x, d, n_train, cfg: AdaptiveEqConfig):
    """Real LMS on every row of ``x`` (rails x time) with desired rows ``d``."""
    rails, n = x.shape
    w = np.zeros((rails, cfg.n_taps))
    w[:, cfg.n_taps // 2] = 1.0
    win = _windows(x, cfg.n_taps)
    mu = cfg.step_size
    for _ in range(cfg.n_passes):
        for t in range(n_train):
            xt = win[:, t, :]
            e = d[:, t] - np.einsum("rj,rj->r", w, xt)
            w += mu * e[:, None] * xt
            if t % 256 == 0 and not np.all(np.abs(w) < cfg.tap_bound):
                raise StepSizeError(f"LMS taps diverged at symbol {t}; reduce step_size")
    return w, np.einsum("rj,rtj->rt", w, win)


def _cma_lanes(x, n_train, cfg: AdaptiveEqConfig, radius2):
    lanes, n = x.shape
    w = np.zeros((lanes, cfg.n_taps), dtype=complex)
    w[:, cfg.n_taps // 2] = 1.0
    win = _windows(x, cfg.n_taps)
    mu = cfg.step_size
    for _ in range(cfg.n_passes):
        for t in range(n_train):
            xt = win[:, t, :]
            y = np.einsum("rj,rj->r", w, xt)
            e = y * (radius2 - np.abs(y) ** 2)
            w += mu * e[:, None] * np.conj(xt)
            if t % 256 == 0 and not np.all(np.abs(w) < cfg.tap_bound):
                raise StepSizeError(f"CMA taps diverged at symbol {t}; reduce step_size")
    return w, np.einsum("rj,rtj->rt", w, win)


def adaptive_equalize(stream, ref, cfg: AdaptiveEqConfig, n_train=None, return_taps=False):
    """Training-aided per-rail LMS or blind CMA FIR equalization.

    Parameters
    ----------
    stream : complex ndarray, shape (n,) or (lanes, n)
    ref : complex ndarray or float
        Reference symbols for LMS (same shape as ``stream``), or the target
        squared modulus for CMA (``None`` -> 1).
    n_train : int, optional
        Symbols used for adaptation; taps are frozen afterwards and the whole
        stream is filtered with them. Defaults to the full length.
    """
    x = np.atleast_2d(np.asarray(stream, dtype=complex))
    n = x.shape[-1]
    n_train = n if n_train is None else int(n_train)
    if cfg.mode == "lms":
        d = np.atleast_2d(np.asarray(ref, dtype=complex))
        rails_in = np.concatenate([x.real, x.imag])
        rails_ref = np.concatenate([d.real, d.imag])
        w, y = _lms_rails(rails_in, rails_ref, n_train, cfg)
        lanes = x.shape[0]
        out = y[:lanes] + 1j * y[lanes:]
    else:
        radius2 = 1.0 if ref is None else float(ref)
        w, out = _cma_lanes(x, n_train, cfg, radius2)
    out = out.reshape(np.shape(stream))
    return (out, w) if return_taps else out


class LinearMimoEqualizer:
    """Least-squares linear map from an ``L``-symbol window of all input lanes
    (I/Q as separate real features, plus a bias) to the I/Q of each target lane.
    """

    ridge = 1e-6

    def __init__(self, window: int):
        if window % 2 == 0:
            raise ValueError("window length must be odd")
        self.window = window
        self.weights = None
        self.regularized = False

    def features(self, lanes):
        x = np.atleast_2d(np.asarray(lanes, dtype=complex))
        real = np.concatenate([x.real, x.imag])  # (2*lanes, n)
        win = _windows(real, self.window)  # (2*lanes, n, L)
        n = x.shape[-1]
        feats = np.transpose(win, (1, 0, 2)).reshape(n, -1)
        return np.hstack([feats, np.ones((n, 1))])

    def fit(self, lanes, targets):
        a = self.features(lanes)
        t = np.atleast_2d(np.asarray(targets, dtype=complex))
        y = np.concatenate([t.real, t.imag]).T
        gram = a.T @ a
        rhs = a.T @ y
        rank = np.linalg.matrix_rank(gram)
        if rank < gram.shape[0]:
            warnings.warn(
                f"rank-deficient normal equations ({rank}/{gram.shape[0]}); ridge {self.ridge:g}",
                RuntimeWarning,
            )
            gram = gram + self.ridge * np.eye(gram.shape[0])
            self.regularized = True
        self.weights = np.linalg.solve(gram, rhs)
        return self

    def predict(self, lanes):
        y = self.features(lanes) @ self.weights
        m = y.shape[1] // 2
        return (y[:, :m] + 1j * y[:, m:]).T


def linreg_mimo(lanes, targets, window, train=slice(None)):
    """Fit :class:`LinearMimoEqualizer` on the ``train`` segment and equalize every lane.

    Returns ``(model, equalized)`` with ``equalized`` shaped ``(n_targets, n)``.
    """
    lanes = np.atleast_2d(lanes)
    targets = np.atleast_2d(targets)
    model = LinearMimoEqualizer(window).fit(lanes[:, train], targets[:, train])
    return model, model.predict(lanes)
