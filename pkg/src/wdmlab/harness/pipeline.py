"""End-to-end simulation and receiver chain for one launch-power point.

Lane order everywhere is channel (ascending frequency) then polarization, so
lane ``c * n_pol + p`` is polarization ``p`` of channel ``c``.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from ..analysis import ber_count, evm_db
from ..dsp import (
    AdaptiveEqConfig,
    DbpConfig,
    RxChain,
    adaptive_equalize,
    carrier_sync,
    channel_select,
    dbp,
    dbp_select,
    fde,
    linreg_mimo,
    matched_downsample,
)
from ..fiber import FiberSpec, LinkSpec, SsfmConfig, propagate_link
from ..rnn import (
    BiVrnnModel,
    TrainConfig,
    WindowSpec,
    infer_symbols,
    make_windows,
    train,
)
from ..sigkit import DualPolField, constellation_by_name, prng_symbols
from ..transmitter import TxSpec, WdmGrid, shape_dual_pol, simulation_sps, wdm_mux
from .config import ExperimentConfig, equalizer_label

log = logging.getLogger(__name__)

# offsets added to the run seed; fixed so every power point sees the same
# symbols and the same amplifier noise (paired comparison)
DATA_SEED_BASE = 1000
NOISE_SEED_OFFSET = 777


@dataclass
class Splits:
    train: slice
    val: slice
    test: slice

    @classmethod
    def from_config(cls, cfg: ExperimentConfig) -> "Splits":
        s = cfg["symbols"]
        a, b = s["train"], s["train"] + s["val"]
        return cls(slice(0, a), slice(a, b), slice(b, b + s["test"]))


@dataclass
class Simulation:
    """Transmitted and FDE-received symbols of every lane, plus the optical field."""

    tx: np.ndarray  # (lanes, n)
    rx: np.ndarray  # (lanes, n), after FDE, matched filter and carrier sync
    field: DualPolField | None
    n_channels: int
    n_pol: int
    timings: dict = field(default_factory=dict)

    def lanes_of(self, channels) -> list[int]:
        return [c * self.n_pol + p for c in channels for p in range(self.n_pol)]


def link_from_config(cfg: ExperimentConfig) -> LinkSpec:
    k = cfg["link"]
    fiber = FiberSpec(k["alpha_db_km"], k["beta2_ps2_km"], k["gamma_w_km"], k["span_km"])
    return LinkSpec(fiber, k["n_spans"], k["nf_db"], k["wavelength_nm"])


def grid_from_config(cfg: ExperimentConfig) -> WdmGrid:
    return WdmGrid(cfg["tx"]["n_channels"], cfg["tx"]["spacing_hz"])


def tx_from_config(cfg: ExperimentConfig) -> TxSpec:
    t = cfg["tx"]
    sps = simulation_sps(t["baud"], t["rolloff"], t["n_channels"], t["spacing_hz"])
    return TxSpec(t["baud"], t["rolloff"], sps, t["filter_span"])


def rx_from_config(cfg: ExperimentConfig, target_sps=2) -> RxChain:
    t = cfg["tx"]
    return RxChain(t["baud"], t["rolloff"], None, target_sps, t["filter_span"])


def transmit_symbols(cfg: ExperimentConfig, seed: int) -> np.ndarray:
    """Independent PRBS-like symbol stream per lane, ``(lanes, n)``."""
    const = constellation_by_name(cfg["tx"]["constellation"])
    n_lanes = cfg["tx"]["n_channels"] * cfg["tx"]["n_pol"]
    return np.vstack([prng_symbols(seed + DATA_SEED_BASE + i, cfg.n_symbols, const)
                      for i in range(n_lanes)])


def _dual_pol(sym: np.ndarray, n_pol: int):
    if n_pol == 2:
        return sym[0], sym[1]
    return sym[0], np.zeros_like(sym[0])


def simulate(cfg: ExperimentConfig, power_dbm: float, seed: int | None = None,
             keep_field=False, timings: dict | None = None) -> Simulation:
    """Transmit, propagate and coherently receive all channels at one power.

    The received wideband field is dispersion-compensated as a whole (so all
    channels share one time reference), then every channel is selected,
    matched-filtered and sampled at one sample per symbol. A data-aided
    one-tap gain fit on the training split removes the common phase and scale.
    """
    seed = cfg["seed"] if seed is None else seed
    timings = {} if timings is None else timings
    t0 = time.perf_counter()
    n_ch, n_pol = cfg["tx"]["n_channels"], cfg["tx"]["n_pol"]
    tx = tx_from_config(cfg)
    grid = grid_from_config(cfg)
    link = link_from_config(cfg)
    symbols = transmit_symbols(cfg, seed)
    chans = [shape_dual_pol(*_dual_pol(symbols[c * n_pol:(c + 1) * n_pol], n_pol), tx)
             for c in range(n_ch)]
    launch = wdm_mux(chans, grid, power_dbm, channel_bandwidth=(1 + tx.rolloff) * tx.baud)
    timings["transmit"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    out = propagate_link(launch, link, SsfmConfig(cfg["ssfm"]["step_km"]),
                         seed=seed + NOISE_SEED_OFFSET, noiseless=cfg["noiseless"])
    timings["propagate"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    rx = receive_fde(out, cfg, link)
    rx = carrier_sync(rx, symbols, Splits.from_config(cfg).train)
    timings["receive"] = time.perf_counter() - t0
    return Simulation(symbols, rx, out if keep_field else None, n_ch, n_pol, timings)


def receive_fde(fld: DualPolField, cfg: ExperimentConfig, link: LinkSpec) -> np.ndarray:
    """FDE the full field, then demultiplex every channel to symbol lanes."""
    rxc = rx_from_config(cfg)
    comp = fde(fld, link.total_beta2_ps2)
    lanes = []
    n_pol = cfg["tx"]["n_pol"]
    for off in grid_from_config(cfg).offsets:
        sym = matched_downsample(channel_select(comp, off, rxc), rxc)
        lanes.extend(sym[:n_pol])
    return np.vstack(lanes)


# --- equalizers ----------------------------------------------------------

@dataclass
class EqualizerOutput:
    label: str
    channels: list  # channel indices (0 = central) of the output lanes, per lane
    pols: list
    symbols: np.ndarray  # (lanes, n_eval)
    reference: np.ndarray
    extra: dict = field(default_factory=dict)


def central_channels(n_channels: int, m: int) -> list[int]:
    mid = n_channels // 2
    return list(range(mid - m // 2, mid + m // 2 + 1))


def window_spec(cfg: ExperimentConfig) -> WindowSpec:
    return WindowSpec(cfg["rnn"]["L"], cfg["rnn"]["edge"])


def evaluation_positions(cfg: ExperimentConfig) -> np.ndarray:
    """Test-split stream indices scored by every equalizer.

    These are the central outputs of the test-split RNN words, so all
    equalizers are compared on exactly the same symbols.
    """
    sp = Splits.from_config(cfg)
    n = sp.test.stop - sp.test.start
    dummy = make_windows(np.zeros((1, n)), window_spec(cfg))
    return sp.test.start + dummy.centers


def _train_config(cfg: ExperimentConfig, seed: int, epochs=None) -> TrainConfig:
    r = cfg["rnn"]
    return TrainConfig(r["batch_words"], r["epochs"] if epochs is None else epochs, r["lr"],
                       r["beta1"], r["beta2"], r["eps"], seed)


def run_bivrnn(sim: Simulation, cfg: ExperimentConfig, m: int, H: int, seed: int, epochs=None):
    """Train a bi-VRNN on ``m`` central channels; returns (model, history, outputs).

    ``epochs`` overrides ``rnn.epochs`` (equalizer entries may carry their own).

    ``outputs`` maps ``"central"`` and ``"full"`` to ``(symbols, reference,
    positions)`` over the test split: central keeps the ``L_eff`` middle
    outputs of every word, full keeps all ``L``.
    """
    chans = central_channels(sim.n_channels, m)
    lanes = sim.lanes_of(chans)
    spec = window_spec(cfg)
    sp = Splits.from_config(cfg)
    x, t = sim.rx[lanes], sim.tx[lanes]
    stride = cfg["rnn"].get("train_stride")
    sets = {name: make_windows(x[:, s], spec, t[:, s], stride=stride if name == "train" else None)
            for name, s in (("train", sp.train), ("val", sp.val), ("test", sp.test))}
    F = 2 * len(lanes)
    model = BiVrnnModel.init(H, F, F, spec.length, seed=seed)
    best, hist = train(model, sets["train"], _train_config(cfg, seed, epochs), sets["val"])
    test = sets["test"]
    out = {}
    for key, central in (("central", True), ("full", False)):
        sym = infer_symbols(best, test, central_only=central)
        if central:
            pos = test.centers
        else:
            pos = (test.starts[:, None] + np.arange(spec.length)[None, :]).ravel()
        out[key] = (sym, t[:, sp.test][:, pos], sp.test.start + pos)
    return best, hist, out, chans


def run_dbp(sim: Simulation, cfg: ExperimentConfig, eq: dict) -> np.ndarray:
    """Back-propagate ``channels`` central channels, then 21-tap LMS per lane.

    Returns equalized symbols of the central channel lanes, full length.
    """
    if sim.field is None:
        raise ValueError("DBP needs the received optical field (keep_field=True)")
    link = link_from_config(cfg)
    rxc = rx_from_config(cfg)
    dcfg = DbpConfig(eq.get("steps_per_span", 20), eq.get("sps", 4), eq.get("channels", 1))
    grid = grid_from_config(cfg)
    center = grid.offsets[sim.n_channels // 2]
    sel = dbp_select(sim.field, center, grid.spacing, rxc, dcfg)
    back = dbp(sel, link, dcfg)
    sym = matched_downsample(channel_select(back, center, rxc), rxc)[: sim.n_pol]
    lanes = sim.lanes_of([sim.n_channels // 2])
    ref = sim.tx[lanes]
    sp = Splits.from_config(cfg)
    sym = carrier_sync(sym, ref, sp.train)
    acfg = AdaptiveEqConfig(eq.get("taps", 21), eq.get("step_size", 1e-3))
    return adaptive_equalize(sym, ref, acfg, n_train=sp.train.stop)


def run_equalizers(sim: Simulation, cfg: ExperimentConfig, seed: int | None = None,
                   timings: dict | None = None, models: dict | None = None):
    """Apply every configured equalizer; returns a list of :class:`EqualizerOutput`."""
    seed = cfg["seed"] if seed is None else seed
    timings = {} if timings is None else timings
    pos = evaluation_positions(cfg)
    sp = Splits.from_config(cfg)
    mid = sim.n_channels // 2
    outs = []
    for eq in cfg["equalizers"]:
        label = equalizer_label(eq)
        t0 = time.perf_counter()
        kind = eq["kind"]
        if kind == "none":
            chans = list(range(sim.n_channels))
            lanes = sim.lanes_of(chans)
            sym = sim.rx[lanes][:, pos]
            extra = {}
        elif kind == "linreg":
            chans = central_channels(sim.n_channels, eq.get("m", 1))
            lanes = sim.lanes_of(chans)
            _, full = linreg_mimo(sim.rx[lanes], sim.tx[lanes], eq.get("window", cfg["rnn"]["L"]),
                                  sp.train)
            sym = full[:, pos]
            extra = {}
        elif kind == "bivrnn":
            model, hist, res, chans = run_bivrnn(sim, cfg, eq.get("m", 1), eq["H"], seed,
                                                 eq.get("epochs"))
            lanes = sim.lanes_of(chans)
            sym, _, p = res["central"]
            if not np.array_equal(p, pos):
                raise RuntimeError("RNN evaluation positions drifted")
            extra = {"history": hist, "full": res["full"]}
            if models is not None:
                models[label] = model
        else:
            chans = [mid]
            lanes = sim.lanes_of(chans)
            sym = run_dbp(sim, cfg, eq)[:, pos]
            extra = {}
        timings[label] = time.perf_counter() - t0
        ch_rel = [c - mid for c in chans for _ in range(sim.n_pol)]
        pols = [p for _ in chans for p in range(sim.n_pol)]
        outs.append(EqualizerOutput(label, ch_rel, pols, sym, sim.tx[lanes][:, pos], extra))
    return outs


def score_rows(power_dbm: float, outs, constellation) -> list[dict]:
    """One row per (equalizer, channel, pol)."""
    rows = []
    for o in outs:
        rep = ber_count(o.symbols, o.reference, constellation)
        for i, (errs, bits) in enumerate(rep.per_lane):
            rows.append({
                "power_dbm": float(power_dbm),
                "equalizer": o.label,
                "channel": int(o.channels[i]),
                "pol": "xy"[o.pols[i]],
                "ber": errs / bits,
                "evm_db": evm_db(o.symbols[i], o.reference[i]),
                "n_bits": int(bits),
            })
    return rows


def central_ber(outs, constellation) -> dict:
    """Pooled (both polarizations) central-channel BER and error counts per equalizer."""
    res = {}
    for o in outs:
        sel = [i for i, c in enumerate(o.channels) if c == 0]
        rep = ber_count(o.symbols[sel], o.reference[sel], constellation)
        res[o.label] = (rep.ber, rep.bit_errors, rep.bits)
    return res
