"""Error counting, multiplication-count calculators and the brute-force
inter-lane time alignment search."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from decimal import ROUND_HALF_UP, Decimal

import numpy as np
from scipy.special import erfc

from .sigkit import Constellation, nearest_labels


class OutOfRangeError(ValueError):
    """A BER curve does not cross the requested target."""


# --- error counting -------------------------------------------------------

@dataclass
class BerReport:
    bit_errors: int
    bits: int
    per_lane: list = field(default_factory=list)

    def __post_init__(self):
        if self.bits <= 0:
            raise ValueError("no bits counted")

    @property
    def ber(self) -> float:
        return self.bit_errors / self.bits


def _popcount(a: np.ndarray) -> np.ndarray:
    a = a.astype(np.uint64)
    count = np.zeros(a.shape, dtype=np.int64)
    while np.any(a):
        count += (a & 1).astype(np.int64)
        a >>= 1
    return count


def ber_count(equalized, reference, constellation: Constellation) -> BerReport:
    """Hard-decide both streams and count differing bits, per lane and in total."""
    eq = np.atleast_2d(np.asarray(equalized))
    ref = np.atleast_2d(np.asarray(reference))
    if eq.shape != ref.shape:
        raise ValueError(f"length mismatch: {eq.shape} vs {ref.shape}")
    k = constellation.bits_per_symbol
    per_lane = []
    for a, b in zip(eq, ref):
        la = nearest_labels(a, constellation)
        lb = nearest_labels(b, constellation)
        errs = int(_popcount(la ^ lb).sum())
        per_lane.append((errs, a.size * k))
    total = sum(e for e, _ in per_lane)
    bits = sum(n for _, n in per_lane)
    return BerReport(total, bits, per_lane)


def evm_db(received, reference) -> float:
    """RMS error vector relative to the reference RMS, in dB."""
    r = np.asarray(received)
    s = np.asarray(reference)
    return float(10 * np.log10(np.mean(np.abs(r - s) ** 2) / np.mean(np.abs(s) ** 2)))


def q_function(x):
    return 0.5 * erfc(np.asarray(x) / np.sqrt(2))


def qpsk_ber(ebn0_db):
    """Theoretical Gray QPSK BER in AWGN."""
    return q_function(np.sqrt(2 * 10 ** (np.asarray(ebn0_db) / 10)))


# --- multiplication counts ------------------------------------------------

def round_half_up(x) -> int:
    return int(Decimal(repr(float(x))).quantize(Decimal(1), rounding=ROUND_HALF_UP))


@dataclass(frozen=True)
class ComplexityInputs:
    F: int = 12
    H: int = 18
    y: int = 12
    L: int = 51
    L_eff: int = 41
    N_StpSp: int = 20
    N_spans: int = 2
    N: int = 256
    N_d: int = 30
    n_s: int = 2
    M: int = 4


@dataclass
class ComplexityReport:
    name: str
    inputs: dict
    total: float
    per_symbol: float
    mps: int

    def to_record(self) -> dict:
        rec = {"name": self.name}
        rec.update(self.inputs)
        rec.update(total=self.total, per_symbol=self.per_symbol, mps=self.mps)
        return rec


def bivrnn_mults(inp: ComplexityInputs) -> ComplexityReport:
    """Inference multiplications of one word and per detected symbol.

    ``2(FH + H^2)L`` for the two recurrences plus ``2HLy`` for the heads; a
    word yields ``L_eff * y/2`` detected symbols.
    """
    if inp.L_eff <= 0:
        raise ValueError("L_eff must be positive")
    F, H, y, L = inp.F, inp.H, inp.y, inp.L
    total = 2 * (F * H + H * H) * L + 2 * H * L * y
    per = total / (inp.L_eff * (y / 2))
    keys = ("F", "H", "y", "L", "L_eff")
    return ComplexityReport("bivrnn", {k: getattr(inp, k) for k in keys}, total, per,
                            round_half_up(per))


def _fft_block_cost(N, N_d, n_s):
    if N_d >= N + 1:
        raise ValueError("N_d must be smaller than N + 1")
    return N * (math.log2(N) + 1) * n_s / (N - N_d + 1)


def dbp_complexity(inp: ComplexityInputs) -> ComplexityReport:
    """Real multiplications of overlap-save split-step DBP.

    ``per_bit = 4 N_StpSp N_spans [N(log2 N + 1) n_s / ((N - N_d + 1) log2 M) + n_s]``;
    ``per_symbol = per_bit * log2 M``. ``total`` holds the per-bit figure.
    """
    bits = math.log2(inp.M)
    per_bit = 4 * inp.N_StpSp * inp.N_spans * (_fft_block_cost(inp.N, inp.N_d, inp.n_s) / bits + inp.n_s)
    keys = ("N_StpSp", "N_spans", "N", "N_d", "n_s", "M")
    per_sym = per_bit * bits
    return ComplexityReport("dbp", {k: getattr(inp, k) for k in keys}, per_bit, per_sym,
                            round_half_up(per_sym))


def fde_complexity(inp: ComplexityInputs) -> ComplexityReport:
    """``4 N(log2 N + 1) n_s / (N - N_d + 1)`` real multiplications per symbol."""
    per = 4 * _fft_block_cost(inp.N, inp.N_d, inp.n_s)
    keys = ("N", "N_d", "n_s")
    return ComplexityReport("fde", {k: getattr(inp, k) for k in keys}, per, per, round_half_up(per))


def reduction_percent(a, b) -> float:
    if a <= 0:
        raise ValueError("reference complexity must be positive")
    return 100.0 * (a - b) / a


def channel_inputs(m, H, n_pol=1, L=51, L_eff=41) -> ComplexityInputs:
    """Inputs for ``m`` jointly equalized channels of ``n_pol`` polarizations."""
    f = 2 * n_pol * m
    return ComplexityInputs(F=f, H=H, y=f, L=L, L_eff=L_eff)


# --- OSNR gain ------------------------------------------------------------

def _crossing(curve, target):
    pts = sorted((float(x), float(b)) for x, b in curve)
    lt = math.log10(target)
    for (x0, b0), (x1, b1) in zip(pts, pts[1:]):
        l0, l1 = math.log10(b0), math.log10(b1)
        if (l0 - lt) * (l1 - lt) <= 0 and l0 != l1:
            return x0 + (lt - l0) * (x1 - x0) / (l1 - l0)
        if l0 == lt:
            return x0
    if pts and math.log10(pts[-1][1]) == lt:
        return pts[-1][0]
    raise OutOfRangeError(f"curve does not cross BER {target:g}")


def osnr_gain_at_ber(curve_a, curve_b, target_ber) -> float:
    """Horizontal distance ``x_a - x_b`` where the curves cross ``target_ber``.

    Curves are sequences of ``(x, ber)``; log10(BER) is interpolated linearly
    in ``x``.
    """
    return _crossing(curve_a, target_ber) - _crossing(curve_b, target_ber)


# --- time alignment -------------------------------------------------------

@dataclass
class AlignmentResult:
    best_shift_pair: tuple
    ber_map: dict
    dip_depth: float
    found: bool

    @property
    def status(self) -> str:
        return "aligned" if self.found else "no alignment found"

    @property
    def best_shift(self) -> int:
        return self.best_shift_pair[1] - self.best_shift_pair[0]

    def to_dict(self):
        d = asdict(self)
        d["ber_map"] = {str(k): v for k, v in sorted(self.ber_map.items())}
        d["status"] = self.status
        return d


def shift_lanes(lanes, shift: int) -> np.ndarray:
    """Circularly advance ``lanes`` so that ``out[..., t] = lanes[..., t + shift]``."""
    return np.roll(np.asarray(lanes), -int(shift), axis=-1)


def align_search(lane_a, lane_b, evaluator, coarse_step=100, fine_steps=(10, 1),
                 max_shift=None, dip_threshold=0.05, jobs=1) -> AlignmentResult:
    """Coarse-to-fine brute-force search of the relative delay of two lane sets.

    ``evaluator(lane_a, shifted_b)`` returns a BER-like score (lower is
    better). Lane set B is advanced by every candidate shift on a coarse grid
    of ``coarse_step`` symbols, then on progressively finer grids around the
    running minimum. If the best score is not at least ``dip_threshold``
    (relative) below the median coarse score, the landscape is treated as flat.
    Ties resolve to the smallest shift.
    """
    a = np.atleast_2d(lane_a)
    b = np.atleast_2d(lane_b)
    n = b.shape[-1]
    if max_shift is None:
        max_shift = (n // 2) // coarse_step * coarse_step
    scores: dict[int, float] = {}

    def run(shifts):
        todo = sorted({int(s) for s in shifts if -max_shift <= s <= max_shift} - scores.keys())
        if jobs > 1:
            with ThreadPoolExecutor(jobs) as pool:
                vals = list(pool.map(lambda s: evaluator(a, shift_lanes(b, s)), todo))
        else:
            vals = [evaluator(a, shift_lanes(b, s)) for s in todo]
        scores.update(zip(todo, (float(v) for v in vals)))

    def best_of(shifts):
        return min(shifts, key=lambda s: (scores[s], s))

    coarse = list(range(-max_shift, max_shift + 1, coarse_step))
    run(coarse)
    best = best_of(coarse)
    span = coarse_step
    for step in fine_steps:
        grid = [s for s in range(best - span, best + span + 1, step) if -max_shift <= s <= max_shift]
        run(grid)
        best = best_of(grid)
        span = step
    background = float(np.median([scores[s] for s in coarse]))
    depth = (background - scores[best]) / background if background > 0 else 0.0
    return AlignmentResult((0, best), scores, depth, depth >= dip_threshold)
