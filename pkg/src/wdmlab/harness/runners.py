"""Experiment runners: launch-power sweeps, complexity tables and alignment.

Every runner returns plain records and, when given an output directory,
writes UTF-8 CSV files plus a JSON :class:`RunManifest`. Result CSVs carry
no timestamps, so identical configs and seeds give identical bytes; timings
live only in the manifest.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import os
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from importlib.metadata import PackageNotFoundError, version

import numpy as np

from ..analysis import (
    AlignmentResult,
    ComplexityInputs,
    align_search,
    bivrnn_mults,
    channel_inputs,
    dbp_complexity,
    fde_complexity,
    reduction_percent,
)
from ..sigkit import constellation_by_name
from .config import ExperimentConfig
from .pipeline import run_equalizers, score_rows, simulate

log = logging.getLogger(__name__)

SWEEP_COLUMNS = ("power_dbm", "equalizer", "channel", "pol", "ber", "evm_db", "n_bits")


def package_version() -> str:
    try:
        return version("artifact")
    except PackageNotFoundError:
        return "0+unknown"


@dataclass
class RunManifest:
    command: str
    config_hash: str
    seeds: dict
    timings: dict = field(default_factory=dict)
    artifacts: dict = field(default_factory=dict)
    errors: list = field(default_factory=list)
    results_sha256: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)
    version: str = field(default_factory=package_version)
    created: str = field(default_factory=lambda: time.strftime("%Y-%m-%dT%H:%M:%S%z"))

    def write(self, out_dir, name="manifest.json"):
        path = os.path.join(out_dir, name)
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(asdict(self), fh, indent=2, sort_keys=True, default=_json_default)
            fh.write("\n")
        return path


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def _cell(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def csv_text(rows, columns) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_cell(r[c]) for c in columns])
    return buf.getvalue()


def write_csv(path, rows, columns) -> str:
    """Write rows and return the SHA-256 of the bytes written."""
    text = csv_text(rows, columns)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    return hashlib.sha256(text.encode()).hexdigest()


# --- sweep ----------------------------------------------------------------

def run_point(cfg: ExperimentConfig, power_dbm: float, seed: int | None = None,
              keep_outputs=False):
    """Simulate, receive and equalize one launch power.

    Returns ``(rows, timings, outputs)``; ``outputs`` is the list of
    :class:`~wdmlab.harness.pipeline.EqualizerOutput` when ``keep_outputs``.
    """
    seed = cfg["seed"] if seed is None else seed
    timings = {}
    need_field = any(e["kind"] == "dbp" for e in cfg["equalizers"])
    sim = simulate(cfg, power_dbm, seed, keep_field=need_field, timings=timings)
    outs = run_equalizers(sim, cfg, seed, timings=timings)
    const = constellation_by_name(cfg["tx"]["constellation"])
    rows = score_rows(power_dbm, outs, const)
    return rows, timings, (outs if keep_outputs else None)


def _point_job(args):
    doc, power, seed = args
    cfg = ExperimentConfig(doc)
    try:
        rows, timings, _ = run_point(cfg, power, seed)
        return power, rows, timings, None
    except Exception as exc:  # recorded in the manifest; other points continue
        return power, [], {}, {"power_dbm": power, "error": f"{type(exc).__name__}: {exc}",
                                "trace": traceback.format_exc(limit=3)}


def run_sweep(cfg: ExperimentConfig, out_dir=None, jobs: int = 1):
    """BER table over the configured launch powers and equalizers.

    All power points share the run seed (paired comparison). Points run in a
    process pool when ``jobs > 1``; rows are collected in configuration order
    either way. Returns ``(rows, manifest)``.
    """
    powers = list(cfg["sweep"]["powers_dbm"])
    seed = cfg["seed"]
    jobs_args = [(cfg.data, float(p), seed) for p in powers]
    t0 = time.perf_counter()
    if jobs > 1 and len(powers) > 1:
        with ProcessPoolExecutor(min(jobs, len(powers))) as pool:
            results = list(pool.map(_point_job, jobs_args))
    else:
        results = [_point_job(a) for a in jobs_args]
    rows, timings, errors = [], {}, []
    for power, r, t, err in results:
        rows.extend(r)
        timings[f"{power:g} dBm"] = t
        if err:
            errors.append(err)
            log.error("sweep point %g dBm failed: %s", power, err["error"])
    timings["total"] = time.perf_counter() - t0
    man = RunManifest("sweep", cfg.hash(), {"seed": seed}, timings, errors=errors)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        p = os.path.join(out_dir, "sweep.csv")
        man.results_sha256["sweep.csv"] = write_csv(p, rows, SWEEP_COLUMNS)
        man.artifacts["sweep"] = p
        central = central_curve(rows)
        p = os.path.join(out_dir, "central_ber.csv")
        man.results_sha256["central_ber.csv"] = write_csv(p, central["rows"], central["columns"])
        man.artifacts["central_ber"] = p
        man.write(out_dir)
    return rows, man


def central_curve(rows):
    """Pivot of the central-channel BER (both polarizations pooled) by power.

    Columns: ``power_dbm`` then one column per equalizer, in first-seen order.
    """
    labels, acc = [], {}
    for r in rows:
        if r["channel"] != 0:
            continue
        if r["equalizer"] not in labels:
            labels.append(r["equalizer"])
        e, b = acc.get((r["power_dbm"], r["equalizer"]), (0.0, 0))
        acc[(r["power_dbm"], r["equalizer"])] = (e + r["ber"] * r["n_bits"], b + r["n_bits"])
    powers = sorted({p for p, _ in acc})
    out = []
    for p in powers:
        rec = {"power_dbm": p}
        for lab in labels:
            e, b = acc.get((p, lab), (0.0, 0))
            rec[lab] = round(e) / b if b else float("nan")
        out.append(rec)
    return {"columns": ["power_dbm"] + labels, "rows": out}


# --- complexity -----------------------------------------------------------

COMPLEXITY_COLUMNS = ("name", "m", "n_pol", "F", "H", "y", "L", "L_eff", "total", "per_symbol", "mps")

# the multiplication figures quoted for the simulated (dual-pol) and the
# experimental (single-pol) systems
REFERENCE_CASES = (
    ("sim-1ch", 1, 2, 16),
    ("sim-3ch", 3, 2, 18),
    ("sim-5ch", 5, 2, 20),
    ("exp-1ch", 1, 1, 16),
    ("exp-3ch", 3, 1, 18),
)


def run_complexity(h_values=range(12, 25), channel_counts=(1, 3, 5), n_pol=2, L=51, L_eff=41,
                   out_dir=None):
    """Multiplications per detected symbol for the bi-VRNN, DBP and FDE.

    Returns ``(records, curve)``: ``records`` are flat rows (reference cases,
    the H sweep, FDE and DBP); ``curve`` has one row per H with an
    ``mps_<m>ch`` column per channel count (the hidden-unit plot).
    """
    recs = []

    def add(name, m, pol, H):
        rep = bivrnn_mults(channel_inputs(m, H, pol, L, L_eff))
        rec = {"name": name, "m": m, "n_pol": pol, **rep.inputs,
               "total": rep.total, "per_symbol": rep.per_symbol, "mps": rep.mps}
        recs.append(rec)
        return rep

    for name, m, pol, H in REFERENCE_CASES:
        add(name, m, pol, H)
    curve = []
    for H in h_values:
        row = {"H": H}
        for m in channel_counts:
            row[f"mps_{m}ch"] = add(f"sweep-{m}ch", m, n_pol, H).mps
        curve.append(row)
    base = ComplexityInputs()
    for rep in (fde_complexity(base), dbp_complexity(base)):
        recs.append({"name": rep.name, "m": 1, "n_pol": base.n_s, "F": "", "H": "", "y": "",
                     "L": "", "L_eff": "", "total": rep.total, "per_symbol": rep.per_symbol,
                     "mps": rep.mps})
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        write_csv(os.path.join(out_dir, "complexity.csv"), recs, COMPLEXITY_COLUMNS)
        cols = ["H"] + [f"mps_{m}ch" for m in channel_counts]
        write_csv(os.path.join(out_dir, "complexity_vs_h.csv"), curve, cols)
    return recs, curve


def complexity_summary() -> dict:
    """The headline comparisons: joint 3-channel RNN plus FDE against DBP figures."""
    three = bivrnn_mults(channel_inputs(3, 18, 1)).mps
    fde = fde_complexity(ComplexityInputs()).mps
    one = bivrnn_mults(channel_inputs(1, 22, 2)).mps
    five = bivrnn_mults(channel_inputs(5, 22, 2)).mps
    combined = three + fde
    return {
        "rnn3_plus_fde": combined,
        "reduction_vs_918": reduction_percent(918, combined),
        "reduction_vs_4528": reduction_percent(4528, combined),
        "reduction_1ch_vs_5ch_h22": reduction_percent(one, five),
    }


# --- alignment ------------------------------------------------------------

ALIGN_COLUMNS = ("shift", "score")


def run_align(lanes_a, lanes_b, evaluator, out_dir=None, coarse_step=100, fine_steps=(10, 1),
              max_shift=None, dip_threshold=0.05, jobs=1, seeds=None) -> AlignmentResult:
    """Brute-force relative-delay search; writes ``align.csv`` and a manifest."""
    t0 = time.perf_counter()
    res = align_search(lanes_a, lanes_b, evaluator, coarse_step, fine_steps, max_shift,
                       dip_threshold, jobs)
    elapsed = time.perf_counter() - t0
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        rows = [{"shift": s, "score": v} for s, v in sorted(res.ber_map.items())]
        p = os.path.join(out_dir, "align.csv")
        man = RunManifest("align", "", seeds or {}, {"search": elapsed})
        man.results_sha256["align.csv"] = write_csv(p, rows, ALIGN_COLUMNS)
        man.artifacts["align"] = p
        man.extra = {"status": res.status, "best_shift": res.best_shift,
                     "best_shift_pair": list(res.best_shift_pair), "dip_depth": res.dip_depth,
                     "evaluations": len(res.ber_map)}
        man.write(out_dir)
    return res
