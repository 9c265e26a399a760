"""Command-line entry point.

Verbs: ``simulate``, ``train``, ``evaluate``, ``sweep``, ``complexity``,
``align``, ``import``. Global flags: ``--config``, ``--seed``, ``--out``,
``--preset``, ``--jobs``.

Exit codes: 0 success, 2 configuration error, 3 numeric failure,
4 parse error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from ..analysis import ber_count, evm_db, shift_lanes
from ..dsp import StepSizeError
from ..fiber import PropagationError
from ..rnn import (
    AlignmentError,
    DivergenceError,
    WindowSpec,
    infer_symbols,
    load_model,
    make_windows,
    save_model,
)
from ..sigkit import constellation_by_name
from ..transmitter import ConfigurationError
from .align import JointRnnEvaluator, XpmSurrogate
from .capture import CaptureParseError, read_capture, write_capture
from .config import ExperimentConfig, reference_power
from .pipeline import Splits, run_bivrnn, simulate
from .runners import RunManifest, complexity_summary, run_align, run_complexity, run_sweep, write_csv

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_PARSE = 0, 2, 3, 4

log = logging.getLogger("wdmlab")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _global_flags(p):
    p.add_argument("--config", help="experiment JSON (schema_version 1)")
    p.add_argument("--preset", choices=("desk", "paper"), help="base preset (default desk)")
    p.add_argument("--seed", type=int, help="override the run seed")
    p.add_argument("--out", default="out", help="output directory (default ./out)")
    p.add_argument("--jobs", type=int, default=1, help="worker processes/threads")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="wdmlab", description=__doc__.split("\n\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="verb", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="propagate and write rx/tx symbol captures")
    _global_flags(p)
    p.add_argument("--power", type=float, action="append",
                   help="launch power per channel [dBm]; repeatable (default: sweep powers)")

    p = sub.add_parser("train", help="train a bi-VRNN and save a checkpoint")
    _global_flags(p)
    p.add_argument("--power", type=float, help="launch power [dBm] (default: sweep.reference_dbm)")
    p.add_argument("--epochs", type=int, help="override rnn.epochs")
    p.add_argument("--m", type=int, default=1, help="jointly equalized channels")
    p.add_argument("--H", type=int, default=16, help="hidden units per direction")

    p = sub.add_parser("evaluate", help="BER of a checkpoint on rx/tx captures")
    _global_flags(p)
    p.add_argument("--model", required=True)
    p.add_argument("--rx", required=True, help="received capture (model input lanes)")
    p.add_argument("--tx", required=True, help="transmitted capture (reference lanes)")
    p.add_argument("--edge", type=int, default=5, help="discarded outputs per word edge")

    p = sub.add_parser("sweep", help="BER versus launch power for every equalizer")
    _global_flags(p)

    p = sub.add_parser("complexity", help="multiplications per detected symbol tables")
    _global_flags(p)
    p.add_argument("--h-min", type=int, default=12)
    p.add_argument("--h-max", type=int, default=24)

    p = sub.add_parser("align", help="brute-force inter-lane delay search")
    _global_flags(p)
    p.add_argument("--rx", help="received capture; simulate when omitted")
    p.add_argument("--tx", help="transmitted capture (reference for lanes A)")
    p.add_argument("--power", type=float, help="launch power when simulating")
    p.add_argument("--lanes-a", default=None, help="comma list of A lane indices")
    p.add_argument("--lanes-b", default=None, help="comma list of B lane indices")
    p.add_argument("--directions", default=None,
                   help="comma list of +1/-1 per B lane (surrogate lag side)")
    p.add_argument("--plant", type=int, default=0, help="delay B by this many symbols first")
    p.add_argument("--evaluator", choices=("surrogate", "rnn"), default="surrogate")
    p.add_argument("--max-shift", type=int, default=1000)
    p.add_argument("--threshold", type=float, default=0.05)

    p = sub.add_parser("import", help="validate a capture file and convert it to .npz")
    _global_flags(p)
    p.add_argument("capture")
    return parser


def load_config(args) -> ExperimentConfig:
    if args.config:
        cfg = ExperimentConfig.load(args.config, preset=args.preset)
    else:
        cfg = ExperimentConfig.preset(args.preset or "desk")
    if args.seed is not None:
        cfg = cfg.with_overrides(seed=args.seed)
    return cfg


def _ints(text):
    return [int(v) for v in text.split(",")] if text else None


def cmd_simulate(args):
    cfg = load_config(args)
    os.makedirs(args.out, exist_ok=True)
    powers = args.power or cfg["sweep"]["powers_dbm"]
    man = RunManifest("simulate", cfg.hash(), {"seed": cfg["seed"]})
    for p in powers:
        timings = {}
        sim = simulate(cfg, p, timings=timings)
        for kind, lanes in (("rx", sim.rx), ("tx", sim.tx)):
            path = os.path.join(args.out, f"{kind}_{p:g}dBm.csv")
            write_capture(path, lanes, cfg["tx"]["baud"], cfg["tx"]["constellation"])
            man.artifacts[f"{kind}_{p:g}"] = path
        man.timings[f"{p:g} dBm"] = timings
    man.write(args.out)
    print(f"wrote {2 * len(powers)} captures to {args.out}")


def cmd_train(args):
    cfg = load_config(args)
    if args.m > cfg["tx"]["n_channels"] or args.m % 2 == 0:
        raise ConfigurationError("--m must be odd and at most n_channels")
    os.makedirs(args.out, exist_ok=True)
    power = reference_power(cfg) if args.power is None else args.power
    timings = {}
    sim = simulate(cfg, power, timings=timings)
    model, hist, res, chans = run_bivrnn(sim, cfg, args.m, args.H, cfg["seed"], args.epochs)
    const = constellation_by_name(cfg["tx"]["constellation"])
    sym, ref, _ = res["central"]
    rep = ber_count(sym, ref, const)
    path = os.path.join(args.out, "model.npz")
    info = {"config_hash": cfg.hash(), "seed": cfg["seed"], "power_dbm": power,
            "channels": chans, "rnn": cfg["rnn"], "best_epoch": hist.best_epoch,
            "test_ber": rep.ber}
    save_model(path, model, info)
    rows = [{"epoch": i, "train_mse": t, "val_mse": hist.val_mse[i] if hist.val_mse else ""}
            for i, t in enumerate(hist.train_mse)]
    man = RunManifest("train", cfg.hash(), {"seed": cfg["seed"]}, timings)
    man.results_sha256["history.csv"] = write_csv(os.path.join(args.out, "history.csv"), rows,
                                                  ("epoch", "train_mse", "val_mse"))
    man.artifacts.update(model=path, history=os.path.join(args.out, "history.csv"))
    man.extra = info
    man.write(args.out)
    print(f"test BER {rep.ber:.4e} over {rep.bits} bits; checkpoint {path}")


def cmd_evaluate(args):
    model, info = load_model(args.model)
    rx, tx = read_capture(args.rx), read_capture(args.tx)
    if rx.lanes.shape[-1] != tx.lanes.shape[-1]:
        raise AlignmentError("rx and tx captures differ in length")
    if 2 * rx.n_lanes != model.F or 2 * tx.n_lanes != model.y:
        raise ConfigurationError(
            f"model expects {model.F // 2} input and {model.y // 2} output lanes, "
            f"captures have {rx.n_lanes} and {tx.n_lanes}")
    const = constellation_by_name(tx.constellation)
    data = make_windows(rx.lanes, WindowSpec(model.L, args.edge), tx.lanes)
    sym = infer_symbols(model, data)
    ref = tx.lanes[:, data.centers]
    rep = ber_count(sym, ref, const)
    os.makedirs(args.out, exist_ok=True)
    rows = [{"lane": i, "ber": e / b, "evm_db": evm_db(sym[i], ref[i]), "n_bits": b}
            for i, (e, b) in enumerate(rep.per_lane)]
    write_csv(os.path.join(args.out, "evaluate.csv"), rows, ("lane", "ber", "evm_db", "n_bits"))
    print(f"BER {rep.ber:.4e} over {rep.bits} bits")


def cmd_sweep(args):
    cfg = load_config(args)
    rows, man = run_sweep(cfg, args.out, jobs=args.jobs)
    print(f"{len(rows)} rows, {len(man.errors)} failed points; results in {args.out}")
    if man.errors and not rows:
        raise FloatingPointError(man.errors[0]["error"])


def cmd_complexity(args):
    recs, _ = run_complexity(range(args.h_min, args.h_max + 1), out_dir=args.out)
    summary = complexity_summary()
    with open(os.path.join(args.out, "complexity_summary.json"), "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    for r in recs:
        if not r["name"].startswith("sweep"):
            print(f"{r['name']:>8}: {r['mps']} mps")


def cmd_align(args):
    cfg = load_config(args)
    if args.rx:
        if not args.tx:
            raise ConfigurationError("--rx needs --tx")
        tx_cap = read_capture(args.tx)
        rx, tx = read_capture(args.rx).lanes, tx_cap.lanes
        n_pol = 2
        const = constellation_by_name(tx_cap.constellation)
    else:
        power = reference_power(cfg) if args.power is None else args.power
        sim = simulate(cfg, power)
        rx, tx, n_pol = sim.rx, sim.tx, sim.n_pol
        const = constellation_by_name(cfg["tx"]["constellation"])
    n_ch = rx.shape[0] // n_pol
    mid = n_ch // 2
    lanes_a = _ints(args.lanes_a) or [mid * n_pol + p for p in range(n_pol)]
    default_b = [c * n_pol + p for c in (mid - 1, mid + 1) for p in range(n_pol)] if n_ch >= 3 else []
    lanes_b = _ints(args.lanes_b) or default_b
    if not lanes_b:
        raise ConfigurationError("no B lanes: give --lanes-b")
    directions = _ints(args.directions) or [1] * (len(lanes_b) // 2) + [-1] * (len(lanes_b) - len(lanes_b) // 2)
    a = rx[lanes_a]
    b = shift_lanes(rx[lanes_b], -args.plant)
    sp = Splits.from_config(cfg) if not args.rx else None
    n = rx.shape[-1]
    train = sp.train if sp else slice(0, n // 2)
    test = sp.test if sp else slice(n // 2, n)
    if args.evaluator == "surrogate":
        ev = XpmSurrogate(tx[lanes_a], directions, train=train, test=test)
    else:
        ev = JointRnnEvaluator(tx[lanes_a], const, seed=cfg["seed"], train=train, test=test)
    res = run_align(a, b, ev, args.out, max_shift=args.max_shift, dip_threshold=args.threshold,
                    jobs=args.jobs, seeds={"seed": cfg["seed"], "plant": args.plant})
    print(f"{res.status}: best shift {res.best_shift} (dip depth {res.dip_depth:.3f})")


def cmd_import(args):
    cap = read_capture(args.capture)
    os.makedirs(args.out, exist_ok=True)
    stem = os.path.splitext(os.path.basename(args.capture))[0]
    path = os.path.join(args.out, f"{stem}.npz")
    np.savez(path, lanes=cap.lanes, baud=np.array(cap.baud), constellation=np.array(cap.constellation))
    print(f"{cap.n_lanes} lanes x {cap.lanes.shape[-1]} symbols, baud {cap.baud:g}, "
          f"{cap.constellation} -> {path}")


COMMANDS = {
    "simulate": cmd_simulate, "train": cmd_train, "evaluate": cmd_evaluate,
    "sweep": cmd_sweep, "complexity": cmd_complexity, "align": cmd_align, "import": cmd_import,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if getattr(args, "jobs", 1) < 1:
            raise ConfigurationError("--jobs must be at least 1")
        COMMANDS[args.verb](args)
    except (CaptureParseError, AlignmentError) as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (ConfigurationError, FileNotFoundError, KeyError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (PropagationError, DivergenceError, StepSizeError, FloatingPointError,
            np.linalg.LinAlgError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
