"""Experiment configuration (JSON, ``schema_version`` 1) and scale presets.

Document layout::

    {
      "schema_version": 1,
      "preset": "desk",
      "seed": 1,
      "tx":    {"n_channels": 3, "spacing_hz": 30e9, "baud": 16e9, "rolloff": 0.1,
                "constellation": "16QAM", "n_pol": 2, "filter_span": 32},
      "link":  {"alpha_db_km": 0.2, "beta2_ps2_km": -20, "gamma_w_km": 1.3,
                "span_km": 50, "n_spans": 8, "nf_db": 5, "wavelength_nm": 1550},
      "ssfm":  {"step_km": 0.5},
      "symbols": {"train": 30000, "val": 10000, "test": 91072},
      "sweep": {"powers_dbm": [-0.5, 1.5, 3.5], "reference_dbm": 1.5},
      "noiseless": false,
      "equalizers": [{"kind": "none"}, {"kind": "bivrnn", "m": 3, "H": 18}, ...],
      "rnn":   {"L": 51, "edge": 5, "batch_words": 16, "epochs": 2000, "lr": 3e-3}
    }

Equalizer kinds: ``none`` (FDE and ideal carrier sync only), ``linreg``
(``m``), ``bivrnn`` (``m``, ``H``, optional ``epochs``), ``dbp`` (``channels``,
``steps_per_span``, ``sps``, ``taps``).
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field

from ..transmitter import ConfigurationError

SCHEMA_VERSION = 1

EQUALIZER_KINDS = ("none", "linreg", "bivrnn", "dbp")

_DESK = {
    "schema_version": SCHEMA_VERSION,
    "preset": "desk",
    "seed": 1,
    "tx": {"n_channels": 3, "spacing_hz": 30e9, "baud": 16e9, "rolloff": 0.1,
           "constellation": "16QAM", "n_pol": 2, "filter_span": 32},
    "link": {"alpha_db_km": 0.2, "beta2_ps2_km": -20.0, "gamma_w_km": 1.3,
             "span_km": 50.0, "n_spans": 8, "nf_db": 5.0, "wavelength_nm": 1550.0},
    "ssfm": {"step_km": 0.5},
    "symbols": {"train": 30000, "val": 10000, "test": 91072},
    "sweep": {"powers_dbm": [-0.5, 1.5, 3.5], "reference_dbm": 1.5},
    "noiseless": False,
    "equalizers": [
        {"kind": "none"},
        {"kind": "linreg", "m": 1},
        {"kind": "bivrnn", "m": 1, "H": 16},
        {"kind": "bivrnn", "m": 3, "H": 48},
    ],
    "rnn": {"L": 51, "edge": 5, "batch_words": 16, "epochs": 2000, "lr": 3e-3,
            "beta1": 0.9, "beta2": 0.999, "eps": 1e-8},
}

_PAPER = {
    "schema_version": SCHEMA_VERSION,
    "preset": "paper",
    "seed": 1,
    "tx": {"n_channels": 9, "spacing_hz": 75e9, "baud": 64e9, "rolloff": 0.1,
           "constellation": "16QAM", "n_pol": 2, "filter_span": 32},
    "link": {"alpha_db_km": 0.2, "beta2_ps2_km": -20.0, "gamma_w_km": 1.3,
             "span_km": 50.0, "n_spans": 24, "nf_db": 5.0, "wavelength_nm": 1550.0},
    "ssfm": {"step_km": 0.1},
    "symbols": {"train": 100000, "val": 50000, "test": 100000},
    "sweep": {"powers_dbm": [-8.0, -7.0, -6.0, -5.0, -4.0, -3.0, -2.0, -1.0, 0.0]},
    "noiseless": False,
    "equalizers": [
        {"kind": "none"},
        {"kind": "linreg", "m": 1},
        {"kind": "bivrnn", "m": 1, "H": 16},
        {"kind": "bivrnn", "m": 3, "H": 18},
        {"kind": "bivrnn", "m": 5, "H": 20},
        {"kind": "dbp", "channels": 1, "steps_per_span": 20, "sps": 4, "taps": 21},
        {"kind": "dbp", "channels": 3, "steps_per_span": 20, "sps": 4, "taps": 21},
        {"kind": "dbp", "channels": 5, "steps_per_span": 20, "sps": 4, "taps": 21},
    ],
    "rnn": {"L": 51, "edge": 5, "batch_words": 512, "epochs": 2000, "lr": 1e-3,
            "beta1": 0.9, "beta2": 0.999, "eps": 1e-8},
}

PRESETS = {"desk": _DESK, "paper": _PAPER}


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


@dataclass
class ExperimentConfig:
    data: dict = field(default_factory=lambda: copy.deepcopy(_DESK))

    @classmethod
    def preset(cls, name="desk", **overrides) -> "ExperimentConfig":
        if name not in PRESETS:
            raise ConfigurationError(f"unknown preset {name!r}")
        cfg = cls(_merge(PRESETS[name], overrides))
        cfg.validate()
        return cfg

    @classmethod
    def from_dict(cls, doc: dict, preset=None) -> "ExperimentConfig":
        name = preset or doc.get("preset", "desk")
        if name not in PRESETS:
            raise ConfigurationError(f"unknown preset {name!r}")
        if doc.get("schema_version", SCHEMA_VERSION) != SCHEMA_VERSION:
            raise ConfigurationError(f"unsupported schema_version {doc.get('schema_version')}")
        merged = _merge(PRESETS[name], doc)
        merged["preset"] = name
        cfg = cls(merged)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path, preset=None) -> "ExperimentConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"{path}: invalid JSON: {exc}") from exc
        return cls.from_dict(doc, preset)

    def with_overrides(self, **overrides) -> "ExperimentConfig":
        cfg = ExperimentConfig(_merge(self.data, overrides))
        cfg.validate()
        return cfg

    def to_json(self) -> str:
        return json.dumps(self.data, sort_keys=True, indent=2)

    def hash(self) -> str:
        canon = json.dumps(self.data, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:16]

    def __getitem__(self, key):
        return self.data[key]

    @property
    def n_symbols(self) -> int:
        s = self.data["symbols"]
        return s["train"] + s["val"] + s["test"]

    def validate(self):
        d = self.data
        tx = d["tx"]
        n_ch = tx["n_channels"]
        if n_ch < 1 or n_ch % 2 == 0:
            raise ConfigurationError("tx.n_channels must be odd")
        if tx["n_pol"] not in (1, 2):
            raise ConfigurationError("tx.n_pol must be 1 or 2")
        for name in ("train", "val", "test"):
            if d["symbols"][name] <= 0:
                raise ConfigurationError(f"symbols.{name} must be positive")
        if not d["sweep"]["powers_dbm"]:
            raise ConfigurationError("sweep.powers_dbm is empty")
        for eq in d["equalizers"]:
            kind = eq.get("kind")
            if kind not in EQUALIZER_KINDS:
                raise ConfigurationError(f"unknown equalizer kind {kind!r}")
            m = eq.get("m", eq.get("channels", 1))
            if m % 2 == 0 or m > n_ch:
                raise ConfigurationError(f"{kind}: channel count {m} must be odd and <= {n_ch}")
        if d["rnn"]["L"] % 2 == 0:
            raise ConfigurationError("rnn.L must be odd")


def reference_power(cfg: ExperimentConfig) -> float:
    """Single-point launch power: ``sweep.reference_dbm``, else the first sweep power."""
    sw = cfg["sweep"]
    return float(sw.get("reference_dbm", sw["powers_dbm"][0]))


def equalizer_label(eq: dict) -> str:
    kind = eq["kind"]
    if kind == "none":
        return "none"
    if kind == "dbp":
        return f"dbp-{eq.get('channels', 1)}ch"
    return f"{kind}-{eq.get('m', 1)}ch"
