"""Experiment orchestration: configs, the simulation pipeline, runners,
capture files and the ``wdmlab`` command line."""

from .capture import Capture, CaptureParseError, read_capture, write_capture
from .config import PRESETS, SCHEMA_VERSION, ExperimentConfig, equalizer_label
from .runners import RunManifest, run_align, run_complexity, run_point, run_sweep

__all__ = [
    "Capture", "CaptureParseError", "read_capture", "write_capture",
    "PRESETS", "SCHEMA_VERSION", "ExperimentConfig", "equalizer_label",
    "RunManifest", "run_align", "run_complexity", "run_point", "run_sweep",
]
