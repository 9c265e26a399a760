"""Symbol capture files.

Layout (UTF-8 text)::

    #wdm-capture v1; lanes=<n>; baud=<Hz>; constellation=<name>
    index,lane0_I,lane0_Q,lane1_I,lane1_Q,...
    0,<float>,<float>,...

Floats are written with ``repr`` so a round trip is bit-exact. A lane may
be shorter than the others only if its trailing cells are left empty; such
a capture is rejected with :class:`~wdmlab.rnn.AlignmentError` because
every lane must cover the same symbol indices.
"""

from __future__ import annotations

import csv
import io
import math
import os
import re
from dataclasses import dataclass

import numpy as np

from ..rnn import AlignmentError

MAGIC = "#wdm-capture v1"

_HEADER_RE = re.compile(
    r"^#wdm-capture v1; lanes=(?P<lanes>[^;]*); baud=(?P<baud>[^;]*); constellation=(?P<const>[^;]*)$"
)


class CaptureParseError(ValueError):
    """Malformed capture file; ``line`` is 1-based."""

    def __init__(self, message, line=None, field=None):
        where = f"line {line}" if line is not None else "file"
        if field:
            where += f", field {field!r}"
        super().__init__(f"{where}: {message}")
        self.line = line
        self.field = field


@dataclass
class Capture:
    lanes: np.ndarray  # complex (n_lanes, n)
    baud: float
    constellation: str

    @property
    def n_lanes(self) -> int:
        return self.lanes.shape[0]


def _fmt(x: float) -> str:
    return repr(float(x))


def write_capture(path, lanes, baud: float, constellation: str):
    z = np.atleast_2d(np.asarray(lanes, dtype=complex))
    if ";" in constellation or "\n" in constellation:
        raise ValueError("constellation name may not contain ';' or newlines")
    cols = ["index"] + [f"lane{i}_{c}" for i in range(z.shape[0]) for c in "IQ"]
    buf = io.StringIO()
    buf.write(f"{MAGIC}; lanes={z.shape[0]}; baud={_fmt(baud)}; constellation={constellation}\n")
    buf.write(",".join(cols) + "\n")
    inter = np.empty((z.shape[1], 2 * z.shape[0]))
    inter[:, 0::2] = z.real.T
    inter[:, 1::2] = z.imag.T
    for i, row in enumerate(inter):
        buf.write(str(i) + "," + ",".join(_fmt(v) for v in row) + "\n")
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8", newline="") as fh:
        fh.write(buf.getvalue())
    os.replace(tmp, path)


def _parse_header(line: str):
    m = _HEADER_RE.match(line.rstrip("\r\n"))
    if not line.startswith(MAGIC):
        raise CaptureParseError("missing '#wdm-capture v1' header", 1)
    if m is None:
        raise CaptureParseError("header must read '; lanes=<n>; baud=<Hz>; constellation=<name>'", 1)
    try:
        lanes = int(m["lanes"])
    except ValueError:
        raise CaptureParseError(f"not an integer: {m['lanes']!r}", 1, "lanes") from None
    if lanes < 1:
        raise CaptureParseError("must be at least 1", 1, "lanes")
    try:
        baud = float(m["baud"])
    except ValueError:
        raise CaptureParseError(f"not a number: {m['baud']!r}", 1, "baud") from None
    if not math.isfinite(baud) or baud <= 0:
        raise CaptureParseError("must be positive", 1, "baud")
    if not m["const"]:
        raise CaptureParseError("empty", 1, "constellation")
    return lanes, baud, m["const"]


def read_capture(path) -> Capture:
    """Parse a capture file; no partial result is returned on error."""
    with open(path, encoding="utf-8", newline="") as fh:
        text = fh.read()
    return parse_capture(text)


def parse_capture(text: str) -> Capture:
    lines = text.splitlines()
    if not lines:
        raise CaptureParseError("empty file")
    n_lanes, baud, const = _parse_header(lines[0])
    cols = ["index"] + [f"lane{i}_{c}" for i in range(n_lanes) for c in "IQ"]
    if len(lines) < 2:
        raise CaptureParseError("missing column header", 2)
    if lines[1].split(",") != cols:
        raise CaptureParseError(f"column header must be {','.join(cols)}", 2)
    if not text.endswith("\n"):
        raise CaptureParseError("file truncated (no final newline)", len(lines))
    n = len(lines) - 2
    data = np.empty((n, 2 * n_lanes))
    lengths = np.full(n_lanes, -1)
    for r, row in enumerate(csv.reader(lines[2:])):
        lineno = r + 3
        if len(row) != len(cols):
            raise CaptureParseError(f"expected {len(cols)} fields, got {len(row)}", lineno)
        if row[0].strip() != str(r):
            raise CaptureParseError(f"expected index {r}, got {row[0]!r}", lineno, "index")
        for j, cell in enumerate(row[1:]):
            lane = j // 2
            if cell == "":
                if lengths[lane] < 0:
                    lengths[lane] = r
                data[r, j] = np.nan
                continue
            if lengths[lane] >= 0:
                raise CaptureParseError("value after the lane ended", lineno, cols[j + 1])
            try:
                data[r, j] = float(cell)
            except ValueError:
                raise CaptureParseError(f"not a number: {cell!r}", lineno, cols[j + 1]) from None
    lengths[lengths < 0] = n
    if len(set(lengths.tolist())) > 1:
        detail = ", ".join(f"lane{i}={k}" for i, k in enumerate(lengths))
        raise AlignmentError(f"capture lanes differ in length ({detail})")
    lanes = data[:, 0::2].T + 1j * data[:, 1::2].T
    return Capture(np.ascontiguousarray(lanes), baud, const)
