"""Uniformly sampled dynamometer records and their CSV format.

The CSV header is ``time_s,torque_nm,velocity_rad_s`` followed by any of
``current_a``, ``voltage_v`` and ``command``. Metadata travels in leading
``# key=value`` comment lines.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional

import numpy as np

from .errors import DomainError, FormatError

COLUMNS = {
    "torque": "torque_nm",
    "velocity": "velocity_rad_s",
    "current": "current_a",
    "voltage": "voltage_v",
    "command": "command",
}
REQUIRED = ("torque", "velocity")
MAX_JITTER = 0.01  # fraction of the sample period


@dataclass
class TimeSeries:
    sample_rate: float
    channels: Dict[str, np.ndarray]
    rotor_installed: Optional[bool] = None
    ratio: Optional[float] = None
    meta: Dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if not (math.isfinite(self.sample_rate) and self.sample_rate > 0):
            raise DomainError(f"sample_rate must be positive, got {self.sample_rate!r}")
        chans = {k: np.asarray(v, dtype=float) for k, v in self.channels.items()}
        lengths = {len(v) for v in chans.values()}
        if len(lengths) != 1:
            raise DomainError(f"channels differ in length: { {k: len(v) for k, v in chans.items()} }")
        if lengths.pop() < 2:
            raise DomainError("time series needs at least two samples")
        for k, v in chans.items():
            if v.ndim != 1:
                raise DomainError(f"channel {k!r} must be one-dimensional")
            if not np.all(np.isfinite(v)):
                raise FormatError(f"channel {k!r} contains NaN or Inf samples")
        self.channels = chans

    def __getitem__(self, name):
        try:
            return self.channels[name]
        except KeyError:
            raise KeyError(f"time series has no {name!r} channel (have {sorted(self.channels)})") from None

    def __contains__(self, name):
        return name in self.channels

    def __len__(self):
        return len(next(iter(self.channels.values())))

    @property
    def dt(self):
        return 1.0 / self.sample_rate

    @property
    def duration(self):
        return len(self) / self.sample_rate

    @property
    def time(self):
        return np.arange(len(self)) / self.sample_rate


def _fmt(x):
    return repr(float(x))


def write_csv(ts, path):
    """Write ``ts`` to ``path`` (or a text stream). Output is byte-stable."""
    names = [c for c in COLUMNS if c in ts.channels]
    for req in REQUIRED:
        if req not in ts.channels:
            raise DomainError(f"cannot write time series without a {req!r} channel")
    lines = [f"# sample_rate_hz={_fmt(ts.sample_rate)}"]
    if ts.rotor_installed is not None:
        lines.append(f"# rotor_installed={'true' if ts.rotor_installed else 'false'}")
    if ts.ratio is not None:
        lines.append(f"# ratio={_fmt(ts.ratio)}")
    for k, v in sorted(ts.meta.items()):
        lines.append(f"# {k}={v}")
    lines.append(",".join(["time_s"] + [COLUMNS[c] for c in names]))
    t = ts.time
    cols = [ts.channels[c] for c in names]
    for i in range(len(ts)):
        lines.append(",".join([_fmt(t[i])] + [_fmt(c[i]) for c in cols]))
    text = "\n".join(lines) + "\n"
    if hasattr(path, "write"):
        path.write(text)
    else:
        Path(path).write_text(text)


def read_csv(path):
    """Parse a time-series CSV, validating header, finiteness and sample spacing."""
    try:
        text = path.read() if hasattr(path, "read") else Path(path).read_text()
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc
    meta = {}
    body = []
    for line in io.StringIO(text):
        s = line.strip()
        if not s:
            continue
        if s.startswith("#"):
            key, sep, val = s[1:].partition("=")
            if sep:
                meta[key.strip()] = val.strip()
            continue
        body.append(s)
    if not body:
        raise FormatError(f"{path}: no header row")
    header = [h.strip() for h in body[0].split(",")]
    if header[:3] != ["time_s", "torque_nm", "velocity_rad_s"]:
        raise FormatError(f"{path}: header must start with time_s,torque_nm,velocity_rad_s; got {body[0]!r}")
    by_column = {v: k for k, v in COLUMNS.items()}
    for h in header[3:]:
        if h not in by_column:
            raise FormatError(f"{path}: unknown column {h!r}")
    rows = []
    for lineno, s in enumerate(body[1:], start=2):
        parts = s.split(",")
        if len(parts) != len(header):
            raise FormatError(f"{path}: row {lineno} has {len(parts)} fields, expected {len(header)}")
        try:
            rows.append([float(p) for p in parts])
        except ValueError:
            raise FormatError(f"{path}: row {lineno} is not numeric: {s!r}") from None
    data = np.array(rows, dtype=float).reshape(-1, len(header))
    if len(data) < 2:
        raise FormatError(f"{path}: need at least two samples")
    if not np.all(np.isfinite(data)):
        bad = int(np.argmax(~np.all(np.isfinite(data), axis=1))) + 2
        raise FormatError(f"{path}: non-finite value (NaN/Inf) in data row {bad}")

    t = data[:, 0]
    steps = np.diff(t)
    period = float(np.median(steps))
    if period <= 0:
        raise FormatError(f"{path}: timestamps must increase")
    # jitter is measured against the ideal grid, not sample-to-sample
    grid = t[0] + period * np.arange(len(t))
    if "sample_rate_hz" in meta:
        period = 1.0 / float(meta["sample_rate_hz"])
        grid = t[0] + period * np.arange(len(t))
    jitter = float(np.max(np.abs(t - grid)))
    if jitter > MAX_JITTER * period:
        raise FormatError(
            f"{path}: timestamps are not uniform (max deviation {jitter:.3g} s, "
            f"{jitter / period:.1%} of the period); resample to a uniform grid first"
        )
    chans = {by_column[h]: data[:, i] for i, h in enumerate(header) if i > 0}
    rotor = meta.pop("rotor_installed", None)
    ratio = meta.pop("ratio", None)
    meta.pop("sample_rate_hz", None)
    return TimeSeries(
        sample_rate=1.0 / period,
        channels=chans,
        rotor_installed=None if rotor is None else rotor.lower() in ("1", "true", "yes"),
        ratio=None if ratio is None else float(ratio),
        meta=meta,
    )
