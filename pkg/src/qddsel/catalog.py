"""Motor catalogs: unit-aware CSV/JSON ingestion, ranking and plot data.

Catalog columns carry an explicit unit suffix, e.g. ``j_m_kgm2`` or
``j_m_gcm2``; every value is converted to SI on load. An optional
``<column>_sigma`` column holds the 1-sigma uncertainty in the same unit.
Rows that violate record invariants are quarantined, not fatal.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from .errors import DomainError, FormatError, QddError, UnresolvedFieldError
from .motor_core import MotorRecord, metric_report

# field -> {unit suffix: factor to SI}; the first entry is the canonical one.
UNITS: Dict[str, Dict[str, float]] = {
    "r_phase": {"ohm": 1.0, "mohm": 1e-3},
    "l_eff": {"h": 1.0, "mh": 1e-3, "uh": 1e-6},
    "k_t": {"nm_a": 1.0},
    "k_b": {"vs_rad": 1.0, "v_krpm": 60.0 / (2 * math.pi * 1000.0)},
    "k_m": {"nm_sqrtw": 1.0},
    "j_m": {"kgm2": 1.0, "gcm2": 1e-7},
    "mass": {"kg": 1.0, "g": 1e-3},
    "gap_radius": {"m": 1.0, "mm": 1e-3},
    "length": {"m": 1.0, "mm": 1e-3},
    "r_th": {"c_w": 1.0, "k_w": 1.0},
}
CANONICAL = ["name", "winding"] + [f"{f}_{next(iter(u))}" for f, u in UNITS.items()]
PASSTHROUGH = {"name", "winding", "notes", "source"}

METRICS = ("s_m", "s_t", "m_s_m", "m_s_t", "k_ts")
# metrics where larger is better
_DESCENDING = {"k_ts"}


@dataclass
class Provenance:
    source: str
    row: int
    derived: Tuple[str, ...] = ()


@dataclass
class Quarantined:
    source: str
    row: int
    name: Optional[str]
    diagnostic: str


@dataclass
class Catalog:
    records: List[MotorRecord] = field(default_factory=list)
    provenance: Dict[str, Provenance] = field(default_factory=dict)
    quarantined: List[Quarantined] = field(default_factory=list)
    warnings: List[str] = field(default_factory=list)

    def __post_init__(self):
        names = [r.name for r in self.records]
        dup = sorted({n for n in names if names.count(n) > 1})
        if dup:
            raise FormatError(f"duplicate motor names in catalog: {', '.join(dup)}")

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    @property
    def names(self):
        return [r.name for r in self.records]

    def get(self, name):
        for r in self.records:
            if r.name == name:
                return r
        lowered = {r.name.lower(): r for r in self.records}
        if name.lower() in lowered:
            return lowered[name.lower()]
        raise KeyError(name)


def _parse_column(col):
    """Map a header cell to ``(field, factor, is_sigma)``; None for passthrough columns."""
    c = col.strip().lower()
    if c in PASSTHROUGH:
        return None
    is_sigma = c.endswith("_sigma")
    if is_sigma:
        c = c[: -len("_sigma")]
    for fname in sorted(UNITS, key=len, reverse=True):
        if c.startswith(fname + "_"):
            unit = c[len(fname) + 1:]
            if unit not in UNITS[fname]:
                raise FormatError(
                    f"unknown unit suffix {unit!r} in column {col!r}; "
                    f"accepted for {fname}: {', '.join(UNITS[fname])}"
                )
            return fname, UNITS[fname][unit], is_sigma
    raise FormatError(f"unrecognised catalog column {col!r}")


def _record_from_row(row, columns):
    values, sigma = {}, {}
    for col, spec in columns.items():
        cell = row.get(col)
        if cell is None or (isinstance(cell, str) and not cell.strip()):
            continue
        if spec is None:
            continue
        fname, factor, is_sigma = spec
        try:
            v = float(cell) * factor
        except (TypeError, ValueError):
            raise DomainError(f"{col}: not a number ({cell!r})") from None
        if is_sigma:
            sigma[fname] = v
        else:
            if fname in values:
                raise DomainError(f"{fname} given in more than one unit")
            values[fname] = v
    name = str(row.get("name") or "").strip()
    if not name:
        raise DomainError("missing motor name")
    winding = row.get("winding") or "wye"
    return MotorRecord(name=name, winding=winding, sigma=sigma, **values)


def _rows_from_source(source):
    path = Path(source)
    try:
        text = path.read_text()
    except OSError as exc:
        raise FormatError(f"cannot read catalog {source}: {exc}") from exc
    if path.suffix.lower() == ".json" or text.lstrip().startswith("["):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{source}: invalid JSON ({exc})") from exc
        if not isinstance(data, list) or not all(isinstance(d, dict) for d in data):
            raise FormatError(f"{source}: JSON catalog must be an array of objects")
        header = []
        for d in data:
            header += [k for k in d if k not in header]
        return header, data
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines:
        return [], []
    reader = csv.DictReader(io.StringIO("\n".join(lines)))
    return list(reader.fieldnames or []), list(reader)


def load_catalog(source):
    """Read a CSV or JSON catalog, converting to SI and deriving K_M where possible."""
    header, rows = _rows_from_source(source)
    if rows and "name" not in [h.strip().lower() for h in header]:
        raise FormatError(f"{source}: catalog needs a 'name' column")
    columns = {h: _parse_column(h) for h in header}
    cat = Catalog()
    seen = {}
    for i, raw in enumerate(rows, start=2 if not str(source).endswith(".json") else 1):
        row = {k.strip().lower() if isinstance(k, str) else k: v for k, v in raw.items()}
        cols = {k.strip().lower(): v for k, v in columns.items()}
        try:
            rec = _record_from_row(row, cols)
        except DomainError as exc:
            cat.quarantined.append(Quarantined(str(source), i, (row.get("name") or None), str(exc)))
            continue
        if rec.name in seen:
            raise FormatError(f"{source}: duplicate motor name {rec.name!r} (rows {seen[rec.name]} and {i})")
        seen[rec.name] = i
        derived = ()
        if rec.k_m is None:
            try:
                rec = rec.with_derived_km()
                derived = ("k_m",)
            except UnresolvedFieldError:
                pass
        cat.warnings.extend(rec.consistency_issues())
        if rec.kb_assumed and rec.k_t is not None:
            cat.warnings.append(f"{rec.name}: K_B absent, assumed equal to K_T")
        cat.records.append(rec)
        cat.provenance[rec.name] = Provenance(str(source), i, derived)
    return cat


def _fmt(v):
    return "" if v is None else repr(float(v))


def dump_catalog(cat, path=None, fmt="csv"):
    """Write ``cat`` in canonical SI columns; returns the text."""
    fields = list(UNITS)
    sig_cols = sorted({f for r in cat for f in r.sigma})
    if fmt == "json":
        out = []
        for r in cat:
            obj = {"name": r.name, "winding": r.winding.value}
            for f in fields:
                v = getattr(r, f)
                if v is not None:
                    obj[f"{f}_{next(iter(UNITS[f]))}"] = v
            for f in sig_cols:
                if f in r.sigma:
                    obj[f"{f}_{next(iter(UNITS[f]))}_sigma"] = r.sigma[f]
            out.append(obj)
        text = json.dumps(out, indent=2) + "\n"
    else:
        header = CANONICAL + [f"{f}_{next(iter(UNITS[f]))}_sigma" for f in sig_cols]
        lines = [",".join(header)]
        for r in cat:
            cells = [r.name, r.winding.value] + [_fmt(getattr(r, f)) for f in fields]
            cells += [_fmt(r.sigma.get(f)) for f in sig_cols]
            lines.append(",".join(cells))
        text = "\n".join(lines) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text


# ------------------------------------------------------------------------ ranking

@dataclass
class Ranking:
    metric: str
    ascending: bool
    rows: List[Tuple[MotorRecord, float]]
    unresolved: List[Tuple[MotorRecord, str]]

    @property
    def names(self):
        return [r.name for r, _ in self.rows]

    @property
    def notice(self):
        return None if self.rows else f"no motor in the catalog has a resolvable {self.metric}"


def metric_value(rec, metric):
    est = metric_report(rec).get(metric)
    if est is None:
        missing = "R_th" if metric == "k_ts" else "m"
        raise UnresolvedFieldError(missing, rec.name)
    return est.value


def rank(cat, by="s_m", ascending=None):
    """Order motors by a selection metric; ties go to the lighter motor, then by name.

    ``ascending`` defaults to best-first (small S_M/S_T, large K_ts).
    """
    if by not in METRICS:
        raise DomainError(f"unknown metric {by!r}; choose from {', '.join(METRICS)}")
    if ascending is None:
        ascending = by not in _DESCENDING
    ok, bad = [], []
    for rec in cat:
        try:
            ok.append((rec, metric_value(rec, by)))
        except QddError as exc:
            bad.append((rec, str(exc)))
    sign = 1.0 if ascending else -1.0
    ok.sort(key=lambda rv: (sign * rv[1], rv[0].mass if rv[0].mass is not None else math.inf, rv[0].name))
    return Ranking(by, ascending, ok, bad)


# ---------------------------------------------------------------------- plot data

_AXIS = {"s_m": "k_m", "s_t": "k_t"}


@dataclass
class IsolineSet:
    metric: str
    levels: np.ndarray
    k: np.ndarray  # shared log-uniform sample points
    j: np.ndarray  # shape (len(levels), len(k)); j = level * k**2

    def polylines(self):
        return [(lvl, self.k, row) for lvl, row in zip(self.levels, self.j)]


def decade_levels(lo, hi, per_decade=1):
    """Levels at 10**(i/per_decade) covering [lo, hi]."""
    if not (0 < lo <= hi):
        raise DomainError(f"invalid metric range [{lo}, {hi}]")
    a = math.floor(math.log10(lo) * per_decade + 1e-9)
    b = math.ceil(math.log10(hi) * per_decade - 1e-9)
    return 10.0 ** (np.arange(a, b + 1) / per_decade)


def isolines(metric, k_range, levels=None, levels_per_decade=1, metric_range=None, samples=50):
    """Curves of constant S_M (over K_M) or S_T (over K_T): ``J = level * K**2``."""
    if metric not in _AXIS:
        raise DomainError(f"isolines are defined for s_m and s_t, not {metric!r}")
    k_lo, k_hi = k_range
    if not (0 < k_lo < k_hi):
        raise DomainError(f"K range must satisfy 0 < low < high, got {k_range}")
    if levels is None:
        if metric_range is None:
            raise DomainError("give explicit levels or a metric range")
        levels = decade_levels(*metric_range, levels_per_decade)
    levels = np.asarray(sorted(float(x) for x in levels))
    if np.any(levels <= 0) or np.any(np.diff(levels) <= 0):
        raise DomainError("isoline levels must be positive and distinct")
    k = np.geomspace(k_lo, k_hi, samples)
    return IsolineSet(metric, levels, k, levels[:, None] * k[None, :] ** 2)


def catalog_isolines(cat, metric="s_m", levels=None, levels_per_decade=1, samples=50, margin=2.0):
    """Isolines spanning the metric and K range of ``cat``."""
    pts = scatter_data(cat, metric)
    if not pts.rows:
        raise DomainError("catalog has no motor with a resolvable metric")
    ks = [r.x for r in pts.rows]
    ms = [r.metric for r in pts.rows]
    return isolines(metric, (min(ks) / margin, max(ks) * margin), levels, levels_per_decade,
                    (min(ms), max(ms)), samples)


@dataclass(frozen=True)
class PlotRow:
    name: str
    x: float
    y: float
    metric: float
    level: Optional[float] = None


@dataclass
class PlotData:
    metric: str
    x_label: str
    y_label: str = "j_m"
    rows: List[PlotRow] = field(default_factory=list)
    # both axes logarithmic; lower-right (high K, low J) is better
    axes: Tuple[str, str] = ("log", "log")
    better: str = "bottom-right"


def scatter_data(cat, metric="s_m", x=None):
    """One ``(K, J_m, metric)`` point per motor. ``x`` is ``k_m`` or ``k_t``."""
    if metric not in _AXIS:
        raise DomainError(f"scatter data is defined for s_m and s_t, not {metric!r}")
    x = x or _AXIS[metric]
    out = PlotData(metric, x)
    for rec in cat:
        try:
            xv = rec.k_m_resolved if x == "k_m" else rec.need("k_t")
            value = metric_value(rec, metric)
        except QddError:
            continue
        out.rows.append(PlotRow(rec.name, xv, rec.need("j_m"), value))
    return out


def isoline_rows(iso):
    rows = []
    for lvl, k, j in iso.polylines():
        rows += [PlotRow(f"{iso.metric}={lvl:g}", float(kk), float(jj), float(lvl), float(lvl))
                 for kk, jj in zip(k, j)]
    return rows


def plot_csv(rows):
    """Serialize plot rows as ``name,x,y,metric,level``."""
    lines = ["name,x,y,metric,level"]
    for r in rows:
        lines.append(",".join([r.name, _fmt(r.x), _fmt(r.y), _fmt(r.metric), _fmt(r.level)]))
    return "\n".join(lines) + "\n"
