"""Command-line interface.

Exit codes: 0 success, 2 usage/validation, 3 file I/O or format, 4 analysis failure.
"""

from __future__ import annotations

import argparse
import csv
import difflib
import json
import math
import os
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Dict, List

import numpy as np

from . import catalog as catmod
from . import dyno_sim, sysid
from .actuator_design import compare_at_matched_inertia, compare_at_matched_torque
from .errors import (
    ConvergenceError,
    DomainError,
    FormatError,
    InsufficientDataError,
    NegativeInertiaError,
    QddError,
    SegmentTooShortError,
    SingularFitError,
    UnidentifiableError,
    UndefinedVAFError,
    UnresolvedFieldError,
)
from .motor_core import Frame, LineMeasurement, metric_report, phase_from_line, to_display

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_ANALYSIS = 0, 2, 3, 4
CATALOG_ENV = "QDDSEL_CATALOG"

_ANALYSIS_ERRORS = (UnidentifiableError, ConvergenceError, NegativeInertiaError, InsufficientDataError,
                    SingularFitError, UndefinedVAFError, SegmentTooShortError, UnresolvedFieldError)


class UsageError(QddError):
    pass


@dataclass
class Table:
    title: str
    columns: List[tuple]  # (key, header)
    rows: List[Dict[str, Any]] = field(default_factory=list)
    notes: List[str] = field(default_factory=list)


def _cell(v):
    if v is None:
        return "-"
    if isinstance(v, bool):
        return "yes" if v else "no"
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.3g}"
    return str(v)


def _json_value(v):
    if isinstance(v, (np.floating, np.integer)):
        v = v.item()
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


def render(tables, fmt, out):
    if fmt == "json":
        payload = [{"title": t.title,
                    "rows": [{k: _json_value(r.get(k)) for k, _ in t.columns} for r in t.rows],
                    "notes": t.notes} for t in tables]
        json.dump(payload[0] if len(payload) == 1 else payload, out, indent=2)
        out.write("\n")
        return
    for i, t in enumerate(tables):
        if fmt == "csv":
            w = csv.writer(out, lineterminator="\n")
            w.writerow([k for k, _ in t.columns])
            for r in t.rows:
                w.writerow(["" if r.get(k) is None else
                            (repr(float(r[k])) if isinstance(r.get(k), (float, np.floating)) else r[k])
                            for k, _ in t.columns])
            continue
        if i:
            out.write("\n")
        cells = [[h for _, h in t.columns]] + [[_cell(r.get(k)) for k, _ in t.columns] for r in t.rows]
        widths = [max(len(row[c]) for row in cells) for c in range(len(t.columns))]
        if t.title:
            out.write(t.title + "\n")
        for n, row in enumerate(cells):
            out.write("  ".join(c.rjust(w) if n and c[:1] in "-0123456789." else c.ljust(w)
                                for c, w in zip(row, widths)).rstrip() + "\n")
            if n == 0:
                out.write("  ".join("-" * w for w in widths) + "\n")
        for note in t.notes:
            out.write(f"note: {note}\n")


# ----------------------------------------------------------------------- helpers

def default_catalog_path():
    env = os.environ.get(CATALOG_ENV)
    if env:
        return env
    return str(resources.files("qddsel") / "data" / "reference_motors.csv")


def _looks_like_path(token):
    return Path(token).suffix.lower() in (".csv", ".json") or os.sep in token or Path(token).is_file()


def _split_catalog(tokens):
    """First positional is the catalog path when it looks like a file."""
    if tokens and _looks_like_path(tokens[0]):
        return tokens[0], tokens[1:]
    return default_catalog_path(), tokens


def _load(path):
    cat = catmod.load_catalog(path)
    for q in cat.quarantined:
        print(f"warning: {q.source} row {q.row} quarantined: {q.diagnostic}", file=sys.stderr)
    for w in cat.warnings:
        print(f"warning: {w}", file=sys.stderr)
    return cat


def _motor(cat, name):
    try:
        return cat.get(name)
    except KeyError:
        close = difflib.get_close_matches(name, cat.names, n=3, cutoff=0.3)
        hint = f"; did you mean {', '.join(close)}?" if close else ""
        raise UsageError(f"unknown motor {name!r}{hint} (catalog has: {', '.join(cat.names) or 'none'})")


def _disp(quantity, value, units):
    return to_display(quantity, value, units)


def _unit(quantity, units):
    return to_display(quantity, 1.0, units)[1]


def _pair(s):
    try:
        lo, hi = (float(x) for x in s.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected LOW,HIGH, got {s!r}") from None
    return lo, hi


def _float_list(s):
    try:
        return [float(x) for x in s.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {s!r}") from None


# ---------------------------------------------------------------------- commands

def cmd_metrics(args):
    path, names = _split_catalog(args.items)
    cat = _load(path)
    records = [_motor(cat, n) for n in names] if names else list(cat)
    u = args.units
    t = Table("Selection metrics", [
        ("name", "motor"),
        ("s_m", f"S_M [{_unit('s_m', u)}]"), ("s_m_sigma", "+/-"),
        ("s_t", f"S_T [{_unit('s_t', u)}]"), ("s_t_sigma", "+/-"),
        ("m_s_m", f"m*S_M [{_unit('m_s_m', u)}]"),
        ("m_s_t", f"m*S_T [{_unit('m_s_t', u)}]"),
        ("k_ts", f"K_ts [{_unit('k_ts', u)}]"),
        ("flags", "flags"),
    ])
    for rec in records:
        rep = metric_report(rec)
        row = {"name": rec.name}
        for key in ("s_m", "s_t", "m_s_m", "m_s_t", "k_ts"):
            est = rep.get(key)
            row[key] = None if est is None else _disp(key, est.value, u)[0]
            if key in ("s_m", "s_t"):
                row[key + "_sigma"] = _disp(key, est.sigma, u)[0]
        flags = []
        if rep.kb_assumed:
            flags.append("K_B=K_T assumed")
        if rep.km_derived or "k_m" in cat.provenance[rec.name].derived:
            flags.append("K_M derived")
        row["flags"] = "; ".join(flags)
        t.rows.append(row)
    return [t]


def cmd_rank(args):
    path, rest = _split_catalog(args.items)
    if rest:
        raise UsageError(f"unexpected arguments: {' '.join(rest)}")
    cat = _load(path)
    by = args.by
    if args.weighted and by in ("s_m", "s_t"):
        by = "m_" + by
    ranking = catmod.rank(cat, by, ascending=None if args.order == "best" else args.order == "ascending")
    t = Table(f"Ranking by {by} ({'ascending' if ranking.ascending else 'descending'})",
              [("rank", "#"), ("name", "motor"), ("value", f"{by} [{_unit(by, args.units)}]"),
               ("mass", f"mass [{_unit('mass', args.units)}]")])
    for i, (rec, v) in enumerate(ranking.rows, start=1):
        t.rows.append({"rank": i, "name": rec.name, "value": _disp(by, v, args.units)[0],
                       "mass": None if rec.mass is None else _disp("mass", rec.mass, args.units)[0]})
    if ranking.notice:
        t.notes.append(ranking.notice)
    tables = [t]
    if ranking.unresolved:
        tables.append(Table("Unresolved", [("name", "motor"), ("reason", "reason")],
                            [{"name": r.name, "reason": why} for r, why in ranking.unresolved]))
    return tables


def cmd_compare(args):
    path, names = _split_catalog(args.items)
    if len(names) != 2:
        raise UsageError("compare needs exactly two motor names")
    cat = _load(path)
    a, b = (_motor(cat, n) for n in names)
    fn = compare_at_matched_inertia if args.match == "inertia" else compare_at_matched_torque
    c = fn(a, b, args.ratio_b)
    dom = c.dominant
    t = Table(f"{a.name} vs {b.name}, matched {c.match} (N_{b.name} = {c.ratio_b:g})",
              [("quantity", "quantity"), ("value", "value"), ("favours", "favours")])
    t.rows = [
        {"quantity": f"N_{a.name}", "value": c.ratio_a, "favours": ""},
        {"quantity": f"N_{b.name}", "value": c.ratio_b, "favours": ""},
        {"quantity": "K_Ta ratio", "value": c.k_ta_ratio, "favours": dom["k_ta"]},
        {"quantity": "K_Ma ratio", "value": c.k_ma_ratio, "favours": dom["k_ma"]},
        {"quantity": "J_a ratio", "value": c.j_a_ratio, "favours": ""},
        {"quantity": "S_M advantage", "value": c.s_m_advantage, "favours": dom["s_m"]},
        {"quantity": "S_T advantage", "value": c.s_t_advantage, "favours": dom["s_t"]},
    ]
    t.notes.append(f"ratios are {a.name}/{b.name}; advantages are S_{b.name}/S_{a.name}")
    return [t]


def _identify_files(paths, args):
    params = sysid.WelchParams(nperseg=args.nperseg, overlap=args.overlap)
    fits = []
    for p in paths:
        ts = sysid.read_csv(p)
        fr = sysid.welch_tf(ts, params=params)
        try:
            fits.append(sysid.fit_first_order(fr, ts, args.band, args.coherence_floor))
        except UnidentifiableError as exc:
            m = (fr.frequencies >= args.band[0]) & (fr.frequencies <= args.band[1])
            summary = (f"{p}: coherence in band min {fr.coherence[m].min():.3f}, "
                       f"median {np.median(fr.coherence[m]):.3f}, max {fr.coherence[m].max():.3f}")
            raise UnidentifiableError(f"{exc}\n{summary}") from exc
    return fits


def cmd_sysid(args):
    fits_r = _identify_files(args.data, args)
    t = Table("First-order backdrive fit", [
        ("run", "run"), ("j", "J [kg*m^2]"), ("j_ci", "J 2sd"), ("b", "B [N*m*s/rad]"),
        ("b_ci", "B 2sd"), ("vaf", "VAF [%]"),
    ])

    def add(label, fits):
        for p, f in zip(label[1], fits):
            t.rows.append({"run": f"{label[0]}:{Path(p).name}", "j": f.j, "b": f.b, "vaf": f.vaf})
        pooled = sysid.combine_fits(fits)
        if len(fits) > 1:
            t.rows.append({"run": f"{label[0]}:pooled", "j": pooled.j, "j_ci": pooled.j_ci,
                           "b": pooled.b, "b_ci": pooled.b_ci, "vaf": pooled.vaf})
        return pooled

    pooled_r = add(("rotor", args.data), fits_r)
    tables = [t]
    if args.no_rotor:
        if args.ratio is None:
            raise UsageError("--ratio is required with --no-rotor")
        pooled_nr = add(("no-rotor", args.no_rotor), _identify_files(args.no_rotor, args))
        jm, ci = sysid.differential_inertia(pooled_r, pooled_nr, args.ratio)
        tables.append(Table("Rotor inertia", [("quantity", "quantity"), ("value", "value")], [
            {"quantity": "J_m [kg*m^2]", "value": jm},
            {"quantity": "J_m 2sd [kg*m^2]", "value": ci},
            {"quantity": "ratio N", "value": float(args.ratio)},
        ]))
        if ci is None:
            tables[-1].notes.append("confidence interval needs at least two runs per configuration")
    elif len(fits_r) == 1:
        t.notes.append("single run: confidence intervals unavailable")
    return tables


def cmd_simulate(args):
    cfg = dyno_sim.SimConfig(
        true_j=args.j, true_b=args.b, duration=args.duration, sample_rate=args.sample_rate,
        bandwidth=args.bandwidth, amplitude=args.amplitude, seed=args.seed,
        torque_noise=args.noise_torque, velocity_noise=args.noise_velocity,
        rotor_installed=args.rotor, ratio=args.ratio,
    )
    ts = dyno_sim.simulate_run(cfg)
    if args.out == "-":
        sysid.write_csv(ts, args.stream)
        return []
    try:
        sysid.write_csv(ts, args.out)
    except OSError as exc:
        raise FormatError(f"cannot write {args.out}: {exc}") from exc
    return [Table("Simulated run", [("quantity", "quantity"), ("value", "value")], [
        {"quantity": "file", "value": args.out},
        {"quantity": "samples", "value": len(ts)},
        {"quantity": "J [kg*m^2]", "value": cfg.true_j},
        {"quantity": "B [N*m*s/rad]", "value": cfg.true_b},
    ])]


def cmd_isolines(args):
    if args.levels:
        iso = catmod.isolines(args.metric, args.k_range, levels=args.levels, samples=args.samples)
        pts = catmod.scatter_data(_load(args.catalog), args.metric) if args.catalog else None
    else:
        cat = _load(args.catalog or default_catalog_path())
        iso = catmod.catalog_isolines(cat, args.metric, levels_per_decade=args.per_decade,
                                      samples=args.samples)
        pts = catmod.scatter_data(cat, args.metric)
    rows = catmod.isoline_rows(iso) + (pts.rows if pts else [])
    t = Table(f"Isolines of {args.metric} (x = {catmod._AXIS[args.metric]}, y = j_m; SI, log-log)",
              [("name", "name"), ("x", "x"), ("y", "y"), ("metric", "metric"), ("level", "level")],
              [vars(r) for r in rows])
    return [t]


def cmd_convert(args):
    meas = LineMeasurement(args.rll, args.lll, args.winding)
    r, l = phase_from_line(meas, Frame(args.frame))
    rows = [{"quantity": "R_phase [ohm]", "value": r}]
    if l is not None:
        rows.append({"quantity": "L_e [H]", "value": l})
    return [Table(f"Phase-frame values ({args.winding}, {args.frame})",
                  [("quantity", "quantity"), ("value", "value")], rows)]


def cmd_thin_ring(args):
    j, s = sysid.thin_ring_inertia(args.mass, args.radius, args.mass_sigma, args.radius_sigma)
    return [Table("Thin-ring inertia", [("quantity", "quantity"), ("value", "value")], [
        {"quantity": "J [kg*m^2]", "value": j},
        {"quantity": "sigma [kg*m^2]", "value": s},
    ])]


def cmd_fit_constant(args):
    if args.stall:
        ts = sysid.read_csv(args.data)
        pts = sysid.stall_test_reduce(ts, args.trim)
        y = np.array([p[0] for p in pts])
        x = np.array([p[1] for p in pts])
    else:
        try:
            with open(args.data, newline="") as fh:
                rows = list(csv.DictReader(line for line in fh if not line.startswith("#")))
        except OSError as exc:
            raise FormatError(f"cannot read {args.data}: {exc}") from exc
        try:
            x = np.array([float(r[args.x]) for r in rows])
            y = np.array([float(r[args.y]) for r in rows])
        except KeyError as exc:
            raise FormatError(f"{args.data}: missing column {exc}") from None
        except (TypeError, ValueError) as exc:
            raise FormatError(f"{args.data}: non-numeric value ({exc})") from None
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise FormatError(f"{args.data}: NaN or Inf values")
    fit = sysid.fit_constant(x, y)
    return [Table("Line fit", [("quantity", "quantity"), ("value", "value")], [
        {"quantity": "slope", "value": fit.slope},
        {"quantity": "slope 2se", "value": fit.slope_ci},
        {"quantity": "intercept", "value": fit.intercept},
        {"quantity": "R^2", "value": fit.r2},
        {"quantity": "points", "value": len(x)},
    ])]


# ------------------------------------------------------------------------ parser

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--format", choices=("table", "csv", "json"), default=argparse.SUPPRESS)
    common.add_argument("--units", choices=("si", "display"), default=argparse.SUPPRESS)

    p = _Parser(prog="qddsel", parents=[common],
                description="Motor selection metrics and dynamometer identification.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, fn, help_):
        sp = sub.add_parser(name, parents=[common], help=help_, description=help_)
        sp.set_defaults(func=fn)
        return sp

    sp = add("metrics", cmd_metrics, "S_M, S_T, mass-weighted variants and K_ts per motor")
    sp.add_argument("items", nargs="*", metavar="[CATALOG] [MOTOR ...]")

    sp = add("rank", cmd_rank, "rank catalog motors by a selection metric")
    sp.add_argument("items", nargs="*", metavar="[CATALOG]")
    sp.add_argument("--by", choices=catmod.METRICS, default="s_m")
    sp.add_argument("--weighted", action="store_true", help="use m*S_M / m*S_T")
    sp.add_argument("--order", choices=("best", "ascending", "descending"), default="best")

    sp = add("compare", cmd_compare, "compare two motors at matched actuator inertia or torque constant")
    sp.add_argument("items", nargs="+", metavar="[CATALOG] MOTOR_A MOTOR_B")
    sp.add_argument("--match", choices=("inertia", "torque"), default="inertia")
    sp.add_argument("--ratio-b", type=float, default=1.0, help="transmission ratio of motor B")

    sp = add("sysid", cmd_sysid, "identify J and B from backdrive time-series files")
    sp.add_argument("data", nargs="+", help="rotor-installed runs (one per input amplitude)")
    sp.add_argument("--no-rotor", nargs="+", default=None, help="rotor-removed runs")
    sp.add_argument("--ratio", type=float, help="transmission ratio N for the differential inertia")
    sp.add_argument("--band", type=_pair, default=sysid.DEFAULT_BAND, help="LOW,HIGH in Hz")
    sp.add_argument("--coherence-floor", type=float, default=sysid.DEFAULT_COHERENCE_FLOOR)
    sp.add_argument("--nperseg", type=int, default=None)
    sp.add_argument("--overlap", type=float, default=0.5)

    d = dyno_sim.SimConfig()
    sp = add("simulate", cmd_simulate, "write a synthetic backdrive run")
    sp.add_argument("--j", type=float, default=d.true_j)
    sp.add_argument("--b", type=float, default=d.true_b)
    sp.add_argument("--duration", type=float, default=d.duration)
    sp.add_argument("--sample-rate", type=float, default=d.sample_rate)
    sp.add_argument("--bandwidth", type=float, default=d.bandwidth)
    sp.add_argument("--amplitude", type=float, default=d.amplitude)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--noise-torque", type=float, default=d.torque_noise)
    sp.add_argument("--noise-velocity", type=float, default=d.velocity_noise)
    sp.add_argument("--rotor", action=argparse.BooleanOptionalAction, default=None)
    sp.add_argument("--ratio", type=float, default=None)
    sp.add_argument("--out", required=True, help="output CSV path, or - for stdout")

    sp = add("isolines", cmd_isolines, "isoline and scatter plot data (name,x,y,metric,level)")
    sp.add_argument("--metric", choices=("s_m", "s_t"), default="s_m")
    sp.add_argument("--levels", type=_float_list, default=None)
    sp.add_argument("--k-range", type=_pair, default=(0.01, 1.0))
    sp.add_argument("--per-decade", type=int, default=1)
    sp.add_argument("--samples", type=int, default=50)
    sp.add_argument("--catalog", default=None)

    sp = add("convert", cmd_convert, "line-to-line R/L to phase frame")
    sp.add_argument("--winding", choices=("wye", "delta"), required=True)
    sp.add_argument("--rll", type=float, required=True, help="line-to-line resistance [ohm]")
    sp.add_argument("--lll", type=float, default=None, help="line-to-line inductance [H]")
    sp.add_argument("--frame", choices=[f.value for f in Frame], default=Frame.PER_WINDING.value)

    sp = add("thin-ring", cmd_thin_ring, "rotor inertia by thin-ring approximation")
    sp.add_argument("--mass", type=float, required=True, help="[kg]")
    sp.add_argument("--radius", type=float, required=True, help="[m]")
    sp.add_argument("--mass-sigma", type=float, default=0.0)
    sp.add_argument("--radius-sigma", type=float, default=0.0)

    sp = add("fit-constant", cmd_fit_constant, "least-squares line fit (K_T from stall data, K_B from back-EMF)")
    sp.add_argument("data")
    sp.add_argument("--x", default="x")
    sp.add_argument("--y", default="y")
    sp.add_argument("--stall", action="store_true",
                    help="DATA is a stall-test time series; fit mean torque against mean current")
    sp.add_argument("--trim", type=float, default=sysid.DEFAULT_TRIM)
    return p


def main(argv=None, out=None):
    out = out or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    args.format = getattr(args, "format", "table")
    args.units = getattr(args, "units", "display")
    args.stream = out
    try:
        tables = args.func(args)
    except (UsageError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except _ANALYSIS_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ANALYSIS
    render(tables, args.format, out)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
