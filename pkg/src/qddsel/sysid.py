"""Dynamometer characterization: constant fits, Welch transfer-function
estimation, two-stage first-order fitting and inertia estimators.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import optimize, signal

from .errors import (
    ConvergenceError,
    DomainError,
    InsufficientDataError,
    NegativeInertiaError,
    SegmentTooShortError,
    SingularFitError,
    UnidentifiableError,
    UndefinedVAFError,
)
from .motor_core import _require_positive, propagate_monomial
from .timeseries import TimeSeries, read_csv, write_csv  # noqa: F401  (re-exported)

DEFAULT_BAND = (0.0, 40.0)
DEFAULT_COHERENCE_FLOOR = 0.8
DEFAULT_TRIM = 0.5


# ---------------------------------------------------------------- linear constants

@dataclass(frozen=True)
class LinearFit:
    slope: float
    intercept: float
    slope_ci: float  # 2 standard errors
    r2: float


def fit_constant(x, y):
    """Ordinary least squares ``y = slope*x + intercept``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise DomainError("x and y must be 1-D vectors of equal length")
    n = len(x)
    if n < 3:
        raise DomainError(f"need at least 3 points for a line fit, got {n}")
    xm, ym = x.mean(), y.mean()
    sxx = float(np.sum((x - xm) ** 2))
    if sxx <= 1e-14 * max(1.0, float(np.sum(x * x))):
        raise SingularFitError("x is constant; slope is not identifiable")
    slope = float(np.sum((x - xm) * (y - ym)) / sxx)
    intercept = float(ym - slope * xm)
    resid = y - (slope * x + intercept)
    ss_res = float(resid @ resid)
    ss_tot = float(np.sum((y - ym) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    se = math.sqrt(ss_res / (n - 2) / sxx)
    return LinearFit(slope, intercept, 2.0 * se, r2)


def _command_segments(levels):
    edges = np.flatnonzero(np.diff(levels) != 0) + 1
    starts = np.concatenate(([0], edges))
    stops = np.concatenate((edges, [len(levels)]))
    return list(zip(starts, stops))


def stall_test_reduce(ts, trim=DEFAULT_TRIM):
    """Average torque and current over each steady command segment.

    Segments are runs of constant value in the ``command`` channel, or in
    ``current`` when no command channel was recorded. ``trim`` seconds are
    discarded from both ends of every segment. Returns a list of
    ``(mean_torque, mean_current)``.
    """
    if "current" not in ts:
        raise DomainError("stall reduction needs a current channel")
    levels = ts["command"] if "command" in ts else ts["current"]
    n_trim = int(round(trim * ts.sample_rate))
    out = []
    for start, stop in _command_segments(levels):
        if stop - start <= 2 * n_trim:
            raise SegmentTooShortError(
                f"segment at t={start / ts.sample_rate:.3f} s lasts {(stop - start) / ts.sample_rate:.3f} s, "
                f"not longer than 2*trim={2 * trim:g} s"
            )
        sl = slice(start + n_trim, stop - n_trim)
        out.append((float(ts["torque"][sl].mean()), float(ts["current"][sl].mean())))
    return out


# --------------------------------------------------------------- spectral estimate

@dataclass(frozen=True)
class WelchParams:
    nperseg: Optional[int] = None  # default: largest power of two <= sample rate
    overlap: float = 0.5
    window: str = "hann"

    def segment_length(self, sample_rate):
        if self.nperseg is not None:
            return self.nperseg
        return 1 << int(math.floor(math.log2(sample_rate)))


@dataclass(frozen=True)
class FrequencyResponse:
    frequencies: np.ndarray
    gain: np.ndarray
    coherence: np.ndarray
    segments: int
    input: str = "torque"
    output: str = "velocity"

    def __post_init__(self):
        if not (len(self.frequencies) == len(self.gain) == len(self.coherence)):
            raise DomainError("frequency response vectors differ in length")

    @property
    def magnitude(self):
        return np.abs(self.gain)


def segment_count(n, nperseg, overlap):
    step = nperseg - int(round(overlap * nperseg))
    return 0 if n < nperseg else (n - nperseg) // step + 1


def spectra(x, y, fs, params=None):
    """Welch auto and cross spectra ``(f, Sxx, Syy, Sxy)`` with ``Sxy = E[X* Y]``."""
    params = params or WelchParams()
    nperseg = params.segment_length(fs)
    noverlap = int(round(params.overlap * nperseg))
    kw = dict(fs=fs, window=params.window, nperseg=nperseg, noverlap=noverlap, detrend="constant")
    f, sxx = signal.welch(x, **kw)
    _, syy = signal.welch(y, **kw)
    _, sxy = signal.csd(x, y, **kw)
    return f, sxx, syy, sxy


def coherence_from_spectra(sxx, syy, sxy):
    """Magnitude-squared coherence, clipped to [0, 1] against round-off."""
    den = sxx * syy
    with np.errstate(invalid="ignore", divide="ignore"):
        gamma = np.where(den > 0, np.abs(sxy) ** 2 / den, 0.0)
    return np.clip(gamma, 0.0, 1.0)


def welch_tf(ts, input="torque", output="velocity", params=None):
    """H1 transfer-function estimate ``Sxy/Sxx`` and coherence by Welch averaging.

    The DC bin is dropped (segments are mean-detrended).
    """
    params = params or WelchParams()
    nperseg = params.segment_length(ts.sample_rate)
    if nperseg < 2 or nperseg & (nperseg - 1):
        raise DomainError(f"segment length must be a power of two, got {nperseg}")
    if not 0 <= params.overlap < 1:
        raise DomainError(f"overlap must be in [0, 1), got {params.overlap}")
    x, y = ts[input], ts[output]
    k = segment_count(len(x), nperseg, params.overlap)
    if k < 2:
        raise InsufficientDataError(
            f"{len(x)} samples give {k} Welch segment(s) of {nperseg}; need at least 2"
        )
    f, sxx, syy, sxy = spectra(x, y, ts.sample_rate, params)
    keep = f > 0
    with np.errstate(invalid="ignore", divide="ignore"):
        gain = np.where(sxx > 0, sxy / sxx, 0.0)
    coh = coherence_from_spectra(sxx, syy, sxy)
    return FrequencyResponse(f[keep], gain[keep], coh[keep], k, input, output)


# ------------------------------------------------------------- first-order model

def zoh_first_order(u, j, b, dt, w0=0.0):
    """Exact zero-order-hold response of ``j*dw/dt = u - b*w``.

    ``w[k+1] = a*w[k] + g*u[k]`` with ``a = exp(-b*dt/j)``; ``b = 0`` is the
    pure-integrator limit ``g = dt/j``.
    """
    u = np.asarray(u, dtype=float)
    a = math.exp(-b * dt / j)
    g = -math.expm1(-b * dt / j) / b if b > 0 else dt / j
    w = np.empty_like(u)
    w[0] = w0
    if len(u) > 1:
        w[1:], _ = signal.lfilter([g], [1.0, -a], u[:-1], zi=[a * w0])
    return w


def first_order_gain(f, j, b):
    return 1.0 / np.abs(b + 2j * np.pi * np.asarray(f) * j)


def vaf(measured, predicted):
    """Variance accounted for, percent: ``100*(1 - var(y - yhat)/var(y))``."""
    y = np.asarray(measured, dtype=float)
    yh = np.asarray(predicted, dtype=float)
    if y.shape != yh.shape or y.ndim != 1 or len(y) < 2:
        raise DomainError("vaf needs two 1-D vectors of equal length >= 2")
    vy = float(np.var(y))
    if vy == 0.0:
        raise UndefinedVAFError("measured signal has zero variance")
    return 100.0 * (1.0 - float(np.var(y - yh)) / vy)


@dataclass(frozen=True)
class FirstOrderFit:
    j: float
    b: float
    vaf: float
    j_ci: Optional[float] = None
    b_ci: Optional[float] = None
    stage1_j: float = float("nan")
    stage1_b: float = float("nan")
    stage1_residual: float = float("nan")
    stage2_evaluations: int = 0
    bins_used: int = 0
    runs: int = 1
    members: tuple = field(default=(), repr=False)


def _initial_guess(f, mag):
    """Closed-form start point from the low-frequency gain and the -3 dB corner."""
    b0 = 1.0 / mag[0]
    below = np.flatnonzero(mag <= mag[0] / math.sqrt(2.0))
    if len(below) and below[0] > 0:
        j0 = b0 / (2 * np.pi * f[below[0]])
    else:
        # corner below the first bin: use the integrator asymptote at the top of the band
        j0 = 1.0 / (2 * np.pi * f[-1] * mag[-1])
        b0 = min(b0, 2 * np.pi * f[0] * j0)
    return j0, b0


def _bounded_simplex(fun, x0, bounds, xatol, fatol, maxiter):
    x0 = np.asarray(x0, dtype=float)
    # scipy's default simplex collapses on a zero coordinate (B at its bound)
    simplex = np.array([x0, x0 + [0.1 * x0[0], 0.0], x0 + [0.0, max(0.1 * x0[1], 0.2)]])
    return optimize.minimize(fun, x0, method="Nelder-Mead", bounds=bounds,
                             options=dict(xatol=xatol, fatol=fatol, maxiter=maxiter, maxfev=4 * maxiter,
                                          initial_simplex=simplex))


def fit_first_order(fr, ts, band=DEFAULT_BAND, coherence_floor=DEFAULT_COHERENCE_FLOOR,
                    *, maxiter=4000):
    """Fit ``1/(J s + B)`` to a measured response in two stages.

    Stage 1 fits log gain over coherent bins inside ``band``. Stage 2 starts
    there and maximizes time-domain VAF of the zero-order-hold simulation driven
    by the measured input. Both stages use a bounded Nelder-Mead simplex in
    coordinates normalized by the closed-form start point.
    """
    lo, hi = band
    sel = (fr.frequencies >= lo) & (fr.frequencies <= hi) & (fr.coherence >= coherence_floor)
    sel &= fr.magnitude > 0
    if not np.any(sel):
        raise UnidentifiableError(
            f"no frequency bin in [{lo:g}, {hi:g}] Hz reaches coherence {coherence_floor:g} "
            f"(max coherence in band {_max_in_band(fr, lo, hi):.3f})"
        )
    f = fr.frequencies[sel]
    logmag = np.log(fr.magnitude[sel])
    j0, b0 = _initial_guess(f, fr.magnitude[sel])
    b_scale = max(b0, 2 * np.pi * f[0] * j0)

    def unpack(p):
        return p[0] * j0, p[1] * b_scale

    def stage1(p):
        j, b = unpack(p)
        r = logmag - np.log(first_order_gain(f, j, b))
        return float(r @ r)

    bounds = [(1e-4, 1e4), (0.0, 1e4)]
    res1 = _bounded_simplex(stage1, [1.0, b0 / b_scale], bounds, 1e-10, 1e-14, maxiter)
    j1, b1 = unpack(res1.x)
    if not res1.success:
        raise ConvergenceError(f"stage-1 gain fit did not converge: {res1.message}")

    u = ts[fr.input]
    y = ts[fr.output]
    dt = ts.dt
    w0 = float(y[0])
    vy = float(np.var(y))
    if vy == 0.0:
        raise UndefinedVAFError("measured output has zero variance")

    def stage2(p):
        j, b = unpack(p)
        if j <= 0:
            return 1e6
        e = y - zoh_first_order(u, j, b, dt, w0)
        return float(np.var(e)) / vy

    res2 = _bounded_simplex(stage2, res1.x, bounds, 1e-10, 1e-15, maxiter)
    stage1_fit = FirstOrderFit(j1, b1, 100.0 * (1.0 - stage2(res1.x)), stage1_j=j1, stage1_b=b1,
                               stage1_residual=res1.fun, bins_used=int(sel.sum()))
    if not res2.success:
        raise ConvergenceError(f"stage-2 VAF fit did not converge: {res2.message}", fallback=stage1_fit)
    j2, b2 = unpack(res2.x)
    return FirstOrderFit(
        j=j2, b=b2, vaf=100.0 * (1.0 - res2.fun),
        stage1_j=j1, stage1_b=b1, stage1_residual=float(res1.fun),
        stage2_evaluations=int(res2.nfev), bins_used=int(sel.sum()),
    )


def _max_in_band(fr, lo, hi):
    m = (fr.frequencies >= lo) & (fr.frequencies <= hi)
    return float(fr.coherence[m].max()) if np.any(m) else float("nan")


def identify(ts, params=None, band=DEFAULT_BAND, coherence_floor=DEFAULT_COHERENCE_FLOOR):
    """Welch estimate followed by the two-stage fit for one backdrive record."""
    fr = welch_tf(ts, "torque", "velocity", params)
    return fr, fit_first_order(fr, ts, band, coherence_floor)


def combine_fits(fits):
    """Pool fits from runs at different input amplitudes.

    The estimate is the mean; confidence half-widths are two sample standard
    deviations across runs, unavailable for a single run.
    """
    fits = list(fits)
    if not fits:
        raise DomainError("no fits to combine")
    if len(fits) == 1:
        return fits[0]
    js = np.array([f.j for f in fits])
    bs = np.array([f.b for f in fits])
    return FirstOrderFit(
        j=float(js.mean()), b=float(bs.mean()), vaf=float(min(f.vaf for f in fits)),
        j_ci=float(2 * js.std(ddof=1)), b_ci=float(2 * bs.std(ddof=1)),
        stage1_j=float(np.mean([f.stage1_j for f in fits])),
        stage1_b=float(np.mean([f.stage1_b for f in fits])),
        runs=len(fits), members=tuple(fits),
    )


# ---------------------------------------------------------------------- inertia

def differential_inertia(fit_r, fit_nr, n):
    """Rotor inertia from runs with and without the rotor behind ratio ``n``.

    ``J_m = (J_r - J_nr) / n**2``. Accepts fits or bare ``(j, ci)`` pairs /
    floats. Returns ``(j_m, ci)``; ``ci`` is None if either input lacks one.
    """
    _require_positive(n=n)
    jr, cr = _j_and_ci(fit_r)
    jnr, cnr = _j_and_ci(fit_nr)
    if jr <= jnr:
        raise NegativeInertiaError(
            f"rotor-installed inertia {jr:.4g} does not exceed rotor-removed {jnr:.4g}; runs swapped?"
        )
    jm = (jr - jnr) / (n * n)
    ci = None if cr is None or cnr is None else math.hypot(cr, cnr) / (n * n)
    return jm, ci


def _j_and_ci(x):
    if isinstance(x, FirstOrderFit):
        return x.j, x.j_ci
    if isinstance(x, tuple):
        return float(x[0]), (None if x[1] is None else float(x[1]))
    return float(x), 0.0


def thin_ring_inertia(mass, radius, mass_sigma=0.0, radius_sigma=0.0):
    """``J = m r^2`` for a thin hoop; returns ``(j, sigma)`` by first-order propagation."""
    _require_positive(mass=mass, radius=radius)
    j = mass * radius * radius
    return j, propagate_monomial(j, [(mass, mass_sigma, 1), (radius, radius_sigma, 2)])
