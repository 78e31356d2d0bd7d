"""Motor records, phase-frame conversion and the per-motor selection metrics.

All values are SI internally. Display units (ms, g*cm^2, g*(A/N)^2) are only
applied by :func:`to_display`.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, fields, replace
from typing import Mapping, NamedTuple, Optional

from .errors import DomainError, UnresolvedFieldError

# Relative tolerance for supplied-vs-derived K_M before a record is flagged.
KM_CONSISTENCY_RTOL = 0.05


class Winding(str, enum.Enum):
    WYE = "wye"
    DELTA = "delta"

    @classmethod
    def parse(cls, text):
        if isinstance(text, cls):
            return text
        key = str(text).strip().lower()
        aliases = {"y": "wye", "star": "wye", "d": "delta", "Δ": "delta"}
        try:
            return cls(aliases.get(key, key))
        except ValueError:
            raise DomainError(f"unknown winding style {text!r} (expected wye or delta)") from None


class Frame(str, enum.Enum):
    """Reference frame for delta-wound phase quantities."""

    PER_WINDING = "per-winding"
    WYE_EQUIVALENT = "wye-equivalent"


class Estimate(NamedTuple):
    value: float
    sigma: float = 0.0


def propagate_monomial(value, terms, combine="quadrature"):
    """First-order uncertainty of ``value = c * prod(x_i ** p_i)``.

    ``terms`` is an iterable of ``(x, sigma, p)``. With ``combine="quadrature"``
    the relative contributions ``|p * sigma / x|`` add in quadrature (independent
    inputs); ``"linear"`` sums them, giving the worst-case bound.
    """
    rel = [abs(p * s / x) for x, s, p in terms if s]
    if combine == "quadrature":
        total = math.sqrt(sum(r * r for r in rel))
    elif combine == "linear":
        total = sum(rel)
    else:
        raise ValueError(f"unknown combine mode {combine!r}")
    return abs(value) * total


def _require_positive(**values):
    for name, v in values.items():
        if v is None or not math.isfinite(v) or v <= 0:
            raise DomainError(f"{name} must be a positive finite number, got {v!r}")


# --------------------------------------------------------------------------- types

_NUMERIC = ("r_phase", "l_eff", "k_t", "k_b", "k_m", "j_m", "mass", "gap_radius", "length", "r_th")


@dataclass(frozen=True)
class MotorRecord:
    """Physical parameters of one motor, SI units.

    ``sigma`` maps field names to symmetric 1-sigma uncertainties in the same
    units. Optional fields are ``None`` when unknown.
    """

    name: str
    winding: Winding = Winding.WYE
    r_phase: Optional[float] = None
    l_eff: Optional[float] = None
    k_t: Optional[float] = None
    k_b: Optional[float] = None
    k_m: Optional[float] = None
    j_m: Optional[float] = None
    mass: Optional[float] = None
    gap_radius: Optional[float] = None
    length: Optional[float] = None
    r_th: Optional[float] = None
    sigma: Mapping[str, float] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "winding", Winding.parse(self.winding))
        for name in _NUMERIC:
            v = getattr(self, name)
            if v is None:
                continue
            if not math.isfinite(v) or v <= 0:
                raise DomainError(f"{self.name}: {name} must be strictly positive, got {v!r}")
        for name, s in self.sigma.items():
            if name not in _NUMERIC:
                raise DomainError(f"{self.name}: uncertainty given for unknown field {name!r}")
            if not math.isfinite(s) or s < 0:
                raise DomainError(f"{self.name}: uncertainty of {name} must be non-negative")
        object.__setattr__(self, "sigma", dict(self.sigma))

    def sig(self, name):
        return self.sigma.get(name, 0.0)

    def need(self, name):
        v = getattr(self, name)
        if v is None:
            raise UnresolvedFieldError(_SYMBOLS.get(name, name), self.name)
        return v

    @property
    def kb_assumed(self):
        """True when K_B is absent and taken equal to K_T."""
        return self.k_b is None

    @property
    def k_b_resolved(self):
        return self.k_b if self.k_b is not None else self.need("k_t")

    @property
    def km_derived(self):
        return self.k_m is None

    def km_estimate(self, combine="quadrature"):
        if self.k_m is not None:
            return Estimate(self.k_m, self.sig("k_m"))
        try:
            return derive_km(self.need("k_t"), self.k_b_resolved, self.need("r_phase"),
                             sigmas=(self.sig("k_t"), self.sig("k_b"), self.sig("r_phase")),
                             combine=combine, same_constant=self.kb_assumed)
        except UnresolvedFieldError:
            raise UnresolvedFieldError("K_M", self.name) from None

    @property
    def k_m_resolved(self):
        return self.km_estimate().value

    def with_derived_km(self):
        """Copy with K_M filled in from K_T, K_B and R_phi when it was absent."""
        if self.k_m is not None:
            return self
        est = self.km_estimate()
        sigma = dict(self.sigma)
        if est.sigma:
            sigma["k_m"] = est.sigma
        return replace(self, k_m=est.value, sigma=sigma)

    def consistency_issues(self):
        """Human-readable warnings about internally inconsistent constants."""
        issues = []
        if self.k_m is not None and self.k_t and self.r_phase:
            derived = derive_km(self.k_t, self.k_b_resolved, self.r_phase,
                                sigmas=(self.sig("k_t"), self.sig("k_b"), self.sig("r_phase")),
                                same_constant=self.kb_assumed)
            tol = max(math.hypot(self.sig("k_m"), derived.sigma), KM_CONSISTENCY_RTOL * derived.value)
            if abs(self.k_m - derived.value) > tol:
                issues.append(
                    f"{self.name}: supplied K_M={self.k_m:.4g} disagrees with "
                    f"sqrt(K_T*K_B/R_phi)={derived.value:.4g}"
                    + (" (K_B assumed = K_T)" if self.kb_assumed else "")
                )
        return issues

    def as_dict(self):
        out = {f.name: getattr(self, f.name) for f in fields(self) if f.name != "sigma"}
        out["winding"] = self.winding.value
        out["sigma"] = dict(self.sigma)
        return out


_SYMBOLS = {
    "r_phase": "R_phi", "l_eff": "L_e", "k_t": "K_T", "k_b": "K_B", "k_m": "K_M",
    "j_m": "J_m", "mass": "m", "gap_radius": "r_g", "length": "l", "r_th": "R_th",
}


@dataclass(frozen=True)
class LineMeasurement:
    r_line_line: float
    l_line_line: Optional[float] = None
    winding: Winding = Winding.WYE

    def __post_init__(self):
        object.__setattr__(self, "winding", Winding.parse(self.winding))
        _require_positive(r_line_line=self.r_line_line)
        if self.l_line_line is not None:
            _require_positive(l_line_line=self.l_line_line)


@dataclass(frozen=True)
class MetricReport:
    """Selection metrics of one motor with 1-sigma uncertainties (SI)."""

    name: str
    s_m: Estimate
    s_t: Estimate
    m_s_m: Optional[Estimate]
    m_s_t: Optional[Estimate]
    k_ts: Optional[Estimate]
    kb_assumed: bool = False
    km_derived: bool = False

    def get(self, metric):
        return getattr(self, metric)


# ---------------------------------------------------------------------- operations

def _line_factor(winding, frame):
    if winding is Winding.WYE or Frame(frame) is Frame.WYE_EQUIVALENT:
        return 0.5
    return 1.5


def phase_from_line(meas, frame=Frame.PER_WINDING):
    """Convert averaged line-to-line R and L to phase-frame values.

    Returns ``(r_phase, l_eff)``; ``l_eff`` is None when no inductance was given.
    Wye: half the line value. Delta: 3/2 of it in the per-winding frame, or half
    of it in the wye-equivalent frame.
    """
    f = _line_factor(meas.winding, frame)
    l_eff = None if meas.l_line_line is None else f * meas.l_line_line
    return f * meas.r_line_line, l_eff


def line_from_phase(r_phase, l_eff=None, winding=Winding.WYE, frame=Frame.PER_WINDING):
    """Inverse of :func:`phase_from_line`."""
    _require_positive(r_phase=r_phase)
    f = _line_factor(Winding.parse(winding), frame)
    return LineMeasurement(r_phase / f, None if l_eff is None else l_eff / f, winding)


def derive_km(k_t, k_b, r_phase, *, sigmas=(0.0, 0.0, 0.0), combine="quadrature",
              same_constant=False):
    """Motor constant ``sqrt(K_T * K_B / R_phi)`` with first-order uncertainty.

    ``same_constant`` marks K_B as the same measured quantity as K_T (ideal-PMSM
    assumption), so their errors are fully correlated.
    """
    _require_positive(k_t=k_t, k_b=k_b, r_phase=r_phase)
    value = math.sqrt(k_t * k_b / r_phase)
    s_t, s_b, s_r = sigmas
    if same_constant:
        terms = [(k_t, s_t, 1.0), (r_phase, s_r, -0.5)]
    else:
        terms = [(k_t, s_t, 0.5), (k_b, s_b, 0.5), (r_phase, s_r, -0.5)]
    return Estimate(value, propagate_monomial(value, terms, combine))


def _s_m(rec):
    j = rec.need("j_m")
    if rec.k_m is not None:
        val = j / rec.k_m ** 2
        return Estimate(val, propagate_monomial(val, [(j, rec.sig("j_m"), 1), (rec.k_m, rec.sig("k_m"), -2)]))
    km = rec.km_estimate().value
    val = j / km ** 2
    terms = [(j, rec.sig("j_m"), 1), (rec.r_phase, rec.sig("r_phase"), 1)]
    if rec.kb_assumed:
        terms.append((rec.k_t, rec.sig("k_t"), -2))
    else:
        terms += [(rec.k_t, rec.sig("k_t"), -1), (rec.k_b, rec.sig("k_b"), -1)]
    return Estimate(val, propagate_monomial(val, terms))


def _s_t(rec):
    j, kt = rec.need("j_m"), rec.need("k_t")
    val = j / kt ** 2
    return Estimate(val, propagate_monomial(val, [(j, rec.sig("j_m"), 1), (kt, rec.sig("k_t"), -2)]))


def _k_ts(rec):
    if rec.r_th is None:
        return None
    kt, m, r = rec.need("k_t"), rec.need("mass"), rec.need("r_phase")
    val = kt / m * math.sqrt(1.0 / (rec.r_th * r))
    terms = [(kt, rec.sig("k_t"), 1), (m, rec.sig("mass"), -1),
             (rec.r_th, rec.sig("r_th"), -0.5), (r, rec.sig("r_phase"), -0.5)]
    return Estimate(val, propagate_monomial(val, terms))


def _mass_weighted(rec, est):
    if rec.mass is None:
        return None
    val = rec.mass * est.value
    rel = math.hypot(est.sigma / est.value, rec.sig("mass") / rec.mass)
    return Estimate(val, val * rel)


def responsiveness_metric(rec):
    """S_M = J_m / K_M**2 [s]; K_M is derived from K_T, K_B, R_phi if absent."""
    return _s_m(rec).value


def torque_specific_inertia(rec):
    """S_T = J_m / K_T**2 [kg*(A/N)^2 in SI]."""
    return _s_t(rec).value


def thermal_specific_torque(rec):
    """K_ts = (K_T/m) * sqrt(1/(R_th*R_phi)), or None when R_th is unknown."""
    est = _k_ts(rec)
    return None if est is None else est.value


def metric_report(rec):
    s_m, s_t = _s_m(rec), _s_t(rec)
    return MetricReport(
        name=rec.name,
        s_m=s_m,
        s_t=s_t,
        m_s_m=_mass_weighted(rec, s_m),
        m_s_t=_mass_weighted(rec, s_t),
        k_ts=_k_ts(rec),
        kb_assumed=rec.kb_assumed,
        km_derived=rec.km_derived,
    )


# ------------------------------------------------------------------ display units

DISPLAY_UNITS = {
    "s_m": (1e3, "ms", "s"),
    "s_t": (1e3, "g(A/N)^2", "kg(A/N)^2"),
    "m_s_m": (1e3, "kg*ms", "kg*s"),
    "m_s_t": (1e3, "kg*g(A/N)^2", "kg^2(A/N)^2"),
    "k_ts": (1.0, "Nm/(kg*sqrt(C))", "Nm/(kg*sqrt(C))"),
    "j_m": (1e7, "g*cm^2", "kg*m^2"),
    "k_t": (1.0, "Nm/A", "Nm/A"),
    "k_m": (1.0, "Nm/sqrt(W)", "Nm/sqrt(W)"),
    "mass": (1e3, "g", "kg"),
}


def to_display(quantity, value, units="display"):
    """Scale an SI value for presentation; returns ``(value, unit_label)``."""
    scale, disp, si = DISPLAY_UNITS[quantity]
    if units == "si":
        return value, si
    return (None if value is None else value * scale), disp
