"""Ideal-transmission actuator math and gap-radius scaling predictions.

Transmissions are massless, lossless and rigid; ``ratio`` is a speed reduction.
"""

from __future__ import annotations

import math
from dataclasses import astuple, dataclass

from .errors import DomainError
from .motor_core import MotorRecord, _require_positive, responsiveness_metric, torque_specific_inertia


@dataclass(frozen=True)
class ActuatorConfig:
    motor: MotorRecord
    ratio: float

    def __post_init__(self):
        if not (math.isfinite(self.ratio) and self.ratio > 0):
            raise DomainError(f"transmission ratio must be positive, got {self.ratio!r}")


@dataclass(frozen=True)
class EffectiveConstants:
    k_ta: float
    k_ma: float
    j_a: float


def effective_constants(cfg):
    """K_Ta = N*K_T, K_Ma = N*K_M, J_a = N^2*J_m."""
    n, m = cfg.ratio, cfg.motor
    return EffectiveConstants(n * m.need("k_t"), n * m.k_m_resolved, n * n * m.need("j_m"))


def ratio_for_torque(motor, torque_target, current_limit):
    """Smallest (real) reduction reaching ``torque_target`` at ``current_limit``."""
    _require_positive(torque_target=torque_target, current_limit=current_limit)
    return torque_target / (motor.need("k_t") * current_limit)


def ratio_for_matched_inertia(motor, reference):
    """Reduction giving ``motor`` the same reflected inertia as ``reference``."""
    return reference.ratio * math.sqrt(reference.motor.need("j_m") / motor.need("j_m"))


@dataclass(frozen=True)
class Comparison:
    """Actuator built from ``a`` relative to one built from ``b``.

    ``match`` says what was equalised between the two actuators. Ratios are a/b,
    so values above one favour ``a`` for K_Ta, K_Ma and below one for J_a.
    """

    a: str
    b: str
    match: str
    ratio_a: float
    ratio_b: float
    k_ta_ratio: float
    k_ma_ratio: float
    j_a_ratio: float
    s_m_advantage: float  # S_M,b / S_M,a
    s_t_advantage: float  # S_T,b / S_T,a

    @property
    def dominant(self):
        def pick(x):
            return self.a if x > 1 else self.b if x < 1 else "tie"
        return {"k_ta": pick(self.k_ta_ratio), "k_ma": pick(self.k_ma_ratio),
                "s_m": pick(self.s_m_advantage), "s_t": pick(self.s_t_advantage)}


def compare_at_matched_inertia(a, b, ratio_b=1.0):
    """Compare two motors behind transmissions chosen so that J_a is equal.

    The ratios come from the explicit matched-N construction; they equal
    ``sqrt(S_T,b/S_T,a)`` and ``sqrt(S_M,b/S_M,a)`` in closed form.
    """
    ref = ActuatorConfig(b, ratio_b)
    ratio_a = ratio_for_matched_inertia(a, ref)
    ea, eb = effective_constants(ActuatorConfig(a, ratio_a)), effective_constants(ref)
    return Comparison(
        a=a.name, b=b.name, match="inertia", ratio_a=ratio_a, ratio_b=ratio_b,
        k_ta_ratio=ea.k_ta / eb.k_ta, k_ma_ratio=ea.k_ma / eb.k_ma, j_a_ratio=ea.j_a / eb.j_a,
        s_m_advantage=responsiveness_metric(b) / responsiveness_metric(a),
        s_t_advantage=torque_specific_inertia(b) / torque_specific_inertia(a),
    )


def compare_at_matched_torque(a, b, ratio_b=1.0):
    """Compare two motors behind transmissions chosen so that K_Ta is equal."""
    ratio_a = ratio_b * b.need("k_t") / a.need("k_t")
    ea = effective_constants(ActuatorConfig(a, ratio_a))
    eb = effective_constants(ActuatorConfig(b, ratio_b))
    return Comparison(
        a=a.name, b=b.name, match="torque", ratio_a=ratio_a, ratio_b=ratio_b,
        k_ta_ratio=ea.k_ta / eb.k_ta, k_ma_ratio=ea.k_ma / eb.k_ma, j_a_ratio=ea.j_a / eb.j_a,
        s_m_advantage=responsiveness_metric(b) / responsiveness_metric(a),
        s_t_advantage=torque_specific_inertia(b) / torque_specific_inertia(a),
    )


def mechanical_time_constant(motor):
    """Time constant of the speed response to a q-axis voltage step.

    From J*dw/dt = (K_T/R)(V - K_B*w) the time constant is R*J/(K_T*K_B),
    i.e. J_m/K_M^2, the responsiveness metric.
    """
    return responsiveness_metric(motor)


@dataclass(frozen=True)
class ScalingPrediction:
    k_t_ratio: float
    k_t_per_mass_ratio: float
    k_t_per_inertia_ratio: float
    k_m_sq_ratio: float
    j_m_ratio: float

    def __mul__(self, other):
        return ScalingPrediction(*(x * y for x, y in zip(astuple(self), astuple(other))))


def scaling_prediction(r_g_ratio, l_ratio):
    """Property ratios predicted by ideal-motor scaling for a change in gap radius and length."""
    _require_positive(r_g_ratio=r_g_ratio, l_ratio=l_ratio)
    r, l = r_g_ratio, l_ratio
    return ScalingPrediction(
        k_t_ratio=r * r * l,
        k_t_per_mass_ratio=r,
        k_t_per_inertia_ratio=1.0 / r,
        k_m_sq_ratio=r ** 3 * l,
        j_m_ratio=r ** 3 * l,
    )


@dataclass(frozen=True)
class DeviationRow:
    quantity: str
    predicted: float
    measured: float

    @property
    def quotient(self):
        return self.measured / self.predicted


def scaling_deviation_report(a, b):
    """Predicted (from geometry) vs measured property ratios of ``a`` over ``b``."""
    p = scaling_prediction(a.need("gap_radius") / b.need("gap_radius"),
                           a.need("length") / b.need("length"))
    kt = a.need("k_t") / b.need("k_t")
    j = a.need("j_m") / b.need("j_m")
    km2 = (a.k_m_resolved / b.k_m_resolved) ** 2
    rows = [
        DeviationRow("K_T", p.k_t_ratio, kt),
        DeviationRow("K_T/m", p.k_t_per_mass_ratio, kt * b.need("mass") / a.need("mass")),
        DeviationRow("K_T/J_m", p.k_t_per_inertia_ratio, kt / j),
        DeviationRow("K_M^2", p.k_m_sq_ratio, km2),
        DeviationRow("J_m", p.j_m_ratio, j),
        DeviationRow("S_M", p.j_m_ratio / p.k_m_sq_ratio, j / km2),
        DeviationRow("S_T", p.j_m_ratio / p.k_t_ratio ** 2, j / kt ** 2),
    ]
    return rows
