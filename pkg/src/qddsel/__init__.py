"""Transmission-invariant motor selection metrics and dynamometer identification."""

from .motor_core import (
    LineMeasurement,
    MetricReport,
    MotorRecord,
    Winding,
    derive_km,
    metric_report,
    phase_from_line,
    responsiveness_metric,
    thermal_specific_torque,
    torque_specific_inertia,
)
from .actuator_design import (
    ActuatorConfig,
    compare_at_matched_inertia,
    effective_constants,
    mechanical_time_constant,
    ratio_for_matched_inertia,
    ratio_for_torque,
    scaling_deviation_report,
    scaling_prediction,
)

__version__ = "0.1.0"

__all__ = [
    "ActuatorConfig",
    "LineMeasurement",
    "MetricReport",
    "MotorRecord",
    "Winding",
    "compare_at_matched_inertia",
    "derive_km",
    "effective_constants",
    "mechanical_time_constant",
    "metric_report",
    "phase_from_line",
    "ratio_for_matched_inertia",
    "ratio_for_torque",
    "responsiveness_metric",
    "scaling_deviation_report",
    "scaling_prediction",
    "thermal_specific_torque",
    "torque_specific_inertia",
]
