"""Synthetic dynamometer used as ground truth for the identification pipeline.

Plants are integrated exactly under a zero-order hold; measurement noise is
white Gaussian on the recorded channels only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy import signal

from .errors import DomainError, UnresolvedFieldError
from .sysid import zoh_first_order
from .timeseries import TimeSeries

FILTER_ORDER = 4

# Calibrated so that the default plant (J=6.55e-4, B=2e-3, 0.5 N*m peak input,
# 60 s at 1100 Hz) fits with VAF in the 92-98 % band. Not measured values.
DEFAULT_TORQUE_NOISE = 0.005
DEFAULT_VELOCITY_NOISE = 1.9


@dataclass(frozen=True)
class SimConfig:
    true_j: float = 6.55e-4
    true_b: float = 2e-3
    duration: float = 60.0
    sample_rate: float = 1100.0
    bandwidth: float = 40.0
    amplitude: float = 0.5
    seed: int = 0
    torque_noise: float = DEFAULT_TORQUE_NOISE
    velocity_noise: float = DEFAULT_VELOCITY_NOISE
    k_t: Optional[float] = None
    k_b: Optional[float] = None
    r_phase: Optional[float] = None
    rotor_installed: Optional[bool] = None
    ratio: Optional[float] = None

    def __post_init__(self):
        for name in ("true_j", "duration", "sample_rate", "bandwidth"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise DomainError(f"{name} must be positive, got {v!r}")
        if not (math.isfinite(self.true_b) and self.true_b >= 0):
            raise DomainError(f"true_b must be non-negative, got {self.true_b!r}")
        if self.bandwidth >= self.sample_rate / 2:
            raise DomainError("excitation bandwidth must be below the Nyquist frequency")
        if self.torque_noise < 0 or self.velocity_noise < 0:
            raise DomainError("noise levels must be non-negative")
        if self.n_samples < 2:
            raise DomainError("duration too short for two samples")

    @property
    def n_samples(self):
        return int(round(self.duration * self.sample_rate))

    @property
    def noiseless(self):
        return replace(self, torque_noise=0.0, velocity_noise=0.0)

    @classmethod
    def from_motor(cls, motor, **kw):
        """Voltage-driven config from a motor record (J_m, K_T, K_B, R_phi)."""
        return cls(true_j=motor.need("j_m"), true_b=0.0, k_t=motor.need("k_t"),
                   k_b=motor.k_b_resolved, r_phase=motor.need("r_phase"), **kw)


def generate_excitation(cfg):
    """Seeded Gaussian white noise, low-passed at ``cfg.bandwidth``, peak-scaled to ``cfg.amplitude``.

    The 4th-order Butterworth is applied forward and backward, so the
    excitation has zero phase lag and twice the stop-band attenuation.
    """
    rng = np.random.default_rng([cfg.seed, 0])
    # filter start-up transients are discarded with the margin on both ends
    margin = int(math.ceil(20 * cfg.sample_rate / cfg.bandwidth))
    white = rng.standard_normal(cfg.n_samples + 2 * margin)
    sos = signal.butter(FILTER_ORDER, cfg.bandwidth, fs=cfg.sample_rate, output="sos")
    x = signal.sosfiltfilt(sos, white)[margin:margin + cfg.n_samples]
    return x * (cfg.amplitude / np.max(np.abs(x)))


def _noise(cfg, n, stream):
    return np.random.default_rng([cfg.seed, stream]).standard_normal(n)


def simulate_backdrive(cfg, torque):
    """Backdrive response ``J dw/dt = T - B w`` from rest, with sensor noise added."""
    torque = np.asarray(torque, dtype=float)
    w = zoh_first_order(torque, cfg.true_j, cfg.true_b, 1.0 / cfg.sample_rate)
    n = len(torque)
    chans = {
        "torque": torque + cfg.torque_noise * _noise(cfg, n, 1) if cfg.torque_noise else torque.copy(),
        "velocity": w + cfg.velocity_noise * _noise(cfg, n, 2) if cfg.velocity_noise else w,
    }
    return TimeSeries(cfg.sample_rate, chans, rotor_installed=cfg.rotor_installed, ratio=cfg.ratio)


def simulate_run(cfg):
    """Excitation plus backdrive simulation in one call."""
    return simulate_backdrive(cfg, generate_excitation(cfg))


def simulate_voltage_driven(cfg, v_q):
    """Speed response to a q-axis voltage: ``J dw/dt = (K_T/R)(V - K_B w)``.

    Equivalent to the backdrive plant with damping ``K_T K_B / R`` and input
    torque ``K_T V / R``; noise settings of ``cfg`` apply to the recorded
    velocity and torque.
    """
    missing = [s for s, v in (("K_T", cfg.k_t), ("K_B", cfg.k_b), ("R_phi", cfg.r_phase)) if v is None]
    if missing:
        raise UnresolvedFieldError(", ".join(missing))
    v_q = np.asarray(v_q, dtype=float)
    gain = cfg.k_t / cfg.r_phase
    w = zoh_first_order(gain * v_q, cfg.true_j, gain * cfg.k_b, 1.0 / cfg.sample_rate)
    torque = gain * (v_q - cfg.k_b * w)
    n = len(v_q)
    if cfg.torque_noise:
        torque = torque + cfg.torque_noise * _noise(cfg, n, 1)
    if cfg.velocity_noise:
        w = w + cfg.velocity_noise * _noise(cfg, n, 2)
    return TimeSeries(cfg.sample_rate, {"torque": torque, "velocity": w, "voltage": v_q})


def rise_time(t, y, fraction=1.0 - math.exp(-1.0), final=None):
    """First time ``y`` reaches ``fraction`` of ``final`` (default: last sample), linearly interpolated."""
    y = np.asarray(y, dtype=float)
    t = np.asarray(t, dtype=float)
    target = fraction * (y[-1] if final is None else final)
    idx = np.flatnonzero(y >= target) if target >= 0 else np.flatnonzero(y <= target)
    if not len(idx):
        raise DomainError("signal never reaches the requested fraction")
    k = idx[0]
    if k == 0:
        return float(t[0])
    return float(t[k - 1] + (target - y[k - 1]) * (t[k] - t[k - 1]) / (y[k] - y[k - 1]))


def step_time_constant(cfg, v0=1.0, periods=8.0):
    """Simulated 63.2 % rise time of the speed after a voltage step at t=0."""
    tau_hint = cfg.true_j * cfg.r_phase / (cfg.k_t * cfg.k_b)
    if periods * tau_hint > cfg.duration:
        cfg = replace(cfg, duration=periods * tau_hint)
    ts = simulate_voltage_driven(cfg, np.full(cfg.n_samples, v0))
    return rise_time(ts.time, ts["velocity"], final=v0 / cfg.k_b)


# ------------------------------------------------------- constant-fit test benches

def simulate_stall(k_t, levels=tuple(range(-8, 9)), segment=5.0, sample_rate=1100.0,
                   torque_noise=0.01, current_noise=0.0, seed=0):
    """Stalled-rotor current steps: torque = K_T * i plus transducer noise."""
    rng = np.random.default_rng([seed, 3])
    n_seg = int(round(segment * sample_rate))
    command = np.repeat(np.asarray(levels, dtype=float), n_seg)
    current = command + current_noise * rng.standard_normal(command.size)
    torque = k_t * current + torque_noise * rng.standard_normal(command.size)
    return TimeSeries(sample_rate, {"torque": torque, "velocity": np.zeros_like(torque),
                                    "current": current, "command": command})


def simulate_backemf(k_b, speeds=None, voltage_noise=0.1, seed=0):
    """Back-driven open-circuit test: returns ``(speed, v_q)`` with voltage noise."""
    rng = np.random.default_rng([seed, 4])
    speeds = np.linspace(20.0, 300.0, 15) if speeds is None else np.asarray(speeds, dtype=float)
    return speeds, k_b * speeds + voltage_noise * rng.standard_normal(speeds.size)
