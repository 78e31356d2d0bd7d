from importlib import resources

import pytest

from qddsel.motor_core import MotorRecord


@pytest.fixture
def reference_path():
    return str(resources.files("qddsel") / "data" / "reference_motors.csv")


@pytest.fixture
def ri50():
    return MotorRecord(
        "RI50", "wye", r_phase=0.705, l_eff=2.559e-3, k_t=0.105, k_b=0.094, k_m=0.118,
        j_m=9.01e-6, mass=0.193, gap_radius=0.0146, length=0.016,
        sigma={"r_phase": 0.003, "k_t": 0.002, "k_b": 0.002, "k_m": 0.003, "j_m": 1.8e-6},
    )


@pytest.fixture
def u8():
    return MotorRecord(
        "U8", "delta", r_phase=0.279, l_eff=6.9e-5, k_t=0.14, k_m=0.23, j_m=1.2e-4,
        mass=0.242, gap_radius=0.0408, length=0.008,
    )


@pytest.fixture
def unit_motor():
    return MotorRecord("unit", r_phase=1, l_eff=1, k_t=1, k_b=1, k_m=1, j_m=1, mass=1,
                       gap_radius=1, length=1, r_th=1)
