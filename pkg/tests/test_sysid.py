import io
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qddsel.dyno_sim import SimConfig, simulate_backdrive, simulate_backemf, simulate_run, simulate_stall
from qddsel.errors import (
    DomainError,
    FormatError,
    InsufficientDataError,
    NegativeInertiaError,
    SegmentTooShortError,
    SingularFitError,
    UnidentifiableError,
    UndefinedVAFError,
)
from qddsel.sysid import (
    FirstOrderFit,
    TimeSeries,
    WelchParams,
    coherence_from_spectra,
    combine_fits,
    differential_inertia,
    first_order_gain,
    fit_constant,
    fit_first_order,
    identify,
    read_csv,
    spectra,
    stall_test_reduce,
    thin_ring_inertia,
    vaf,
    welch_tf,
    write_csv,
)


# -- line fits ----------------------------------------------------------------------

def test_fit_constant_exact_line():
    x = np.arange(5.0)
    fit = fit_constant(x, x)
    assert (fit.slope, fit.intercept, fit.r2) == pytest.approx((1.0, 0.0, 1.0))
    assert fit.slope_ci == pytest.approx(0.0, abs=1e-12)


def test_fit_constant_torque_current():
    rng = np.random.default_rng(0)
    i = np.arange(-8.0, 9.0)
    fit = fit_constant(i, 0.105 * i + 0.01 * rng.standard_normal(i.size))
    assert abs(fit.slope - 0.105) <= 0.002
    assert fit.slope_ci <= 0.002


def test_fit_constant_backemf():
    speed, v = simulate_backemf(0.094, seed=1)
    assert abs(fit_constant(speed, v).slope - 0.094) <= 0.002


def test_fit_constant_standard_error_oracle():
    # slope standard error from the textbook formula s / sqrt(Sxx)
    rng = np.random.default_rng(3)
    x = np.linspace(0, 1, 30)
    y = 2 * x + 1 + 0.1 * rng.standard_normal(30)
    fit = fit_constant(x, y)
    coef, cov = np.polyfit(x, y, 1, cov="unscaled")
    resid = y - np.polyval(coef, x)
    s2 = resid @ resid / (len(x) - 2)
    assert fit.slope == pytest.approx(coef[0], rel=1e-12)
    assert fit.slope_ci == pytest.approx(2 * math.sqrt(s2 * cov[0, 0]), rel=1e-9)


def test_fit_constant_errors():
    with pytest.raises(SingularFitError):
        fit_constant([1.0, 1.0, 1.0], [1.0, 2.0, 3.0])
    with pytest.raises(DomainError):
        fit_constant([1.0, 2.0], [1.0, 2.0])


# -- stall reduction ------------------------------------------------------------------

def _ts(torque, current, fs=100.0, command=None):
    ch = {"torque": torque, "velocity": np.zeros_like(torque), "current": current}
    if command is not None:
        ch["command"] = command
    return TimeSeries(fs, ch)


def test_stall_trim_discards_edges():
    fs = 100.0
    torque = np.full(500, 1.0)
    torque[:50] = 100.0  # first and last 0.5 s carry transients
    torque[-50:] = -100.0
    (t, i), = stall_test_reduce(_ts(torque, np.full(500, 2.0), fs), trim=0.5)
    assert (t, i) == (1.0, 2.0)


def test_stall_constant_signal_any_trim():
    for trim in (0.0, 0.5, 1.5):
        (t, _), = stall_test_reduce(_ts(np.full(500, 0.7), np.ones(500)), trim=trim)
        assert t == pytest.approx(0.7)


def test_stall_ramp_mean():
    torque = np.linspace(0.0, 1.0, 501)
    (t, _), = stall_test_reduce(_ts(torque, np.ones(501)), trim=0.5)
    assert t == pytest.approx(0.5)


def test_stall_segment_too_short():
    with pytest.raises(SegmentTooShortError):
        stall_test_reduce(_ts(np.ones(80), np.ones(80)), trim=0.5)


def test_stall_pipeline_recovers_kt():
    ts = simulate_stall(0.105, seed=4)
    pts = stall_test_reduce(ts)
    assert len(pts) == 17
    fit = fit_constant([p[1] for p in pts], [p[0] for p in pts])
    assert abs(fit.slope - 0.105) <= 0.002


# -- Welch estimate ------------------------------------------------------------------

def test_welch_gain_matches_analytic_first_order():
    j, b = 6.55e-4, 1e-3
    cfg = SimConfig(true_j=j, true_b=b, duration=120).noiseless
    u = np.random.default_rng(1).standard_normal(cfg.n_samples)
    fr = welch_tf(simulate_backdrive(cfg, u), params=WelchParams(nperseg=4096))
    m = (fr.frequencies >= 1) & (fr.frequencies <= 40)
    rel = fr.magnitude[m] / first_order_gain(fr.frequencies[m], j, b)
    assert np.all(np.abs(rel - 1) <= 0.05)


def test_welch_passthrough():
    x = np.random.default_rng(2).standard_normal(20000)
    fr = welch_tf(TimeSeries(1000.0, {"torque": x, "velocity": x.copy()}))
    np.testing.assert_allclose(fr.gain, 1.0, atol=1e-9)
    np.testing.assert_allclose(fr.coherence, 1.0, atol=1e-9)


def test_welch_independent_noise_low_coherence():
    rng = np.random.default_rng(3)
    n = 1024 * 64
    fr = welch_tf(TimeSeries(1024.0, {"torque": rng.standard_normal(n), "velocity": rng.standard_normal(n)}))
    assert fr.segments >= 32
    # expected coherence of independent signals is about 1/K for K averages
    assert fr.coherence.mean() < 0.2
    assert fr.coherence.mean() == pytest.approx(1 / fr.segments, rel=1.0)
    assert fr.coherence.max() < 0.2


def test_welch_needs_two_segments():
    x = np.ones(1500)
    with pytest.raises(InsufficientDataError):
        welch_tf(TimeSeries(1100.0, {"torque": x, "velocity": x}))


def test_welch_rejects_non_power_of_two():
    ts = simulate_run(SimConfig(duration=5))
    with pytest.raises(DomainError):
        welch_tf(ts, params=WelchParams(nperseg=1000))


def test_default_segment_length():
    assert WelchParams().segment_length(1100.0) == 1024
    assert WelchParams().segment_length(1024.0) == 1024


def test_single_segment_coherence_is_one():
    rng = np.random.default_rng(7)
    x, y = rng.standard_normal(512), rng.standard_normal(512)
    _, sxx, syy, sxy = spectra(x, y, 1.0, WelchParams(nperseg=512))
    coh = coherence_from_spectra(sxx, syy, sxy)[1:-1]
    np.testing.assert_allclose(coh, 1.0, rtol=1e-12)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), mix=st.floats(0.0, 1.0))
def test_coherence_bounded(seed, mix):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(4096)
    y = mix * x + (1 - mix) * rng.standard_normal(4096)
    fr = welch_tf(TimeSeries(256.0, {"torque": x, "velocity": y}))
    assert np.all((fr.coherence >= 0) & (fr.coherence <= 1))


def test_welch_matches_analytic_in_coherent_band_calibrated_noise():
    cfg = SimConfig(seed=21)
    fr = welch_tf(simulate_run(cfg))
    m = (fr.frequencies >= 1) & (fr.frequencies <= 40) & (fr.coherence >= 0.95)
    assert m.sum() >= 5
    rel = fr.magnitude[m] / first_order_gain(fr.frequencies[m], cfg.true_j, cfg.true_b)
    assert np.all(np.abs(rel - 1) <= 0.05)


# -- first-order fit -----------------------------------------------------------------

def test_fit_calibrated_noise():
    cfg = SimConfig(seed=0)
    _, fit = identify(simulate_run(cfg))
    assert fit.j == pytest.approx(cfg.true_j, rel=0.05)
    assert 92 <= fit.vaf <= 100
    assert fit.j_ci is None  # single run


def test_fit_noiseless():
    cfg = SimConfig(seed=1).noiseless
    _, fit = identify(simulate_run(cfg))
    assert fit.j == pytest.approx(cfg.true_j, rel=5e-3)
    assert fit.b == pytest.approx(cfg.true_b, rel=5e-3)
    assert fit.vaf >= 99.9
    assert fit.bins_used > 0 and fit.stage2_evaluations > 0


def test_fit_pure_integrator():
    cfg = SimConfig(true_b=0.0, seed=2, duration=20).noiseless
    _, fit = identify(simulate_run(cfg))
    assert fit.b == pytest.approx(0.0, abs=1e-9)
    assert fit.j == pytest.approx(cfg.true_j, rel=5e-3)


def test_fit_unidentifiable():
    ts = simulate_run(SimConfig(duration=10))
    fr = welch_tf(ts)
    with pytest.raises(UnidentifiableError):
        fit_first_order(fr, ts, band=(100, 200))
    with pytest.raises(UnidentifiableError):
        fit_first_order(fr, ts, coherence_floor=1.01)


def test_fit_is_deterministic():
    ts = simulate_run(SimConfig(seed=3, duration=20))
    assert identify(ts)[1] == identify(ts)[1]


def test_fit_consistency_with_record_length():
    # noiseless: error shrinks with length down to the optimizer's floor
    floor = 1e-9
    errs = []
    for duration in (5, 20, 80):
        cfg = SimConfig(seed=4, duration=duration).noiseless
        _, fit = identify(simulate_run(cfg))
        errs.append(abs(fit.j / cfg.true_j - 1))
    assert max(errs) < 1e-6
    for a, b in zip(errs, errs[1:]):
        assert b <= max(a, floor)


def test_combine_fits_ci():
    fits = [FirstOrderFit(j, 1e-3, 95.0) for j in (6.0e-4, 7.0e-4)]
    pooled = combine_fits(fits)
    assert pooled.j == pytest.approx(6.5e-4)
    assert pooled.j_ci == pytest.approx(2 * np.std([6.0e-4, 7.0e-4], ddof=1))
    assert pooled.runs == 2
    assert combine_fits(fits[:1]).j_ci is None


# -- VAF -----------------------------------------------------------------------------

def test_vaf_definitions():
    y = np.sin(np.linspace(0, 10, 200))
    assert vaf(y, y) == 100.0
    assert vaf(y, np.full_like(y, y.mean())) == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(UndefinedVAFError):
        vaf(np.ones(5), np.zeros(5))


def test_vaf_equal_variance_noise_is_zero():
    # var(y - (y + n)) = var(n) = var(y)  =>  VAF ~ 0
    rng = np.random.default_rng(5)
    y = rng.standard_normal(200_000)
    assert vaf(y, y + rng.standard_normal(y.size)) == pytest.approx(0.0, abs=1.5)


@given(c=st.floats(-1e3, 1e3), k=st.floats(0.01, 100).flatmap(lambda v: st.sampled_from([v, -v])))
def test_vaf_invariances(c, k):
    rng = np.random.default_rng(0)
    y = rng.standard_normal(100)
    yh = y + 0.3 * rng.standard_normal(100)
    base = vaf(y, yh)
    assert vaf(y + c, yh + c) == pytest.approx(base, abs=1e-6)
    assert vaf(k * y, k * yh) == pytest.approx(base, abs=1e-9)


# -- inertia -------------------------------------------------------------------------

def test_differential_inertia_reference_values():
    jm, ci = differential_inertia((6.55e-4, 0.95e-4), (1.48e-4, 0.08e-4), 7.5)
    assert float(f"{jm:.3g}") == 9.01e-6
    assert ci == pytest.approx(math.hypot(0.95e-4, 0.08e-4) / 56.25)
    assert 1.5e-6 <= ci <= 2.1e-6


def test_differential_inertia_trivial_and_errors():
    assert differential_inertia(2e-4, 1e-4, 1)[0] == pytest.approx(1e-4)
    with pytest.raises(NegativeInertiaError):
        differential_inertia(1e-4, 2e-4, 7.5)
    with pytest.raises(DomainError):
        differential_inertia(2e-4, 1e-4, 0)


@given(a=st.floats(1e-6, 1e-2), c=st.floats(1e-6, 1e-2))
def test_differential_inertia_offset_cancels(a, c):
    assert differential_inertia(a + c, c, 1)[0] == pytest.approx(a, rel=1e-9, abs=1e-18)


def test_differential_inertia_ci_unavailable_for_single_runs():
    assert differential_inertia(FirstOrderFit(2e-4, 0, 99), FirstOrderFit(1e-4, 0, 99), 2)[1] is None


def test_thin_ring():
    j, s = thin_ring_inertia(0.034, 0.0126, 0.0005, 0.0005)
    assert float(f"{j:.2g}") == 5.4e-6
    assert s == pytest.approx(j * math.hypot(0.0005 / 0.034, 2 * 0.0005 / 0.0126))
    assert s == pytest.approx(0.44e-6, abs=0.01e-6)
    assert thin_ring_inertia(1, 1) == (1, 0.0)


def test_pipeline_roundtrip_recovers_rotor_inertia():
    n, j_nr, j_m = 7.5, 1.48e-4, 9.01e-6
    j_r = j_nr + n * n * j_m
    fits = {}
    for key, j in (("r", j_r), ("nr", j_nr)):
        runs = []
        for amp, seed in ((0.5, 10), (1.0, 11)):
            cfg = SimConfig(true_j=j, true_b=2e-3, amplitude=amp, seed=seed,
                            velocity_noise=SimConfig().velocity_noise * amp * math.sqrt(j_r / j))
            runs.append(identify(simulate_run(cfg))[1])
        fits[key] = combine_fits(runs)
    est, ci = differential_inertia(fits["r"], fits["nr"], n)
    assert est == pytest.approx(j_m, rel=0.10)
    assert ci is not None


# -- CSV -----------------------------------------------------------------------------

def test_csv_roundtrip(tmp_path):
    cfg = SimConfig(duration=1.0, seed=6, rotor_installed=True, ratio=7.5)
    ts = simulate_run(cfg)
    p = tmp_path / "run.csv"
    write_csv(ts, p)
    back = read_csv(p)
    assert back.sample_rate == pytest.approx(cfg.sample_rate, rel=1e-12)
    assert back.rotor_installed is True and back.ratio == 7.5
    np.testing.assert_array_equal(back["velocity"], ts["velocity"])
    np.testing.assert_array_equal(back["torque"], ts["torque"])


def test_csv_rejects_nan_and_jitter():
    good = "time_s,torque_nm,velocity_rad_s\n0,1,2\n0.001,1,2\n0.002,1,2\n"
    assert len(read_csv(io.StringIO(good))) == 3
    with pytest.raises(FormatError):
        read_csv(io.StringIO(good.replace("0.001,1,2", "0.001,nan,2")))
    with pytest.raises(FormatError, match="resample"):
        read_csv(io.StringIO(good.replace("0.001,1,2", "0.0012,1,2")))
    with pytest.raises(FormatError):
        read_csv(io.StringIO("t,torque,velocity\n0,1,2\n"))
    # jitter under 1 % of the period is accepted
    assert len(read_csv(io.StringIO(good.replace("0.001,1,2", "0.001005,1,2")))) == 3


def test_timeseries_invariants():
    with pytest.raises(DomainError):
        TimeSeries(100.0, {"torque": np.ones(3), "velocity": np.ones(4)})
    with pytest.raises(DomainError):
        TimeSeries(0.0, {"torque": np.ones(3), "velocity": np.ones(3)})
    with pytest.raises(FormatError):
        TimeSeries(1.0, {"torque": np.array([1.0, np.inf]), "velocity": np.ones(2)})
