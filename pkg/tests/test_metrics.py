import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gemlens.errors import InvalidParams, NoPeak
from gemlens.medium import DensityProfile, EnsembleConfig, coherence_time, mhz
from gemlens.metrics import (
    TEMPORAL_FACTOR,
    EfficiencySpectrum,
    analyze_waveform,
    averaged_efficiency,
    build_efficiency_map,
    eta0_uniform,
    fit_decay_time,
    fringe_period,
    fwhm,
    gdd_equivalent,
    linear_fit,
    resolution_fwhm,
    resolution_prefactor,
    resolution_spectrum_at_zero,
)
from gemlens.phasespace import RB87_D1_OMEGA0, carrier_from_wavelength

# FWHM of (1 + e - 2 sqrt(e) cos w) / (4 w^2 + 1), found independently with
# mpmath (50 digits, findroot on the half-maximum equation) and frozen here
PREFACTOR_ORACLE = 0.892677110801916


# -- efficiency ----------------------------------------------------------------

def test_eta0_uniform_values():
    assert eta0_uniform(0.0, 1.0) == 0.0
    assert eta0_uniform(70.0, 2 * math.pi * 10) == pytest.approx((1 - math.exp(-7)) ** 2)
    assert eta0_uniform(70.0, 2 * math.pi * 10) == pytest.approx(0.998, abs=1e-3)
    assert eta0_uniform(70.0, 2 * math.pi * 40) == pytest.approx(0.683, abs=1e-3)
    with pytest.raises(InvalidParams):
        eta0_uniform(-1.0, 1.0)


@given(st.floats(0.1, 200), st.floats(0.1, 200), st.floats(1.0, 1000.0))
@settings(max_examples=60, deadline=None)
def test_eta0_uniform_monotone_and_bounded(od1, od2, tb):
    lo, hi = sorted((od1, od2))
    assert 0 <= eta0_uniform(lo, tb) <= eta0_uniform(hi, tb) <= 1
    assert eta0_uniform(hi, tb) >= eta0_uniform(hi, tb * 1.5)


def test_averaged_efficiency_flat_band():
    w = np.linspace(-2, 2, 4001)
    eta = np.where(np.abs(w) <= 1, 0.6, 0.0)
    spec = EfficiencySpectrum(w, eta)
    assert averaged_efficiency(spec) == pytest.approx(0.6 * (math.e**2 - 1) / (2 * math.e**2), rel=1e-3)
    assert TEMPORAL_FACTOR == pytest.approx(0.4323, abs=1e-4)
    assert averaged_efficiency(EfficiencySpectrum(w, np.zeros_like(w))) == 0.0


@given(st.floats(0.5, 80.0), st.floats(0.3, 3.0))
@settings(max_examples=30, deadline=None)
def test_averaged_bounded_by_peak(od, beta):
    cfg = EnsembleConfig(od=od)
    spec = EfficiencySpectrum.from_config(cfg, beta, 25.0)
    assert averaged_efficiency(spec) <= spec.eta0.max() * TEMPORAL_FACTOR + 1e-12


def test_mean_efficiency_at_tauB_13():
    from scipy.optimize import brentq

    cfg = EnsembleConfig(od=70)
    tau = coherence_time(cfg, mhz(4.7))

    def tb(beta):
        return tau * EfficiencySpectrum.from_config(cfg, beta, tau).bandwidth / (2 * math.pi)

    beta = brentq(lambda b: tb(b) - 13.0, mhz(0.1), mhz(3.0), xtol=1e-10)
    eta = averaged_efficiency(EfficiencySpectrum.from_config(cfg, beta, tau))
    # the ~20 % contour passes through tau B = 2 pi x 13
    assert 0.2 / 1.5 <= eta <= 0.2 * 1.5


# -- resolution ----------------------------------------------------------------

def test_resolution_spectrum_at_zero():
    assert resolution_spectrum_at_zero() == pytest.approx(1 + math.e - 2 * math.sqrt(math.e), abs=1e-12)
    assert resolution_spectrum_at_zero() == pytest.approx(0.4209, abs=1e-4)


def test_resolution_prefactor_oracle():
    from scipy.optimize import bisect

    e = math.e

    def s(w):
        return (1 + e - 2 * math.sqrt(e) * math.cos(w)) / (4 * w * w + 1)

    half = 0.5 * s(0.0)
    w_half = bisect(lambda w: s(w) - half, 1e-6, 3.0, xtol=1e-15)
    assert resolution_prefactor() == pytest.approx(2 * w_half / (2 * math.pi), abs=1e-12)
    assert resolution_prefactor() == pytest.approx(PREFACTOR_ORACLE, abs=1e-12)


@pytest.mark.parametrize("tau", [1.0, 10.0, 100.0])
def test_resolution_scales_as_inverse_tau(tau):
    assert resolution_fwhm(tau) * tau / (2 * math.pi) == pytest.approx(resolution_prefactor(), rel=1e-6)


def test_gdd_equivalent():
    omega0 = carrier_from_wavelength(795e-9)
    assert gdd_equivalent(9600.0, omega0) == pytest.approx(25.0, rel=0.03)
    assert gdd_equivalent(0.0, omega0) == 0.0
    assert gdd_equivalent(2 * 9600.0, RB87_D1_OMEGA0) == pytest.approx(2 * gdd_equivalent(9600.0, RB87_D1_OMEGA0))


# -- waveform analysis ---------------------------------------------------------

def test_gaussian_fwhm():
    t = np.linspace(-10, 10, 2001)
    r = analyze_waveform((t, np.exp(-(t**2) / 2)))
    assert r.fwhm == pytest.approx(2.355, rel=0.01)
    assert r.peaks == pytest.approx((0.0,), abs=1e-9)
    assert r.fringe_period is None


@pytest.mark.parametrize("T", [0.7, 2.0, 5.0])
def test_fringe_period_within_one_sample(T):
    t = np.arange(0, 40, 0.01)
    # cos^2(pi t / T) repeats every T
    assert fringe_period(t, np.cos(math.pi * t / T) ** 2) == pytest.approx(T, abs=0.01)


def test_flat_signal_has_no_peak():
    with pytest.raises(NoPeak):
        analyze_waveform((np.arange(100.0), np.ones(100)))


@given(st.floats(0.1, 1e3), st.floats(-50, 50))
@settings(max_examples=40, deadline=None)
def test_fwhm_invariant_under_scale_and_shift(scale, shift):
    t = np.linspace(-20, 20, 4001)
    y = np.exp(-(t**2) / 3) + 0.4 * np.exp(-((t - 4) ** 2) / 2)
    assert fwhm(t + shift, scale * y) == pytest.approx(fwhm(t, y), rel=1e-9)


def test_linear_and_decay_fits():
    f = linear_fit([1, 2, 3, 4], [2.5, 4.5, 6.5, 8.5])
    assert (f.slope, f.intercept, f.r2) == pytest.approx((2.0, 0.5, 1.0))
    t = np.linspace(0, 100, 101)
    eta0, tau = fit_decay_time(t, 0.3 * np.exp(-t / 20.0))
    assert (eta0, tau) == pytest.approx((0.3, 20.0), rel=1e-9)


# -- efficiency map --------------------------------------------------------------

def test_map_reproduces_uniform_law():
    cfg = EnsembleConfig(od=70, density=DensityProfile("uniform", 1.0))
    rabis = np.array([mhz(3.0), mhz(5.0)])
    betas = np.array([mhz(1.0), mhz(2.0)])
    for depth, od in (("solver", 70 / 4), ("literal", 70.0)):
        m = build_efficiency_map(cfg, rabis, betas, depth=depth)
        tauBL = m.tau * np.abs(m.beta)[None, :] * 1.0
        assert np.allclose(m.eta0_peak, eta0_uniform(od, tauBL), rtol=1e-12)


def test_map_bandwidth_linear_in_beta():
    cfg = EnsembleConfig(od=70)
    betas = mhz(np.array([0.5, 1.0, 1.5, 2.0, 2.5]))
    # fixed tau beta keeps the depth, so B scales exactly with beta
    rabis = np.array([mhz(4.7)])
    m = build_efficiency_map(cfg, rabis, betas)
    fit = linear_fit(betas, m.bandwidth[0])
    assert fit.r2 > 0.99
    assert abs(fit.intercept) < 0.1 * m.bandwidth[0].max()


def test_map_contours_and_trade_off():
    from gemlens.config import bundled_scenarios, load_sweep

    spec = load_sweep(bundled_scenarios()["efficiency_map"])
    m = build_efficiency_map(spec.ensemble, spec.rabis, spec.betas)
    assert m.eta_bar.shape == (8, 8)
    tb = m.tauB / (2 * math.pi)
    for k in range(-7, 8):
        cells = m.eta_bar[np.eye(8, k=k, dtype=bool)]
        assert np.ptp(cells) / cells.mean() < 0.2
    order = np.argsort(tb.ravel())
    assert np.all(np.diff(m.eta_bar.ravel()[order]) <= 1e-12)
    at40 = m.eta_bar[np.isclose(tb, 40.0, rtol=1e-3)]
    assert at40.size == 5
    assert np.all((0.04 / 1.5 <= at40) & (at40 <= 0.04 * 1.5))


def test_map_parallel_matches_serial():
    cfg = EnsembleConfig(od=70)
    rabis = mhz(np.array([3.0, 4.0, 5.0]))
    betas = mhz(np.array([1.0, 1.5]))
    a = build_efficiency_map(cfg, rabis, betas, jobs=1)
    b = build_efficiency_map(cfg, rabis, betas, jobs=2)
    assert a.eta_bar.tobytes() == b.eta_bar.tobytes()
    with pytest.raises(InvalidParams):
        build_efficiency_map(cfg, [], betas)


@pytest.mark.slow
def test_solver_backend_map_cell_close_to_analytic():
    cfg = EnsembleConfig(od=70)
    a = build_efficiency_map(cfg, [mhz(4.7)], [mhz(1.7)], backend="analytic")
    s = build_efficiency_map(cfg, [mhz(4.7)], [mhz(1.7)], backend="solver")
    assert s.bandwidth[0, 0] == pytest.approx(a.bandwidth[0, 0], rel=0.1)
    # the solver also includes off-resonant absorption, which the closed form omits
    assert 0.6 * a.eta_bar[0, 0] < s.eta_bar[0, 0] <= a.eta_bar[0, 0] * 1.05
