import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gemlens.errors import EdgeLeak, EmptyList, ZeroFocal
from gemlens.medium import mhz
from gemlens.phasespace import (
    RB87_D1_OMEGA0,
    Envelope,
    RayMatrix,
    TimeGrid,
    apply_temporal_propagation,
    apply_time_lens,
    chirp_rate,
    check_edges,
    compose,
    lens_matrix,
    propagation_matrix,
    to_envelope,
    to_spectrum,
    wigner,
)


def gaussian_env(n=512, span=40.0, sigma=1.0, center=0.0):
    g = TimeGrid.centered(span, n)
    return Envelope(g, np.exp(-((g.t - center) ** 2) / (2 * sigma**2)))


# -- transforms --------------------------------------------------------------

def test_gaussian_self_transform():
    env = gaussian_env()
    spec = to_spectrum(env)
    expected = np.exp(-spec.omega**2 / 2)  # unitary convention keeps the width
    assert np.allclose(spec.samples, expected, atol=1e-10)
    assert spec.omega[np.argmax(spec.power)] == pytest.approx(0.0, abs=1e-12)


def test_spike_has_flat_spectrum():
    g = TimeGrid(0.0, 0.1, 256)
    a = np.zeros(256)
    a[100] = 1.0
    p = to_spectrum(Envelope(g, a)).power
    assert np.ptp(p) < 1e-14 * p.max()


def test_spectrum_matches_brute_force_sum():
    g = TimeGrid(-3.0, 0.05, 200)
    rng = np.random.default_rng(1)
    a = rng.normal(size=200) + 1j * rng.normal(size=200)
    spec = to_spectrum(Envelope(g, a))
    # direct evaluation of the discretized definition
    w = spec.omega[::17]
    direct = np.array([np.sum(a * np.exp(-1j * x * g.t)) for x in w]) * g.dt / math.sqrt(2 * math.pi)
    assert np.allclose(spec.samples[::17], direct, atol=1e-12)


def test_two_pulse_fringe_period():
    g = TimeGrid.centered(80.0, 4096)
    a = np.exp(-((g.t - 2.5) ** 2) / 0.5) + np.exp(-((g.t + 2.5) ** 2) / 0.5)
    spec = to_spectrum(Envelope(g, a))
    p = spec.power
    w = spec.omega
    mins = [w[i] for i in range(1, p.size - 1) if p[i] < p[i - 1] and p[i] < p[i + 1] and abs(w[i]) < 4]
    spacing = np.diff(mins).mean()
    assert spacing == pytest.approx(2 * math.pi / 5.0, rel=0.01)  # 1.2566 rad/us


def test_round_trip_and_parseval():
    env = gaussian_env(center=1.3).scaled(1 + 2j)
    spec = to_spectrum(env)
    back = to_envelope(spec)
    assert np.allclose(back.samples, env.samples, atol=1e-12)
    assert spec.energy() == pytest.approx(env.energy(), rel=1e-12)


def test_check_edges():
    check_edges(gaussian_env())
    g = TimeGrid(0.0, 0.1, 100)
    with pytest.raises(EdgeLeak):
        check_edges(Envelope(g, np.ones(100)))


# -- Wigner ------------------------------------------------------------------

def test_wigner_gaussian_matches_closed_form():
    env = gaussian_env(n=256, span=24.0)
    w = wigner(env)
    T, O = np.meshgrid(w.t, w.omega, indexing="ij")
    # W = (1/sqrt(2 pi)) * integral a(t+x/2) a*(t-x/2) e^{-i w x} dx, a = exp(-t^2/2)
    closed = 2 * np.exp(-(T**2) - O**2) * math.sqrt(math.pi) / math.sqrt(2 * math.pi)
    assert np.max(np.abs(w.values - closed)) < 1e-8 * closed.max()
    i, j = np.unravel_index(np.argmax(w.values), w.values.shape)
    assert abs(w.t[i]) < 1e-12 and abs(w.omega[j]) < 1e-12


def test_wigner_point_against_quadrature():
    from scipy.integrate import quad

    env = gaussian_env(n=256, span=24.0, sigma=1.3, center=0.4)
    w = wigner(env)
    i, j = 250, w.omega.size // 2 + 7
    t, om = w.t[i], w.omega[j]

    def a(x):
        return math.exp(-((x - 0.4) ** 2) / (2 * 1.3**2))

    val = quad(lambda x: a(t + x / 2) * a(t - x / 2) * math.cos(om * x), -30, 30, limit=200)[0]
    assert w.values[i, j] == pytest.approx(val / math.sqrt(2 * math.pi), abs=1e-9)


def test_wigner_even_envelope_symmetry():
    w = wigner(gaussian_env(n=128, span=20.0))
    # omega lattice is symmetric apart from its lowest point
    assert np.allclose(w.values[:, 1:], w.values[:, 1:][:, ::-1], atol=1e-12)


def test_wigner_cat_state_ridge():
    g = TimeGrid.centered(40.0, 512)
    a = np.exp(-((g.t - 6) ** 2) / 2) + np.exp(-((g.t + 6) ** 2) / 2)
    w = wigner(Envelope(g, a))
    mid = np.argmin(np.abs(w.t))
    ridge = w.values[mid]
    assert ridge.min() < -0.5 * ridge.max()
    # blobs positive at the pulse centres
    for tc in (-6, 6):
        k = np.argmin(np.abs(w.t - tc))
        assert w.values[k, np.argmin(np.abs(w.omega))] > 0


def test_wigner_marginals():
    g = TimeGrid.centered(30.0, 256)
    a = np.exp(-((g.t - 3) ** 2) / 1.5) + 0.7j * np.exp(-((g.t + 3) ** 2) / 1.5)
    env = Envelope(g, a)
    w = wigner(env)
    tm = w.time_marginal()[::2]
    assert np.linalg.norm(tm - env.intensity) / np.linalg.norm(env.intensity) < 1e-8
    # frequency marginal against a direct DTFT on the Wigner omega lattice
    direct = np.array([np.sum(a * np.exp(-1j * x * g.t)) for x in w.omega]) * g.dt / math.sqrt(2 * math.pi)
    pw = np.abs(direct) ** 2
    fm = w.frequency_marginal()
    assert np.linalg.norm(fm - pw) / np.linalg.norm(pw) < 1e-8


# -- ray matrices ------------------------------------------------------------

def test_lens_identities():
    assert lens_matrix(math.inf).as_array().tolist() == [[1, 0], [0, 1]]
    assert lens_matrix(9.6e3).c == pytest.approx(-1.04e-4, abs=5e-7)
    with pytest.raises(ZeroFocal):
        lens_matrix(0)
    assert propagation_matrix(0).as_array().tolist() == [[1, 0], [0, 1]]
    with pytest.raises(EmptyList):
        compose([])
    assert compose([RayMatrix.identity()]) == RayMatrix.identity()


@pytest.mark.parametrize("f", [1.0, 9.6e3, -3.0])
def test_fourier_cascade(f):
    m = compose([lens_matrix(f), propagation_matrix(f), lens_matrix(f)]).as_array()
    assert np.allclose(m, [[0, f], [-1 / f, 0]], atol=1e-12, rtol=0)
    sq = compose([RayMatrix.from_array(m)] * 2).as_array()
    assert np.allclose(sq, -np.eye(2), atol=1e-12)


@given(st.floats(-1e6, 1e6).filter(lambda x: abs(x) > 1e-6), st.floats(-1e4, 1e4), st.floats(-1e4, 1e4))
@settings(max_examples=60, deadline=None)
def test_unimodular_and_group(f, d1, d2):
    assert lens_matrix(f).det == pytest.approx(1.0, abs=1e-12)
    p = propagation_matrix(d1) @ propagation_matrix(d2)
    q = propagation_matrix(d1 + d2)
    assert np.allclose(p.as_array(), q.as_array(), rtol=1e-12, atol=1e-9)


# -- time lens and dispersion ------------------------------------------------

def test_time_lens_is_pure_phase_with_slope_minus_alpha():
    alpha = mhz(0.04)
    f_t = RB87_D1_OMEGA0 / (alpha * 1e12)
    env = gaussian_env(n=4096, span=40.0, sigma=3.0)
    out = apply_time_lens(env, f_t)
    assert np.allclose(np.abs(out.samples), np.abs(env.samples), atol=1e-15)
    phase = np.unwrap(np.angle(out.samples))
    inst = np.gradient(phase, out.t)
    core = np.abs(out.t) < 5
    slope = np.polyfit(out.t[core], inst[core], 1)[0]
    # the lens shifts a point at time t to omega - alpha t
    assert slope == pytest.approx(-alpha, rel=1e-6)
    assert chirp_rate(RB87_D1_OMEGA0, f_t) == pytest.approx(alpha, rel=1e-12)
    back = apply_time_lens(out, -f_t)
    assert np.allclose(back.samples, env.samples, atol=1e-12)


def test_propagation_preserves_spectrum_and_delays():
    g = TimeGrid.centered(400.0, 8192)
    w1 = 1.5
    env = Envelope(g, np.exp(-(g.t**2) / (2 * 8.0**2)) * np.exp(1j * w1 * g.t))
    f_t = 2000.0
    out = apply_temporal_propagation(env, f_t)
    assert np.allclose(np.abs(to_spectrum(out).samples), np.abs(to_spectrum(env).samples), atol=1e-12)
    centroid = np.sum(out.t * out.intensity) / np.sum(out.intensity)
    # the delay f_t w1 / omega0, in us
    assert centroid == pytest.approx(f_t * w1 / env.omega0 * 1e12, rel=1e-3)


def test_lens_propagation_lens_gives_spectrum():
    omega0 = 1e6  # small carrier keeps the propagation GDD on the grid
    f_t = omega0 / (0.5 * 1e12)  # chirp 0.5 rad/us^2
    alpha = chirp_rate(omega0, f_t)
    g = TimeGrid.centered(120.0, 8192)
    a = np.exp(-((g.t - 2.5) ** 2) / 0.8) + np.exp(-((g.t + 2.5) ** 2) / 0.8)
    env = Envelope(g, a, omega0)
    out = apply_time_lens(apply_temporal_propagation(apply_time_lens(env, f_t), f_t), f_t)
    # exact DTFT of the input evaluated at omega = alpha t
    expect = np.abs(np.exp(-1j * np.outer(alpha * g.t, g.t)) @ a) ** 2
    got = out.intensity / out.intensity.max()
    expect = expect / expect.max()
    assert np.max(np.abs(got - expect)) < 1e-3
