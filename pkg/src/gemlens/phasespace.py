"""Chronocyclic phase-space tools: envelopes, spectra, Wigner maps, ray matrices.

Units: time in us, angular frequency in rad/us (relative to the carrier).
The carrier ``omega0`` is kept in rad/s and the focal length ``f_t`` in s, as
in the optics literature; both only ever enter through the ratio
``omega0 / f_t`` (a chirp rate) which is converted to rad/us^2 here.

Fourier convention, fixed for the whole package::

    A~(w) = 1/sqrt(2 pi) * integral A(t) exp(-i w t) dt
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import EdgeLeak, EmptyList, ZeroFocal

# 1 s^2 expressed in us^2
US2_PER_S2 = 1e12
SPEED_OF_LIGHT = 299_792_458.0
EDGE_TOLERANCE = 1e-6


def carrier_from_wavelength(wavelength_m: float) -> float:
    """Angular optical frequency (rad/s) of a vacuum wavelength."""
    return 2 * math.pi * SPEED_OF_LIGHT / wavelength_m


RB87_D1_OMEGA0 = carrier_from_wavelength(795e-9)


@dataclass(frozen=True)
class TimeGrid:
    t0: float
    dt: float
    n: int

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ValueError(f"dt must be positive and finite, got {self.dt}")
        if int(self.n) != self.n or self.n < 2:
            raise ValueError(f"n must be an integer >= 2, got {self.n}")
        if not math.isfinite(self.t0):
            raise ValueError("t0 must be finite")

    @property
    def t(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n)

    @property
    def span(self) -> float:
        return self.n * self.dt

    @classmethod
    def centered(cls, span: float, n: int) -> "TimeGrid":
        """Grid of ``n`` points covering ``[-span/2, span/2)``."""
        dt = span / n
        return cls(-span / 2, dt, n)


@dataclass(frozen=True, eq=False)
class Envelope:
    """Slowly varying complex amplitude A(t) in sqrt(photons/us)."""

    grid: TimeGrid
    samples: np.ndarray
    omega0: float = RB87_D1_OMEGA0

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=complex)
        if s.ndim != 1 or s.size != self.grid.n:
            raise ValueError(f"expected {self.grid.n} samples, got shape {s.shape}")
        if not np.all(np.isfinite(s)):
            raise ValueError("envelope samples must be finite")
        if not self.omega0 > 0:
            raise ValueError("omega0 must be positive")
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)

    @property
    def t(self) -> np.ndarray:
        return self.grid.t

    @property
    def intensity(self) -> np.ndarray:
        return np.abs(self.samples) ** 2

    def energy(self) -> float:
        return float(np.sum(self.intensity) * self.grid.dt)

    def scaled(self, factor: complex) -> "Envelope":
        return Envelope(self.grid, self.samples * factor, self.omega0)

    def normalized(self, photons: float) -> "Envelope":
        """Rescale so that the integrated intensity equals ``photons``."""
        e = self.energy()
        if e == 0:
            raise ValueError("cannot normalize an all-zero envelope")
        return self.scaled(math.sqrt(photons / e))


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Spectral amplitude on the lattice conjugate to a TimeGrid.

    ``omega`` is increasing (fft-shifted); ``t0`` and ``dt`` describe the time
    grid the spectrum was computed from so the transform can be inverted.
    """

    omega: np.ndarray
    samples: np.ndarray
    t0: float = 0.0
    dt: float = 1.0
    omega0: float = RB87_D1_OMEGA0

    @property
    def domega(self) -> float:
        return 2 * math.pi / (self.omega.size * self.dt)

    @property
    def power(self) -> np.ndarray:
        return np.abs(self.samples) ** 2

    def energy(self) -> float:
        return float(np.sum(self.power) * self.domega)


@dataclass(frozen=True, eq=False)
class WignerMap:
    t: np.ndarray
    omega: np.ndarray
    values: np.ndarray  # shape (t.size, omega.size)
    meta: dict = field(default_factory=dict)

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0])

    @property
    def domega(self) -> float:
        return float(self.omega[1] - self.omega[0])

    def time_marginal(self) -> np.ndarray:
        """Integral over omega, divided by the documented normalization."""
        return self.values.sum(axis=1) * self.domega / self.meta["marginal_scale"]

    def frequency_marginal(self) -> np.ndarray:
        return self.values.sum(axis=0) * self.dt / self.meta["marginal_scale"]

    def moments(self) -> tuple[np.ndarray, np.ndarray]:
        """Centroid and covariance of (t, omega) under |W| weighting by W."""
        w = self.values
        tot = w.sum()
        T, O = np.meshgrid(self.t, self.omega, indexing="ij")
        mt = (w * T).sum() / tot
        mo = (w * O).sum() / tot
        ctt = (w * (T - mt) ** 2).sum() / tot
        coo = (w * (O - mo) ** 2).sum() / tot
        cto = (w * (T - mt) * (O - mo)).sum() / tot
        return np.array([mt, mo]), np.array([[ctt, cto], [cto, coo]])


def to_spectrum(env: Envelope) -> Spectrum:
    g = env.grid
    omega = 2 * math.pi * np.fft.fftshift(np.fft.fftfreq(g.n, g.dt))
    raw = np.fft.fftshift(np.fft.fft(env.samples))
    samples = g.dt / math.sqrt(2 * math.pi) * np.exp(-1j * omega * g.t0) * raw
    return Spectrum(omega, samples, g.t0, g.dt, env.omega0)


def to_envelope(spec: Spectrum) -> Envelope:
    n = spec.omega.size
    grid = TimeGrid(spec.t0, spec.dt, n)
    raw = spec.samples * np.exp(1j * spec.omega * spec.t0) * math.sqrt(2 * math.pi) / spec.dt
    samples = np.fft.ifft(np.fft.ifftshift(raw))
    return Envelope(grid, samples, spec.omega0)


def _fourier_upsample2(a: np.ndarray) -> np.ndarray:
    """Band-limited interpolation onto a grid with half the spacing."""
    n = a.size
    f = np.fft.fft(a)
    g = np.zeros(2 * n, dtype=complex)
    h = n // 2
    g[:h] = f[:h]
    g[-(n - h):] = f[h:]
    if n % 2 == 0:
        # split the Nyquist bin symmetrically so real input stays real
        g[h] = 0.5 * f[h]
        g[-h] = 0.5 * f[h]
    return 2 * np.fft.ifft(g)


def check_edges(env: Envelope, tol: float = EDGE_TOLERANCE) -> None:
    mag = np.abs(env.samples)
    peak = mag.max()
    if peak == 0:
        return
    edge = max(mag[0], mag[-1])
    if edge >= tol * peak:
        raise EdgeLeak(
            f"envelope edge magnitude {edge / peak:.3g} of peak exceeds {tol:g}; widen the grid"
        )


def wigner(env: Envelope) -> WignerMap:
    """Chronocyclic Wigner function of ``env``.

    The envelope is interpolated onto a grid of spacing dt/2; lags run over
    the full (zero-padded) range so both marginals are exact sums.
    Marginals equal sqrt(2 pi) |A(t)|^2 and sqrt(2 pi) |A~(w)|^2; that factor
    is stored as ``meta['marginal_scale']``.
    """
    check_edges(env)
    g = env.grid
    a = _fourier_upsample2(env.samples)
    m = a.size  # 2n points, spacing h = dt/2
    h = g.dt / 2
    t = g.t0 + h * np.arange(m)
    L = 2 * m  # lag lattice, xi = k * dt
    k = np.arange(-(m - 1), m)
    idx = np.arange(m)[:, None]
    plus = idx + k[None, :]
    minus = idx - k[None, :]
    valid = (plus >= 0) & (plus < m) & (minus >= 0) & (minus < m)
    prod = np.where(valid, a[np.clip(plus, 0, m - 1)] * np.conj(a[np.clip(minus, 0, m - 1)]), 0)
    buf = np.zeros((m, L), dtype=complex)
    buf[:, : m] = prod[:, m - 1:]  # k >= 0
    buf[:, L - (m - 1):] = prod[:, : m - 1]  # k < 0 wrapped
    spec = np.fft.fft(buf, axis=1)
    xi_step = g.dt
    omega = 2 * math.pi * np.fft.fftfreq(L, xi_step)
    order = np.argsort(omega)
    values = np.real(spec[:, order]) * xi_step / math.sqrt(2 * math.pi)
    return WignerMap(
        t,
        omega[order],
        values,
        meta={"marginal_scale": math.sqrt(2 * math.pi), "t_unit": "us", "omega_unit": "rad/us"},
    )


@dataclass(frozen=True)
class RayMatrix:
    """2x2 map acting on the column (t, omega/omega0)."""

    a: float
    b: float
    c: float
    d: float

    @classmethod
    def identity(cls) -> "RayMatrix":
        return cls(1.0, 0.0, 0.0, 1.0)

    @classmethod
    def from_array(cls, m) -> "RayMatrix":
        m = np.asarray(m, dtype=float)
        return cls(m[0, 0], m[0, 1], m[1, 0], m[1, 1])

    def as_array(self) -> np.ndarray:
        return np.array([[self.a, self.b], [self.c, self.d]])

    @property
    def det(self) -> float:
        return self.a * self.d - self.b * self.c

    def __matmul__(self, other: "RayMatrix") -> "RayMatrix":
        return RayMatrix(
            self.a * other.a + self.b * other.c,
            self.a * other.b + self.b * other.d,
            self.c * other.a + self.d * other.c,
            self.c * other.b + self.d * other.d,
        )

    def __call__(self, t, w_rel):
        return self.a * t + self.b * w_rel, self.c * t + self.d * w_rel


def lens_matrix(f_t: float) -> RayMatrix:
    """Thin time lens; ``math.inf`` gives the identity."""
    if f_t == 0:
        raise ZeroFocal("time-lens focal length must be nonzero")
    return RayMatrix(1.0, 0.0, -1.0 / f_t, 1.0)


def propagation_matrix(f_t: float) -> RayMatrix:
    return RayMatrix(1.0, float(f_t), 0.0, 1.0)


def compose(ms: Sequence[RayMatrix]) -> RayMatrix:
    """Product ``ms[0] @ ms[1] @ ...``; the last element acts first."""
    ms = list(ms)
    if not ms:
        raise EmptyList("compose() needs at least one matrix")
    out = ms[0]
    for m in ms[1:]:
        out = out @ m
    return out


def chirp_rate(omega0: float, f_t: float) -> float:
    """omega0 / f_t converted to rad/us^2."""
    return omega0 / f_t / US2_PER_S2


def apply_time_lens(env: Envelope, f_t: float) -> Envelope:
    """Quadratic temporal phase whose Wigner point map is ``lens_matrix(f_t)``.

    Moves every phase-space point to omega - omega0 t / f_t, i.e. the
    samples are multiplied by exp(-i omega0 t^2 / (2 f_t)).
    """
    if f_t == 0:
        raise ZeroFocal("time-lens focal length must be nonzero")
    if math.isinf(f_t):
        return env
    rate = chirp_rate(env.omega0, f_t)
    t = env.t
    return Envelope(env.grid, env.samples * np.exp(-0.5j * rate * t * t), env.omega0)


def apply_temporal_propagation(env: Envelope, f_t: float) -> Envelope:
    """Quadratic spectral phase exp(-i f_t w^2 / (2 omega0)): delay f_t w / omega0."""
    if f_t == 0:
        return env
    spec = to_spectrum(env)
    gdd = f_t / env.omega0 * US2_PER_S2  # us^2
    phased = Spectrum(
        spec.omega,
        spec.samples * np.exp(-0.5j * gdd * spec.omega**2),
        spec.t0,
        spec.dt,
        spec.omega0,
    )
    return to_envelope(phased)
