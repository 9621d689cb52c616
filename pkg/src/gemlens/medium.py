"""Atomic ensemble and the time-dependent fields acting on it.

All rates are angular (rad/us), lengths in cm, gradients in rad/us/cm.
Helpers ``mhz`` and friends convert the ordinary-frequency values used in
lab notes (2 pi x 1.7 MHz/cm, ...) to these units.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate

from .errors import InvalidParams, ZeroChirp, ZeroGradient

TWO_PI = 2 * math.pi


def mhz(x):
    """Ordinary frequency in MHz -> angular frequency in rad/us."""
    return TWO_PI * np.asarray(x, dtype=float) if np.ndim(x) else TWO_PI * float(x)


# Rb-87 D1 natural linewidth; the decay rate of |e> is not fixed by the experiment notes
GAMMA_D1 = mhz(5.75)
# Zeeman shift of |g> = F=2, m=2 (g_F = 1/2): mu_B g_F m = 1.3996 MHz/G
ZEEMAN_PER_GAUSS = mhz(1.3996 * 0.5 * 2)
COIL_GRADIENT_G_PER_A_CM = 0.08
# 0.35 G/cm/us current-reversal speed of the coil driver
DEFAULT_SLEW_LIMIT = ZEEMAN_PER_GAUSS * 0.35
SUPPORT_CUTOFF = 1e-4


def gradient_from_current(amps: float) -> float:
    """Coil current (A) -> Zeeman gradient beta (rad/us/cm)."""
    return amps * COIL_GRADIENT_G_PER_A_CM * ZEEMAN_PER_GAUSS


def gradient_from_gauss_per_cm(g_per_cm: float) -> float:
    return g_per_cm * ZEEMAN_PER_GAUSS


@dataclass(frozen=True, eq=False)
class DensityProfile:
    """Normalized atom distribution n(z)/N along the cloud (1/cm).

    ``kind`` is ``"uniform"`` (flat over ``[-length/2, length/2]``),
    ``"super_gaussian"`` (exp(-ln2 |2z/width|^order); FWHM equals ``width``,
    which defaults to ``length``) or ``"tabulated"`` (linear interpolation of
    ``value`` over ``z``). Super-Gaussian tails below 1e-4 of the peak are cut.
    """

    kind: str = "super_gaussian"
    length: float = 1.0
    order: int = 4
    width: Optional[float] = None
    z: Optional[Sequence[float]] = None
    value: Optional[Sequence[float]] = None
    _norm: float = field(init=False, repr=False, default=1.0)

    def __post_init__(self):
        if self.kind not in ("uniform", "super_gaussian", "tabulated"):
            raise InvalidParams(f"unknown density kind {self.kind!r}")
        if not self.length > 0:
            raise InvalidParams("cloud length must be positive")
        if self.kind == "super_gaussian":
            if self.order < 2 or self.order % 2:
                raise InvalidParams("super-Gaussian order must be an even integer >= 2")
            if self.width is None:
                object.__setattr__(self, "width", float(self.length))
            if not self.width > 0:
                raise InvalidParams("super-Gaussian width must be positive")
        if self.kind == "tabulated":
            if self.z is None or self.value is None:
                raise InvalidParams("tabulated density needs z and value arrays")
            z = np.asarray(self.z, float)
            v = np.asarray(self.value, float)
            if z.shape != v.shape or z.size < 2:
                raise InvalidParams("tabulated z and value must have equal length >= 2")
            if np.any(np.diff(z) <= 0):
                raise InvalidParams("tabulated z must be strictly increasing")
            if np.any(v < 0):
                raise InvalidParams("tabulated density must be nonnegative")
            object.__setattr__(self, "z", z)
            object.__setattr__(self, "value", v)
        lo, hi = self.support()
        total, _ = integrate.quad(self._raw, lo, hi, limit=200, points=self._kinks())
        if not total > 0:
            raise InvalidParams("density profile integrates to zero")
        object.__setattr__(self, "_norm", total)

    def _kinks(self):
        if self.kind == "tabulated":
            return list(self.z[1:-1])[:50] or None
        return None

    def _raw(self, z):
        z = np.asarray(z, dtype=float)
        lo, hi = self.support()
        inside = (z >= lo) & (z <= hi)
        if self.kind == "uniform":
            out = np.where(inside, 1.0, 0.0)
        elif self.kind == "super_gaussian":
            out = np.where(inside, np.exp(-math.log(2) * np.abs(2 * z / self.width) ** self.order), 0.0)
        else:
            out = np.interp(z, self.z, self.value, left=0.0, right=0.0)
        return out if out.ndim else float(out)

    def support(self) -> tuple[float, float]:
        if self.kind == "uniform":
            return -self.length / 2, self.length / 2
        if self.kind == "super_gaussian":
            half = 0.5 * self.width * (math.log(1 / SUPPORT_CUTOFF) / math.log(2)) ** (1 / self.order)
            return -half, half
        return float(self.z[0]), float(self.z[-1])

    def __call__(self, z):
        return self._raw(z) / self._norm

    def fwhm(self) -> float:
        zz = np.linspace(*self.support(), 20001)
        v = self(zz)
        above = zz[v >= 0.5 * v.max()]
        return float(above[-1] - above[0])


@dataclass(frozen=True, eq=False)
class EnsembleConfig:
    """Atomic medium. ``delta0=None`` means: cancel the control light shift."""

    od: float
    gamma: float = GAMMA_D1
    delta: float = mhz(70.0)
    delta0: Optional[float] = None
    density: DensityProfile = field(default_factory=DensityProfile)

    def __post_init__(self):
        if self.od < 0:
            raise InvalidParams("optical depth must be >= 0")
        if not self.gamma > 0:
            raise InvalidParams("gamma must be positive")
        if abs(self.delta) < 5 * self.gamma:
            warnings.warn(
                f"|delta| = {abs(self.delta):.3g} rad/us is not far detuned (< 5 gamma)",
                stacklevel=2,
            )

    def gn(self, z):
        """Resonant absorption coefficient g*n(z) in 1/cm; integrates to od."""
        return self.od * self.density(z)

    def light_shift(self, rabi, delta=None):
        d = self.delta if delta is None else delta
        return np.abs(rabi) ** 2 * d / (4 * d * d + self.gamma**2)

    def static_offset(self, nominal_rabi: float) -> float:
        if self.delta0 is not None:
            return self.delta0
        return -float(self.light_shift(nominal_rabi))


def decoherence_rate(cfg: EnsembleConfig, omega_rabi, delta=None):
    """Population (intensity) decay rate 1/tau induced by the control field."""
    d = cfg.delta if delta is None else delta
    return cfg.gamma * np.abs(omega_rabi) ** 2 / (4 * d * d + cfg.gamma**2)


def coherence_time(cfg: EnsembleConfig, omega_rabi) -> float:
    rate = decoherence_rate(cfg, omega_rabi)
    return math.inf if rate == 0 else 1.0 / float(rate)


def od_effective(cfg: EnsembleConfig, beta: float, tau: float, omega):
    """Per-frequency depth g n(omega/beta) / (tau |beta|).

    For a uniform cloud this is OD/(tau B) with B = |beta| L, the argument of
    the uniform-cloud efficiency law (without its 2 pi).
    """
    if beta == 0:
        raise ZeroGradient("Zeeman gradient must be nonzero")
    if not tau > 0:
        raise InvalidParams("tau must be positive")
    return cfg.gn(np.asarray(omega, float) / beta) / (tau * abs(beta))


# The light-atom equations realize a Raman absorption exponent of
# 2 pi * od_effective / 4 per frequency (see gem_depth); the uniform-cloud
# efficiency law is quoted with the bare od_effective.
GEM_DEPTH_FACTOR = 0.25


def gem_depth(cfg: EnsembleConfig, beta: float, tau: float, omega):
    """Per-frequency GEM absorption depth realized by the solver equations.

    A monochromatic write at detuning omega is absorbed as
    ``1 - exp(-2 pi gem_depth)``; corrections of relative order
    (gamma/delta)^2 are neglected.
    """
    return GEM_DEPTH_FACTOR * od_effective(cfg, beta, tau, omega)


def amplitude_response(cfg: EnsembleConfig, beta: float, tau: float, omega, depth: str = "solver"):
    """Single-pass amplitude efficiency 1 - exp(-2 pi d(omega)).

    ``depth="solver"`` uses ``gem_depth`` (the exponent realized by the
    light-atom equations), ``depth="literal"`` the bare ``od_effective``.
    """
    if depth == "solver":
        d = gem_depth(cfg, beta, tau, omega)
    elif depth == "literal":
        d = od_effective(cfg, beta, tau, omega)
    else:
        raise InvalidParams(f"unknown depth convention {depth!r}")
    return -np.expm1(-2 * math.pi * np.asarray(d, float))


def ssm_parabolic_coefficient(beta: float, alpha: float) -> float:
    """Coefficient c (rad/cm^2) of the imprinted phase -c z^2; c = beta^2/(2 alpha)."""
    if alpha == 0:
        raise ZeroChirp("chirp rate must be nonzero")
    return beta * beta / (2 * alpha)


def focal_from_chirp(omega0: float, alpha: float) -> float:
    """Time-lens focal length (s) from carrier (rad/s) and chirp (rad/s^2)."""
    if alpha == 0:
        raise ZeroChirp("chirp rate must be nonzero")
    return omega0 / alpha


def chirp_to_si(alpha_rad_per_us2: float) -> float:
    return alpha_rad_per_us2 * 1e12


@dataclass(frozen=True)
class ControlStage:
    """Control pulse: constant Rabi frequency with optional linear edges.

    During the stage the two-photon detuning gains ``alpha * (t - chirp_center)``;
    ``chirp_center`` defaults to the stage midpoint.
    """

    t_start: float
    t_end: float
    rabi: float
    alpha: float = 0.0
    chirp_center: Optional[float] = None
    rise: float = 0.0

    def __post_init__(self):
        if not self.t_end > self.t_start:
            raise InvalidParams(f"control stage ends before it starts ({self.t_start}, {self.t_end})")
        if self.rabi < 0:
            raise InvalidParams("Rabi frequency must be >= 0")
        if self.rise < 0 or 2 * self.rise > self.t_end - self.t_start:
            raise InvalidParams("rise time must fit twice inside the stage")
        if self.chirp_center is None:
            object.__setattr__(self, "chirp_center", 0.5 * (self.t_start + self.t_end))


@dataclass(frozen=True)
class ControlSchedule:
    stages: tuple = ()

    def __post_init__(self):
        stages = tuple(self.stages)
        for a, b in zip(stages, stages[1:]):
            if b.t_start < a.t_end:
                raise InvalidParams(
                    f"control stages overlap or are out of order: [{a.t_start}, {a.t_end}] "
                    f"then [{b.t_start}, {b.t_end}]"
                )
        object.__setattr__(self, "stages", stages)

    def _stage(self, t):
        for s in self.stages:
            if s.t_start <= t < s.t_end:
                return s
        return None

    def rabi(self, t: float) -> float:
        s = self._stage(t)
        if s is None:
            return 0.0
        if s.rise > 0:
            edge = min(t - s.t_start, s.t_end - t)
            if edge < s.rise:
                return s.rabi * edge / s.rise
        return s.rabi

    def chirp_offset(self, t: float) -> float:
        s = self._stage(t)
        if s is None or s.alpha == 0:
            return 0.0
        return s.alpha * (t - s.chirp_center)

    def nominal_rabi(self) -> float:
        return max((s.rabi for s in self.stages), default=0.0)


@dataclass(frozen=True)
class GradientTimeline:
    """Piecewise-linear beta(t) through ``points`` = ((t, beta), ...).

    Held constant outside the listed times. ``settle_tau`` (us) adds an
    optional first-order lag to the commanded waveform. Repeated times encode
    an instantaneous reversal, allowed only with ``slew_limit=None``.
    """

    points: tuple
    slew_limit: Optional[float] = DEFAULT_SLEW_LIMIT
    settle_tau: Optional[float] = None

    def __post_init__(self):
        pts = tuple((float(t), float(b)) for t, b in self.points)
        if not pts:
            raise InvalidParams("gradient timeline needs at least one point")
        for i, ((t0, b0), (t1, b1)) in enumerate(zip(pts, pts[1:])):
            if t1 < t0:
                raise InvalidParams(f"gradient segment {i}: times not ordered ({t0} -> {t1})")
            if t1 == t0:
                # an instantaneous flip is only meaningful for an idealized coil
                if b1 != b0 and self.slew_limit is not None:
                    raise InvalidParams(
                        f"gradient segment {i}: discontinuous jump at t={t0} (beta must be continuous)"
                    )
                continue
            rate = abs(b1 - b0) / (t1 - t0)
            if self.slew_limit is not None and rate > self.slew_limit * (1 + 1e-12):
                raise InvalidParams(
                    f"gradient segment {i} ({t0} -> {t1} us): slew {rate:.4g} rad/us/cm/us "
                    f"exceeds limit {self.slew_limit:.4g}"
                )
        if self.settle_tau is not None and not self.settle_tau > 0:
            raise InvalidParams("settle_tau must be positive")
        object.__setattr__(self, "points", pts)

    @property
    def _t(self):
        return np.array([p[0] for p in self.points])

    @property
    def _b(self):
        return np.array([p[1] for p in self.points])

    def commanded(self, t):
        return np.interp(t, self._t, self._b)

    def __call__(self, t):
        if self.settle_tau is None:
            return self.commanded(t)
        return self._lagged(np.asarray(t, float))

    def _lagged(self, t):
        # exact response of y' = (u - y)/tau to piecewise-linear u
        tau = self.settle_tau
        ts, bs = self._t, self._b
        knots = [(ts[0], bs[0], bs[0])]  # (time, u, y)
        for i in range(len(ts) - 1):
            t0, t1 = ts[i], ts[i + 1]
            if t1 == t0:
                continue
            s = (bs[i + 1] - bs[i]) / (t1 - t0)
            u0, y0 = knots[-1][1], knots[-1][2]
            h = t1 - t0
            y1 = u0 + s * h - s * tau + (y0 - u0 + s * tau) * math.exp(-h / tau)
            knots.append((t1, bs[i + 1], y1))
        kt = np.array([k[0] for k in knots])
        out = np.empty_like(t, dtype=float)
        flat = t.ravel()
        res = out.ravel()
        for j, x in enumerate(flat):
            i = int(np.searchsorted(kt, x, side="right") - 1)
            if i < 0:
                res[j] = knots[0][2]
                continue
            t0, u0, y0 = knots[i]
            if i + 1 < len(knots):
                t1, u1, _ = knots[i + 1]
                s = (u1 - u0) / (t1 - t0)
            else:
                s = 0.0
            h = x - t0
            res[j] = u0 + s * h - s * tau + (y0 - u0 + s * tau) * math.exp(-h / tau)
        return out if out.ndim else float(out)

    def max_abs(self) -> float:
        return float(np.max(np.abs(self._b)))


@dataclass(frozen=True, eq=False)
class SsmPulse:
    """Spatial spin-wave phase modulation pulse.

    Imprints ``phase(z)`` = -coefficient * z^2 (parabolic) or the tabulated
    profile. ``instantaneous`` applies the whole phase at the pulse midpoint;
    otherwise it accumulates uniformly over the pulse as a detuning.
    """

    t_apply: float
    duration: float
    coefficient: Optional[float] = None
    table_z: Optional[Sequence[float]] = None
    table_phase: Optional[Sequence[float]] = None
    instantaneous: bool = True

    def __post_init__(self):
        if not self.duration > 0:
            raise InvalidParams("SSM pulse duration must be positive")
        if (self.coefficient is None) == (self.table_z is None):
            raise InvalidParams("SSM pulse needs exactly one of coefficient or a tabulated phase")
        if self.table_z is not None:
            z = np.asarray(self.table_z, float)
            p = np.asarray(self.table_phase, float)
            if z.shape != p.shape or np.any(np.diff(z) <= 0) or not np.all(np.isfinite(p)):
                raise InvalidParams("tabulated SSM phase must be finite on increasing z")
            object.__setattr__(self, "table_z", z)
            object.__setattr__(self, "table_phase", p)
        elif not math.isfinite(self.coefficient):
            raise InvalidParams("SSM coefficient must be finite")

    @property
    def midpoint(self) -> float:
        return self.t_apply + 0.5 * self.duration

    @property
    def t_end(self) -> float:
        return self.t_apply + self.duration

    def phase(self, z):
        z = np.asarray(z, float)
        if self.coefficient is not None:
            return -self.coefficient * z * z
        return np.interp(z, self.table_z, self.table_phase)

    def rate(self, z, t):
        """Detuning contribution (rad/us) in distributed mode."""
        if self.instantaneous or not (self.t_apply <= t < self.t_end):
            return np.zeros_like(np.asarray(z, float))
        return self.phase(z) / self.duration


@dataclass(frozen=True)
class Drive:
    """Everything time dependent that the solver needs from the medium."""

    control: ControlSchedule
    gradient: GradientTimeline
    ssm: tuple = ()
    chirp_shifts_delta: bool = True
    zeeman_offset: float = 0.0

    def delta_eff(self, cfg: EnsembleConfig, t: float) -> float:
        """Single-photon detuning including the control-frequency chirp."""
        if not self.chirp_shifts_delta:
            return cfg.delta
        return cfg.delta + self.control.chirp_offset(t)

    def ssm_rate(self, z, t):
        out = np.zeros_like(np.asarray(z, float))
        for p in self.ssm:
            out = out + p.rate(z, t)
        return out


def detuning_total(cfg: EnsembleConfig, drive: Drive, z, t: float, nominal_rabi=None):
    """Total two-photon detuning delta_0 + ac-Stark + SSM + Zeeman + chirp (rad/us)."""
    rabi = drive.control.rabi(t)
    nominal = drive.control.nominal_rabi() if nominal_rabi is None else nominal_rabi
    d = drive.delta_eff(cfg, t)
    z = np.asarray(z, float)
    return (
        cfg.static_offset(nominal)
        + cfg.light_shift(rabi, d)
        + drive.ssm_rate(z, t)
        + drive.zeeman_offset
        + drive.gradient(t) * z
        + drive.control.chirp_offset(t)
    )
