"""Figures of merit: efficiency spectra and maps, resolution, GDD, waveform analysis."""
from __future__ import annotations

import functools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import optimize, signal, stats

from .errors import InvalidParams, NoFwhm, NoPeak
from .medium import (
    ControlSchedule,
    ControlStage,
    Drive,
    EnsembleConfig,
    GradientTimeline,
    amplitude_response,
    coherence_time,
)
from .phasespace import US2_PER_S2, Envelope, TimeGrid
from .protocol import _dtft
from .solver import SolverSettings, simulate

# time-averaging factor (1 - e^-2)/2 for a window T = tau
TEMPORAL_FACTOR = (math.e**2 - 1) / (2 * math.e**2)


def eta0_uniform(od, tauB):
    """[1 - exp(-2 pi od / tauB)]^2 for a uniform cloud; tauB = tau * B with B in rad/us."""
    od = np.asarray(od, float)
    tauB = np.asarray(tauB, float)
    if np.any(od < 0):
        raise InvalidParams("od must be >= 0")
    if np.any(tauB <= 0):
        raise InvalidParams("tauB must be positive")
    out = (-np.expm1(-2 * math.pi * od / tauB)) ** 2
    return float(out) if out.ndim == 0 else out


def _half_crossings(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """Outermost linear-interpolated crossings of y = max/2."""
    half = 0.5 * y.max()
    above = np.nonzero(y >= half)[0]
    i0, i1 = above[0], above[-1]
    if i0 == 0 or i1 == y.size - 1:
        raise NoFwhm("signal does not fall below half maximum inside the grid")

    def cross(a, b):
        ya, yb = y[a], y[b]
        if ya == yb:
            return x[a]
        return x[a] + (half - ya) * (x[b] - x[a]) / (yb - ya)

    return cross(i0 - 1, i0), cross(i1, i1 + 1)


def fwhm(x, y) -> float:
    """Full width at half maximum by linear interpolation (outermost crossings)."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    if y.max() <= 0:
        raise NoFwhm("signal has no positive maximum")
    lo, hi = _half_crossings(x, y)
    return hi - lo


@dataclass(frozen=True, eq=False)
class EfficiencySpectrum:
    omega: np.ndarray  # rad/us
    eta0: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.omega, float)
        e = np.asarray(self.eta0, float)
        if w.shape != e.shape or w.ndim != 1 or np.any(np.diff(w) <= 0):
            raise InvalidParams("efficiency spectrum needs increasing omega and matching values")
        if np.any(e < -1e-12) or np.any(e > 1 + 1e-12):
            raise InvalidParams("efficiency values must lie in [0, 1]")
        object.__setattr__(self, "omega", w)
        object.__setattr__(self, "eta0", np.clip(e, 0.0, 1.0))

    def band(self) -> tuple[float, float]:
        return _half_crossings(self.omega, self.eta0)

    @property
    def bandwidth(self) -> float:
        lo, hi = self.band()
        return hi - lo

    @classmethod
    def from_config(cls, cfg: EnsembleConfig, beta: float, tau: float,
                    omega: Optional[np.ndarray] = None, depth: str = "solver") -> "EfficiencySpectrum":
        """Two-pass efficiency eta_amp(omega)^2 of a cloud in gradient ``beta``."""
        if omega is None:
            half = 0.75 * abs(beta) * cfg.density.length
            omega = np.linspace(-half, half, 4001)
        eta = amplitude_response(cfg, beta, tau, omega, depth) ** 2
        return cls(np.asarray(omega, float), eta)


def averaged_efficiency(spec: EfficiencySpectrum, tau: Optional[float] = None) -> float:
    """Time-frequency averaged efficiency over the FWHM band.

    The measurement window equals tau, so the temporal factor
    (e^2 - 1) / (2 e^2) is independent of its value; ``tau`` is only checked.
    """
    if tau is not None and not tau > 0:
        raise InvalidParams("tau must be positive")
    if spec.eta0.max() == 0:
        return 0.0
    lo, hi = spec.band()
    w = spec.omega
    inside = (w > lo) & (w < hi)
    xs = np.concatenate(([lo], w[inside], [hi]))
    ys = np.interp(xs, w, spec.eta0)
    return float(TEMPORAL_FACTOR * np.trapezoid(ys, xs) / (hi - lo))


def _resolution_spectrum(w, tau=1.0):
    e = math.e
    return (1 + e - 2 * math.sqrt(e) * np.cos(tau * w)) / (4 * tau * tau * w * w + 1)


def resolution_fwhm(tau: float) -> float:
    """FWHM (rad/us) of the power spectrum of a tau-long, tau-decaying window."""
    if not tau > 0:
        raise InvalidParams("tau must be positive")
    f = lambda w: _resolution_spectrum(w, tau) - 0.5 * _resolution_spectrum(0.0, tau)  # noqa: E731
    # dense scan for the first crossing, then bisection
    w = np.linspace(0, 20 / tau, 200_001)
    v = f(w)
    i = int(np.argmax(v < 0))
    return 2 * optimize.brentq(f, w[i - 1], w[i], xtol=1e-15 / tau, rtol=1e-15)


@functools.lru_cache(maxsize=None)
def resolution_prefactor() -> float:
    """delta_omega / (2 pi) * tau, a pure number."""
    return resolution_fwhm(1.0) / (2 * math.pi)


def resolution_spectrum_at_zero() -> float:
    return float(_resolution_spectrum(0.0))


def gdd_equivalent(f_t: float, omega0: float) -> float:
    """2 pi f_t / omega0 in us^2 (group-delay derivative per ordinary frequency)."""
    if not omega0 > 0:
        raise InvalidParams("omega0 must be positive")
    return 2 * math.pi * f_t / omega0 * US2_PER_S2


# -- waveform analysis -------------------------------------------------------

@dataclass(frozen=True)
class WaveformReport:
    fwhm: float
    peaks: tuple
    fringe_period: Optional[float]
    visibility: float

    def as_dict(self) -> dict:
        return {
            "fwhm_us": self.fwhm,
            "peaks_us": list(self.peaks),
            "fringe_period_us": self.fringe_period,
            "visibility": self.visibility,
        }


def _as_xy(data):
    if isinstance(data, Envelope):
        return data.t, data.intensity
    if hasattr(data, "bin_start") and hasattr(data, "counts"):
        return np.asarray(data.bin_start, float) + 0.5 * data.bin_width, np.asarray(data.counts, float)
    x, y = data
    return np.asarray(x, float), np.asarray(y, float)


def _parabolic(x, y, i):
    if i == 0 or i == y.size - 1:
        return x[i]
    ya, yb, yc = y[i - 1], y[i], y[i + 1]
    den = ya - 2 * yb + yc
    if den == 0:
        return x[i]
    return x[i] + 0.5 * (ya - yc) / den * (x[1] - x[0])


def fringe_period(x, y, pad: int = 16) -> Optional[float]:
    """Period of the dominant nonzero DFT component of y.

    The signal is Hann-windowed and the search starts past the first
    minimum of the magnitude spectrum, so the low-frequency lobe of a smooth
    envelope is not taken for a fringe; a spectrum without such a minimum
    (no fringes) or one whose strongest remaining line lies below 1e-3 of
    the zero-frequency magnitude gives None.
    """
    y = np.asarray(y, float)
    n = y.size
    spec = np.abs(np.fft.rfft(y * np.hanning(n), pad * n))
    if spec.size < 3:
        return None
    rising = np.nonzero(np.diff(spec[1:]) > 0)[0]
    if rising.size == 0:
        return None
    start = int(rising[0]) + 1
    k = int(np.argmax(spec[start:]) + start)
    # ignore round-off structure far below the envelope lobe
    if spec[k] <= 1e-3 * spec[0]:
        return None
    if 0 < k < spec.size - 1:
        a, b, c = spec[k - 1], spec[k], spec[k + 1]
        den = a - 2 * b + c
        k = k + (0.5 * (a - c) / den if den != 0 else 0.0)
    dx = x[1] - x[0]
    return pad * n * dx / k


def analyze_waveform(data, min_prominence: float = 0.1) -> WaveformReport:
    """FWHM, refined peak positions, fringe period and visibility.

    ``data`` is an Envelope (intensity is analysed), a histogram or an
    ``(x, y)`` pair on a uniform grid.
    """
    x, y = _as_xy(data)
    if y.size < 3:
        raise NoPeak("need at least three samples")
    base = float(np.percentile(y, 10))
    top = float(y.max())
    if not (top > 0 and top > 3 * base):
        raise NoPeak("no local maximum above three times the baseline")
    idx, _ = signal.find_peaks(y, prominence=min_prominence * top)
    if idx.size == 0:
        idx = np.array([int(np.argmax(y))])
    peaks = tuple(float(_parabolic(x, y, i)) for i in idx)
    try:
        width = fwhm(x, y)
    except NoFwhm:
        width = float("nan")
    lo, hi = (idx[0], idx[-1]) if idx.size > 1 else (0, y.size - 1)
    seg = y[lo:hi + 1]
    vis = float((seg.max() - seg.min()) / (seg.max() + seg.min())) if seg.max() + seg.min() > 0 else 0.0
    return WaveformReport(width, peaks, fringe_period(x, y), vis)


@dataclass(frozen=True)
class LinearFit:
    slope: float
    intercept: float
    r2: float


def linear_fit(x, y) -> LinearFit:
    r = stats.linregress(np.asarray(x, float), np.asarray(y, float))
    return LinearFit(float(r.slope), float(r.intercept), float(r.rvalue**2))


def fit_decay_time(t, eta, window: Optional[float] = None) -> tuple[float, float]:
    """(eta_0, tau) from a least-squares line through log(eta) over [0, window].

    ``window`` defaults to 2 tau, found by iterating from the full range.
    """
    t = np.asarray(t, float)
    eta = np.asarray(eta, float)
    ok = eta > 0
    t, eta = t[ok], eta[ok]
    if t.size < 2:
        raise InvalidParams("need two positive efficiency samples")
    w = window if window is not None else t.max()
    for _ in range(1 if window is not None else 5):
        m = t <= w + 1e-12
        if m.sum() < 2:
            break
        fit = linear_fit(t[m], np.log(eta[m]))
        tau = -1.0 / fit.slope if fit.slope < 0 else math.inf
        if window is not None or not math.isfinite(tau):
            break
        w = 2 * tau
    return float(math.exp(fit.intercept)), float(tau)


# -- efficiency map ----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class EfficiencyMap:
    """Mean efficiency over a (Rabi frequency, gradient) grid.

    Arrays are indexed [rabi index, beta index].
    """

    rabi: np.ndarray  # rad/us
    beta: np.ndarray  # rad/us/cm
    bandwidth: np.ndarray  # FWHM of eta0, rad/us
    tau: np.ndarray  # us
    eta0_peak: np.ndarray
    eta_bar: np.ndarray

    @property
    def tauB(self) -> np.ndarray:
        return self.tau * self.bandwidth

    def rows(self):
        """Long format (B, tau, eta_bar) in grid order."""
        for i in range(self.rabi.size):
            for j in range(self.beta.size):
                yield float(self.bandwidth[i, j]), float(self.tau[i, j]), float(self.eta_bar[i, j])


def _solver_spectrum(cfg: EnsembleConfig, rabi: float, beta: float, nz: int = 256) -> EfficiencySpectrum:
    """eta0(omega) measured by a short write / instantaneous flip / read run.

    A pulse much shorter than 1/B probes every frequency at once; the echo
    spectrum divided by the input spectrum, corrected for the storage decay,
    gives the two-pass efficiency.
    """
    B = abs(beta) * cfg.density.length
    width = 0.25 / B  # intensity FWHM of the probe, us
    tc = 8 * width
    # each frequency is absorbed within a slice of width ~1/(beta t); the
    # flip waits until that slice is a few percent of the cloud
    tf = tc + 30 / B
    tau = coherence_time(cfg, rabi)
    t_end = 2 * tf - tc + 30 / B
    grad = GradientTimeline(((0.0, beta), (tf, beta), (tf, -beta)), slew_limit=None)
    drive = Drive(ControlSchedule((ControlStage(0.0, t_end, rabi),)), grad)
    settings = SolverSettings(nz=max(nz, 128), snapshot_every=0)
    dt = 1 / (40 * B)
    g = TimeGrid(0.0, dt, int(math.ceil(tf / dt)))
    src = Envelope(g, np.exp(-2 * math.log(2) * ((g.t - tc) / width) ** 2))
    rec, _, _, h = simulate(drive, src, cfg, settings, t_end=t_end)
    m = rec.t >= tf
    n = int(m.sum())
    echo = Envelope(TimeGrid(float(rec.t[m][0]), h, n), rec.samples[m])
    # common lattice for the ratio
    w = np.linspace(-0.75 * B, 0.75 * B, 1201)
    a_in = _dtft(src, w)
    # the echo spectrum is mirrored about zero frequency
    a_out = _dtft(echo, -w)
    storage = 2 * (tf - tc)
    eta = np.abs(a_out) ** 2 / np.maximum(np.abs(a_in) ** 2, 1e-300) * math.exp(storage / tau)
    return EfficiencySpectrum(w, np.clip(eta, 0.0, 1.0))


def _map_cell(args):
    cfg, rabi, beta, backend, depth = args
    tau = coherence_time(cfg, rabi)
    if backend == "analytic":
        spec = EfficiencySpectrum.from_config(cfg, beta, tau, depth=depth)
    else:
        spec = _solver_spectrum(cfg, rabi, beta)
    return spec.bandwidth, tau, float(spec.eta0.max()), averaged_efficiency(spec, tau)


def build_efficiency_map(cfg: EnsembleConfig, rabis: Sequence[float], betas: Sequence[float],
                         backend: str = "analytic", jobs: int = 1,
                         depth: str = "solver") -> EfficiencyMap:
    """Mean efficiency for every (rabi, beta) pair of the outer product grid.

    Cells are independent; with ``jobs > 1`` they run in worker processes and
    are assembled in grid order, so results do not depend on ``jobs``.
    """
    rabis = np.asarray(rabis, float)
    betas = np.asarray(betas, float)
    if rabis.size == 0 or betas.size == 0:
        raise InvalidParams("efficiency map grid is empty")
    if backend not in ("analytic", "solver"):
        raise InvalidParams(f"unknown backend {backend!r}")
    tasks = [(cfg, float(r), float(b), backend, depth) for r in rabis for b in betas]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            cells = list(ex.map(_map_cell, tasks))
    else:
        cells = [_map_cell(t) for t in tasks]
    arr = np.array(cells, float).reshape(rabis.size, betas.size, 4)
    return EfficiencyMap(rabis, betas, arr[..., 0], arr[..., 1], arr[..., 2], arr[..., 3])
