"""Far-field imaging sequence, analytic output model and photon detection.

The standard sequence has three contiguous stages:

1. write: chirped control maps the signal into the spin wave (time lens);
2. hold: the Zeeman gradient is reversed and the SSM pulse imprints a
   parabolic phase on the spin wave (temporal propagation);
3. read: the control is switched back on and the echo is emitted.

Output times are measured from the start of the read stage.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import InvalidParams, UndersampledSpectrum, ZeroChirp
from .medium import (
    DEFAULT_SLEW_LIMIT,
    ControlSchedule,
    ControlStage,
    Drive,
    EnsembleConfig,
    GradientTimeline,
    SsmPulse,
    amplitude_response,
    coherence_time,
    mhz,
    ssm_parabolic_coefficient,
)
from .phasespace import Envelope, Spectrum, TimeGrid, to_envelope, to_spectrum
from .solver import SimResult, SolverSettings, run

# mean photon number of the signal pulses
DEFAULT_PHOTONS = 2.8


@dataclass(frozen=True)
class WriteStage:
    duration: float
    rabi: float
    alpha: float


@dataclass(frozen=True)
class HoldStage:
    """Gradient reversal plus SSM pulse.

    The ramp starts with the stage; the SSM pulse is centred in the stage
    unless ``ssm_offset`` (from the stage start) is given.
    """

    duration: float = 7.0
    ramp: float = 7.0
    ssm_coefficient: float = 0.0
    ssm_duration: float = 3.0
    ssm_offset: Optional[float] = None
    ssm_instantaneous: bool = True
    settle_tau: Optional[float] = None
    slew_limit: Optional[float] = DEFAULT_SLEW_LIMIT


@dataclass(frozen=True)
class ReadStage:
    duration: float
    rabi: float
    alpha: float = 0.0


@dataclass(frozen=True)
class SequenceTimeline:
    """Write / hold / read schedule starting at t = 0.

    ``beta`` is the write gradient; the read gradient is ``-beta``.
    """

    write: WriteStage
    hold: HoldStage
    read: ReadStage
    beta: float
    chirp_shifts_delta: bool = True

    def __post_init__(self):
        if self.write.duration <= 0 or self.read.duration <= 0:
            raise InvalidParams("write and read durations must be positive")
        h = self.hold
        if h.duration < 0 or not 0 <= h.ramp <= h.duration:
            raise InvalidParams("gradient ramp must fit inside the hold stage")
        if h.ssm_coefficient != 0:
            off = self._ssm_offset()
            if off < -1e-12 or off + h.ssm_duration > h.duration + 1e-12:
                raise InvalidParams(
                    f"SSM pulse [{off}, {off + h.ssm_duration}] us lies outside the hold stage"
                )
        if self.beta == 0:
            raise InvalidParams("write gradient must be nonzero")
        # validates the slew limit
        self.gradient

    def _ssm_offset(self) -> float:
        h = self.hold
        return 0.5 * (h.duration - h.ssm_duration) if h.ssm_offset is None else h.ssm_offset

    @property
    def t_hold(self) -> float:
        return self.write.duration

    @property
    def t_read(self) -> float:
        return self.write.duration + self.hold.duration

    @property
    def t_end(self) -> float:
        return self.t_read + self.read.duration

    @property
    def read_window(self) -> tuple[float, float]:
        return (self.t_read, self.t_end)

    @property
    def write_center(self) -> float:
        return 0.5 * self.write.duration

    @property
    def gradient(self) -> GradientTimeline:
        h = self.hold
        t0 = self.t_hold
        pts = ((0.0, self.beta), (t0, self.beta), (t0 + h.ramp, -self.beta))
        return GradientTimeline(pts, slew_limit=h.slew_limit, settle_tau=h.settle_tau)

    @property
    def control(self) -> ControlSchedule:
        w, r = self.write, self.read
        stages = [ControlStage(0.0, w.duration, w.rabi, alpha=w.alpha)]
        if r.rabi > 0:
            # a chirped read is centred on the middle of the echo
            stages.append(
                ControlStage(self.t_read, self.t_end, r.rabi, alpha=r.alpha,
                             chirp_center=self.t_read + self.write_center)
            )
        return ControlSchedule(tuple(stages))

    @property
    def ssm(self) -> tuple:
        h = self.hold
        if h.ssm_coefficient == 0:
            return ()
        return (SsmPulse(self.t_hold + self._ssm_offset(), h.ssm_duration,
                         coefficient=h.ssm_coefficient, instantaneous=h.ssm_instantaneous),)

    @property
    def drive(self) -> Drive:
        return Drive(self.control, self.gradient, self.ssm, self.chirp_shifts_delta)


@dataclass(frozen=True)
class ProtocolParams:
    """Operating point of the imaging sequence (angular units)."""

    beta: float = -mhz(1.7)
    alpha: float = mhz(0.04)
    rabi: float = mhz(4.7)
    write_duration: float = 24.0
    hold_duration: float = 7.0
    ramp_duration: float = 7.0
    ssm_duration: float = 3.0
    read_duration: float = 36.0
    chirped_read: bool = False
    ssm_coefficient: Optional[float] = None  # None: beta^2 / (2 alpha)
    ssm_instantaneous: bool = True
    slew_limit: Optional[float] = DEFAULT_SLEW_LIMIT
    settle_tau: Optional[float] = None
    chirp_shifts_delta: bool = True


def build_standard_sequence(params: ProtocolParams = ProtocolParams()) -> SequenceTimeline:
    """Lens / propagation / lens timeline for ``params``.

    ``alpha = 0`` gives a plain gradient echo: no chirp and no SSM pulse.
    """
    if params.beta == 0:
        raise InvalidParams("gradient beta must be nonzero")
    coef = params.ssm_coefficient
    if coef is None and params.alpha == 0:
        coef = 0.0
    elif coef is None:
        try:
            coef = ssm_parabolic_coefficient(params.beta, params.alpha)
        except ZeroChirp as exc:
            raise InvalidParams(str(exc)) from exc
    return SequenceTimeline(
        WriteStage(params.write_duration, params.rabi, params.alpha),
        HoldStage(
            duration=params.hold_duration,
            ramp=params.ramp_duration,
            ssm_coefficient=coef,
            ssm_duration=params.ssm_duration,
            ssm_instantaneous=params.ssm_instantaneous,
            settle_tau=params.settle_tau,
            slew_limit=params.slew_limit,
        ),
        ReadStage(params.read_duration, params.rabi, params.alpha if params.chirped_read else 0.0),
        params.beta,
        params.chirp_shifts_delta,
    )


# -- input waveforms ---------------------------------------------------------

def _gauss(t, center, fwhm):
    # intensity FWHM
    return np.exp(-2 * math.log(2) * ((t - center) / fwhm) ** 2)


def gaussian_input(grid: TimeGrid, width: float, center: float,
                   photons: float = DEFAULT_PHOTONS) -> Envelope:
    return Envelope(grid, _gauss(grid.t, center, width)).normalized(photons)


def two_pulse_input(grid: TimeGrid, separation: float, width: float, center: float,
                    photons: float = DEFAULT_PHOTONS) -> Envelope:
    t = grid.t
    a = _gauss(t, center - separation / 2, width) + _gauss(t, center + separation / 2, width)
    return Envelope(grid, a).normalized(photons)


def sine_input(grid: TimeGrid, frequency_mhz: float, envelope_width: float, center: float,
               photons: float = DEFAULT_PHOTONS) -> Envelope:
    """Gaussian envelope times sin(2 pi f (t - center)); f in MHz."""
    t = grid.t
    a = _gauss(t, center, envelope_width) * np.sin(mhz(frequency_mhz) * (t - center))
    return Envelope(grid, a).normalized(photons)


def tabulated_input(grid: TimeGrid, t: Sequence[float], amplitude: Sequence[complex],
                    photons: Optional[float] = DEFAULT_PHOTONS) -> Envelope:
    tt = np.asarray(t, float)
    aa = np.asarray(amplitude, complex)
    if tt.shape != aa.shape or tt.size < 2 or np.any(np.diff(tt) <= 0):
        raise InvalidParams("tabulated input needs matching, increasing time samples")
    a = np.interp(grid.t, tt, aa.real, 0, 0) + 1j * np.interp(grid.t, tt, aa.imag, 0, 0)
    env = Envelope(grid, a)
    return env if photons is None else env.normalized(photons)


# -- analytic far-field model ------------------------------------------------

@dataclass(frozen=True, eq=False)
class AnalyticModelInput:
    """Inputs of the finite-aperture far-field formula.

    ``eta_amp`` maps angular frequency (rad/us) to the per-pass amplitude
    response in [0, 1]; ``None`` is an infinite aperture. ``mode="literal"``
    treats it as the two-pass intensity efficiency instead (each blur
    kernel then carries the full intensity response).
    """

    spectrum: Spectrum
    alpha: float
    eta_amp: Optional[Callable] = None
    mode: str = "amplitude"

    def __post_init__(self):
        if self.alpha == 0:
            raise ZeroChirp("chirp rate must be nonzero")
        if self.mode not in ("amplitude", "literal"):
            raise InvalidParams(f"unknown aperture mode {self.mode!r}")


def _dtft(env: Envelope, omega: np.ndarray, chunk: int = 2048) -> np.ndarray:
    """Exact transform of the sampled envelope at arbitrary frequencies."""
    t = env.t
    a = env.samples
    out = np.empty(omega.size, dtype=complex)
    for i in range(0, omega.size, chunk):
        w = omega[i:i + chunk]
        out[i:i + chunk] = np.exp(-1j * np.outer(w, t)) @ a
    return out * env.grid.dt / math.sqrt(2 * math.pi)


def analytic_output(inp: AnalyticModelInput, grid: TimeGrid, absolute: bool = False) -> Envelope:
    """([A~(alpha t) e^{-i alpha t^2/2}] * zeta * zeta)(t) e^{i alpha t^2/2}.

    zeta is the transform of the aperture response, so each convolution is
    applied as a multiplication by the response on the frequency axis
    conjugate to ``grid``. ``absolute=True`` scales by sqrt|alpha| so that
    an infinite aperture conserves energy; otherwise the peak is 1.
    """
    spec = inp.spectrum
    a = inp.alpha
    t = grid.t
    nyq = math.pi / spec.dt
    if np.max(np.abs(a * t)) > nyq * (1 + 1e-12):
        raise UndersampledSpectrum(
            f"output grid needs |alpha t| up to {np.max(np.abs(a * t)):.4g} rad/us but the "
            f"spectrum lattice stops at {nyq:.4g}"
        )
    env = to_envelope(spec)
    chirp = np.exp(-0.5j * a * t * t)
    x = _dtft(env, a * t) * chirp
    if inp.eta_amp is not None:
        n = grid.n
        L = 2 * n
        nu = 2 * math.pi * np.fft.fftfreq(L, grid.dt)
        # F[zeta](nu) = eta(-nu) for zeta(t) = (2 pi)^-1/2 int eta(w) e^{-i w t} dw
        resp = np.clip(np.asarray(inp.eta_amp(-nu), float), 0.0, 1.0)
        kernel = resp**2 if inp.mode == "amplitude" else resp**4
        x = np.fft.ifft(np.fft.fft(x, L) * kernel)[:n]
    y = x / chirp
    if absolute:
        y = y * math.sqrt(abs(a))
    else:
        peak = np.max(np.abs(y))
        if peak > 0:
            y = y / peak
    return Envelope(grid, y, spec.omega0)


def far_field_model(timeline: SequenceTimeline, source: Envelope, cfg: EnsembleConfig,
                    grid: TimeGrid, mode: str = "amplitude", depth: str = "solver",
                    read_decay: bool = True) -> Envelope:
    """Analytic prediction of the read-window intensity of ``run``.

    The echo is time-reversed in the GEM, so in read time the output
    frequency sweeps with slope -alpha around ``t_read + write_center``;
    the aperture is mirrored accordingly. ``read_decay`` weights the
    output amplitude by exp(-t / 2 tau_read): light leaving at read time t
    comes from coherence that was exposed to the read control for t.
    """
    alpha = timeline.write.alpha
    beta = timeline.beta
    tau = coherence_time(cfg, timeline.write.rabi)
    # centre the input on the write-chirp centre before transforming
    shifted = Envelope(
        TimeGrid(source.grid.t0 - timeline.write_center, source.grid.dt, source.grid.n),
        source.samples,
        source.omega0,
    )
    eta = lambda w: amplitude_response(cfg, beta, tau, -np.asarray(w), depth)  # noqa: E731
    inp = AnalyticModelInput(to_spectrum(shifted), -alpha, eta, mode)
    centered = TimeGrid(grid.t0 - timeline.write_center, grid.dt, grid.n)
    y = analytic_output(inp, centered).samples
    if read_decay and timeline.read.rabi > 0:
        tr = coherence_time(cfg, timeline.read.rabi)
        y = y * np.exp(-0.5 * np.clip(grid.t, 0, None) / tr)
        y = y / np.max(np.abs(y))
    return Envelope(grid, y, source.omega0)


def compare_chirped_read(timeline: SequenceTimeline, source: Envelope, cfg: EnsembleConfig,
                         settings: SolverSettings = SolverSettings()) -> float:
    """max_t | |A1|^2 - |A2|^2 | / max_t |A1|^2 for chirped (1) vs unchirped (2) reads."""
    alpha = timeline.write.alpha
    chirped = replace(timeline, read=replace(timeline.read, alpha=alpha))
    plain = replace(timeline, read=replace(timeline.read, alpha=0.0))
    i1 = run(chirped, source, cfg, settings).output.intensity
    i2 = run(plain, source, cfg, settings).output.intensity
    peak = i1.max()
    if peak == 0:
        return 0.0
    return float(np.max(np.abs(i1 - i2)) / peak)


# -- detection ---------------------------------------------------------------

# shots drawn per independently seeded block
SHOT_BLOCK = 1000


@dataclass(frozen=True)
class DetectionModel:
    path_transmission: float = 0.60
    detector_efficiency: float = 0.65
    noise_mean_per_tau: float = 0.023
    bin_width: float = 0.5  # us
    tau: float = 25.0  # us, length of the window the noise figure refers to
    rng_seed: int = 0

    def __post_init__(self):
        for name in ("path_transmission", "detector_efficiency"):
            v = getattr(self, name)
            if not 0 <= v <= 1:
                raise InvalidParams(f"{name} must lie in [0, 1], got {v}")
        if self.noise_mean_per_tau < 0:
            raise InvalidParams("noise mean must be >= 0")
        if not self.bin_width > 0 or not self.tau > 0:
            raise InvalidParams("bin width and tau must be positive")


@dataclass(frozen=True, eq=False)
class Histogram:
    bin_start: np.ndarray  # us
    counts: np.ndarray  # summed over shots
    expected: np.ndarray  # per-shot Poisson mean
    shots: int
    bin_width: float


def expected_counts(output: Envelope, model: DetectionModel) -> tuple[np.ndarray, np.ndarray]:
    """(bin starts, per-shot mean counts) over the span of ``output``."""
    t = output.t
    dt = output.grid.dt
    span = output.grid.span
    nbins = max(1, int(math.floor(span / model.bin_width + 1e-9)))
    starts = t[0] + model.bin_width * np.arange(nbins)
    # cumulative photon number on sample boundaries, then differenced per bin
    edges = t[0] - 0.5 * dt + dt * np.arange(t.size + 1)
    cum = np.concatenate(([0.0], np.cumsum(output.intensity) * dt))
    bin_edges = np.append(starts, starts[-1] + model.bin_width)
    photons = np.diff(np.interp(bin_edges, edges, cum))
    lam = (model.path_transmission * model.detector_efficiency * photons
           + model.noise_mean_per_tau * model.bin_width / model.tau)
    return starts, np.maximum(lam, 0.0)


def detect(output: Envelope, model: DetectionModel, shots: int) -> Histogram:
    """Summed Poisson photon counts over ``shots`` repetitions.

    Shots are drawn in blocks of ``SHOT_BLOCK``; block k uses the seed
    sequence (rng_seed, k), so the histogram does not depend on how the
    blocks are distributed over workers.
    """
    if shots < 1:
        raise InvalidParams("shots must be >= 1")
    starts, lam = expected_counts(output, model)
    total = np.zeros(lam.size, dtype=np.int64)
    for k, first in enumerate(range(0, shots, SHOT_BLOCK)):
        n = min(SHOT_BLOCK, shots - first)
        rng = np.random.default_rng(np.random.SeedSequence([model.rng_seed, k]))
        total += rng.poisson(lam, size=(n, lam.size)).sum(axis=0)
    return Histogram(starts, total, lam, shots, model.bin_width)
