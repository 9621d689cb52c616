"""Coupled light / spin-wave integrator in the frame co-moving with the signal.

The spin wave is stored rescaled, S = (hbar/d) rho_hg, so the equations close
over the control Rabi frequency, detunings, gamma and g n(z)::

    dS/dt = i Om* (A + Om S) / (4 Delta - 2 i Gamma) + i (delta_tot - delta_acS) S
    dA/dz = i (Gamma/2) g n(z) (A + Om S) / (2 Delta - i Gamma)

(the first line equals -S/(2 tau) + i delta_tot S plus the A source). Each
time step integrates A exactly across every cell with S frozen, then advances
S with an exponential midpoint rule. The z-recurrence is the hot loop; it
runs in the compiled ``_kernel`` when available, else in numpy.
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import CflViolation, InvalidParams, NonFiniteState
from .medium import Drive, EnsembleConfig, decoherence_rate
from .phasespace import Envelope, Spectrum, TimeGrid

from . import _kernel_py

try:
    from . import _kernel as _kernel_c
except ImportError:  # pragma: no cover - depends on the build
    _kernel_c = None

SCHEMES = {"exponential-midpoint": 0, "explicit-rk4": 1}


def available_backends() -> list[str]:
    return ["python"] + (["compiled"] if _kernel_c is not None else [])


def default_backend() -> str:
    if os.environ.get("GEMLENS_PURE") == "1" or _kernel_c is None:
        return "python"
    return "compiled"


def _march_fn(backend: Optional[str]):
    backend = backend or default_backend()
    if backend == "compiled":
        if _kernel_c is None:
            raise InvalidParams("compiled kernel not built; reinstall or use backend='python'")
        return _kernel_c.march
    if backend == "python":
        return _kernel_py.march
    raise InvalidParams(f"unknown backend {backend!r}")


@dataclass(frozen=True)
class SpaceGrid:
    """Cells ``[z0 + j dz, z0 + (j+1) dz)``; samples live at cell centres."""

    z0: float
    dz: float
    n: int

    def __post_init__(self):
        if not self.dz > 0 or self.n < 1:
            raise InvalidParams("space grid needs dz > 0 and n >= 1")

    @property
    def z(self) -> np.ndarray:
        return self.z0 + self.dz * (np.arange(self.n) + 0.5)

    @property
    def edges(self) -> np.ndarray:
        return self.z0 + self.dz * np.arange(self.n + 1)

    @classmethod
    def covering(cls, cfg: EnsembleConfig, n: int, margin: float = 0.05) -> "SpaceGrid":
        lo, hi = cfg.density.support()
        w = hi - lo
        return cls(lo - margin * w, w * (1 + 2 * margin) / n, n)


@dataclass(frozen=True, eq=False)
class CoherenceField:
    """Demodulated zero-spatial-frequency spin wave on a SpaceGrid.

    The raw coherence is rho_hg = rho_check exp(-i K_z0 z + i Delta_HFS t);
    that demodulation is analytic and never simulated. ``samples`` hold the
    rescaled S = (hbar/d) rho_check, in sqrt(photons/us) units.
    """

    grid: SpaceGrid
    samples: np.ndarray

    def __post_init__(self):
        s = np.array(self.samples, dtype=complex)
        if s.shape != (self.grid.n,):
            raise ValueError("coherence samples do not match the grid")
        if not np.all(np.isfinite(s)):
            raise NonFiniteState("coherence field contains non-finite values")
        object.__setattr__(self, "samples", s)


@dataclass(frozen=True)
class SolverSettings:
    dt: Optional[float] = None
    nz: int = 512
    snapshot_every: float = 0.5  # us; 0 disables snapshots
    scheme: str = "exponential-midpoint"
    # False selects the lossless Raman limit: gamma is dropped from every
    # detuning denominator (no 1/tau, no off-resonant absorption) while the
    # coupling strength Gamma g n / 2 is kept
    decoherence: bool = True
    backend: Optional[str] = None

    def __post_init__(self):
        if self.nz < 128:
            raise InvalidParams("nz must be >= 128")
        if self.scheme not in SCHEMES:
            raise InvalidParams(f"unknown scheme {self.scheme!r}; pick one of {sorted(SCHEMES)}")
        if self.dt is not None and not self.dt > 0:
            raise InvalidParams("dt must be positive")


def bandwidth_target(cfg: EnsembleConfig, drive: Drive) -> float:
    return drive.gradient.max_abs() * cfg.density.length


def resolve_dt(cfg: EnsembleConfig, drive: Drive, settings: SolverSettings) -> float:
    """Default min(1/(40 B), tau/200); explicit values must satisfy dt <= 1/(20 B)."""
    B = bandwidth_target(cfg, drive)
    rate = decoherence_rate(cfg, drive.control.nominal_rabi())
    if settings.dt is None:
        cands = [0.05]
        if B > 0:
            cands.append(1 / (40 * B))
        if rate > 0:
            cands.append(1 / rate / 200)
        return min(cands)
    if B > 0 and settings.dt > 1 / (20 * B) * (1 + 1e-12):
        raise CflViolation(f"dt={settings.dt} us exceeds 1/(20 B) = {1 / (20 * B):.4g} us")
    return settings.dt


@dataclass
class SimState:
    time: float
    coherence: CoherenceField
    boundary_input: Envelope
    recorded_output: list = field(default_factory=list)  # (t, A_exit) pairs
    snapshots: list = field(default_factory=list)

    def output_envelope(self, dt: float) -> Envelope:
        ts = np.array([p[0] for p in self.recorded_output])
        vs = np.array([p[1] for p in self.recorded_output])
        return Envelope(TimeGrid(float(ts[0]), dt, ts.size), vs, self.boundary_input.omega0)


@dataclass(eq=False)
class SimResult:
    output: Envelope  # read window; t = 0 at read start
    transmitted: Envelope  # full exit-face record, absolute time
    efficiency: float
    input_energy: float
    final: CoherenceField
    snapshots: list  # (time, CoherenceField)
    dt: float
    meta: dict = field(default_factory=dict)

    def snapshot_matrix(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(times, K_z axis, |S(K_z)|^2 normalized per run) for density maps."""
        if not self.snapshots:
            return np.zeros(0), np.zeros(0), np.zeros((0, 0))
        specs = [snapshot_kspace(f) for _, f in self.snapshots]
        mat = np.array([s.power for s in specs])
        peak = mat.max()
        if peak > 0:
            mat = mat / peak
        return np.array([t for t, _ in self.snapshots]), specs[0].omega, mat


def _interp_complex(t, env: Envelope):
    tt = env.t
    re = np.interp(t, tt, env.samples.real, left=0.0, right=0.0)
    im = np.interp(t, tt, env.samples.imag, left=0.0, right=0.0)
    return re + 1j * im


def _cell_gn(cfg: EnsembleConfig, grid: SpaceGrid, sub: int = 16) -> np.ndarray:
    """Per-cell g n(z).

    Smooth profiles are sampled at cell centres: midpoint sums of smooth,
    compactly supported integrands converge spectrally, while cell averaging
    would perturb the profile at order dz^2. Profiles with edges or kinks
    are cell-averaged so the integrated depth matches od on coarse grids.
    """
    if cfg.density.kind == "super_gaussian":
        return cfg.gn(grid.z)
    off = (np.arange(sub) + 0.5) / sub
    zz = grid.z0 + grid.dz * (np.arange(grid.n)[:, None] + off[None, :])
    return cfg.gn(zz).mean(axis=1)


def _control_series(drive: Drive, t: np.ndarray):
    rabi = np.zeros_like(t)
    chirp = np.zeros_like(t)
    for s in drive.control.stages:
        m = (t >= s.t_start) & (t < s.t_end)
        if not m.any():
            continue
        r = np.full(m.sum(), s.rabi)
        if s.rise > 0:
            edge = np.minimum(t[m] - s.t_start, s.t_end - t[m])
            r = np.where(edge < s.rise, s.rabi * edge / s.rise, r)
        rabi[m] = r
        if s.alpha:
            chirp[m] = s.alpha * (t[m] - s.chirp_center)
    return rabi, chirp


def _coefficients(cfg, drive, t, decoherence, nominal):
    rabi, chirp = _control_series(drive, t)
    delta = cfg.delta + chirp if drive.chirp_shifts_delta else np.full_like(t, cfg.delta)
    g2 = cfg.gamma**2 if decoherence else 0.0
    shift = rabi**2 * delta / (4 * delta**2 + g2)
    decay = 0.5 * cfg.gamma * rabi**2 / (4 * delta**2 + g2) if decoherence else np.zeros_like(t)
    uniform = cfg.static_offset(nominal) + shift + chirp + drive.zeeman_offset
    mu = -decay + 1j * uniform
    beta = np.asarray(drive.gradient(t), dtype=float)
    return rabi, delta, mu, beta


def _breakpoints(drive: Drive) -> list:
    """Times where a coefficient jumps or kinks: stage edges, gradient knots, SSM windows."""
    pts = []
    for s in drive.control.stages:
        pts += [s.t_start, s.t_end]
        if s.rise > 0:
            pts += [s.t_start + s.rise, s.t_end - s.rise]
    pts += [t for t, _ in drive.gradient.points]
    for p in drive.ssm:
        pts += [p.t_apply, p.t_apply + p.duration, p.midpoint]
    return pts


def _aligned_nsteps(t_start: float, t_end: float, h: float, points, slack: float = 0.1) -> int:
    """Smallest step count >= (t_end - t_start)/h that puts every breakpoint on the grid.

    A jump inside a step makes the midpoint rule first order, so the step is
    shrunk (by at most ``slack``) until the breakpoints fall on step edges.
    Falls back to the plain count when no such grid exists within ``slack``.
    """
    span = t_end - t_start
    n0 = max(1, int(math.ceil(span / h - 1e-9)))
    frac = np.array(sorted({(p - t_start) / span for p in points if t_start < p < t_end}))
    if frac.size == 0:
        return n0
    n = np.arange(n0, int(math.ceil(n0 * (1 + slack))) + 1)
    pos = frac[:, None] * n[None, :]
    ok = np.all(np.abs(pos - np.round(pos)) < 1e-6, axis=0)
    return int(n[np.argmax(ok)]) if ok.any() else n0


def simulate(
    drive: Drive,
    source: Envelope,
    cfg: EnsembleConfig,
    settings: SolverSettings = SolverSettings(),
    t_end: Optional[float] = None,
    t_start: float = 0.0,
    grid: Optional[SpaceGrid] = None,
    initial: Optional[np.ndarray] = None,
) -> tuple[Envelope, CoherenceField, list, float]:
    """March from ``t_start`` to ``t_end``; returns (exit-face record, final field, snapshots, dt)."""
    h = resolve_dt(cfg, drive, settings)
    if t_end is None:
        t_end = float(source.t[-1])
    if not t_end > t_start:
        raise InvalidParams(f"t_end ({t_end}) must be after t_start ({t_start})")
    nsteps = _aligned_nsteps(t_start, t_end, h, _breakpoints(drive))
    # shrink the step slightly so the march ends exactly at t_end
    h = (t_end - t_start) / nsteps
    grid = grid or SpaceGrid.covering(cfg, settings.nz)
    z = grid.z
    kappa = np.ascontiguousarray(0.5 * cfg.gamma * _cell_gn(cfg, grid))
    nominal = drive.control.nominal_rabi()

    t_full = t_start + h * np.arange(nsteps + 1)
    t_q = t_full[:-1] + 0.25 * h
    t_h = t_full[:-1] + 0.5 * h
    rabi_f, delta_f, mu_f, beta_f = _coefficients(cfg, drive, t_full, settings.decoherence, nominal)
    _, _, mu_q, beta_q = _coefficients(cfg, drive, t_q, settings.decoherence, nominal)
    rabi_h, delta_h, mu_h, beta_h = _coefficients(cfg, drive, t_h, settings.decoherence, nominal)

    kicks, factors, rstart, rend, rarrays = [], [], [], [], []
    for p in drive.ssm:
        if p.instantaneous:
            k = int(round((p.midpoint - t_start) / h))
            if 1 <= k <= nsteps:
                kicks.append(k)
                factors.append(np.exp(1j * p.phase(z)))
        else:
            a = int(round((p.t_apply - t_start) / h))
            b = int(round((p.t_end - t_start) / h))
            rstart.append(a)
            rend.append(b)
            # rate chosen so the discrete window imprints exactly phase(z)
            rarrays.append(p.phase(z) / (max(b - a, 1) * h))
    kick_steps = np.array(kicks, dtype=np.int64)
    kick_factors = np.ascontiguousarray(np.array(factors, dtype=complex).reshape(len(kicks), grid.n))
    rate_arrays = np.ascontiguousarray(np.array(rarrays, dtype=float).reshape(len(rarrays), grid.n))

    stride = int(round(settings.snapshot_every / h)) if settings.snapshot_every else 0
    nsnap = nsteps // stride + 1 if stride > 0 else 0
    snaps = np.zeros((nsnap, grid.n), dtype=complex)

    S = np.zeros(grid.n, dtype=complex) if initial is None else np.array(initial, dtype=complex)
    out = np.zeros(nsteps + 1, dtype=complex)
    march = _march_fn(settings.backend)
    status = march(
        S, np.ascontiguousarray(z), kappa, grid.dz, h, cfg.gamma if settings.decoherence else 0.0,
        np.ascontiguousarray(_interp_complex(t_full, source)),
        np.ascontiguousarray(_interp_complex(t_h, source)),
        rabi_f, rabi_h, delta_f, delta_h,
        mu_f, mu_q, mu_h, beta_f, beta_q, beta_h,
        kick_steps, kick_factors,
        np.array(rstart, dtype=np.int64), np.array(rend, dtype=np.int64), rate_arrays,
        stride, snaps, SCHEMES[settings.scheme], out,
    )
    if status != 0 or not np.all(np.isfinite(out)):
        raise NonFiniteState("solver state overflowed or produced NaN")
    record = Envelope(TimeGrid(t_start, h, nsteps + 1), out, source.omega0)
    snapshots = [(t_start + k * stride * h, CoherenceField(grid, snaps[k])) for k in range(nsnap)]
    return record, CoherenceField(grid, S), snapshots, h


def step(state: SimState, drive: Drive, cfg: EnsembleConfig, settings: SolverSettings) -> SimState:
    """Advance ``state`` by one time step."""
    grid = state.coherence.grid
    h = resolve_dt(cfg, drive, settings)
    record, final, _, _ = simulate(
        drive,
        state.boundary_input,
        cfg,
        SolverSettings(h, max(settings.nz, 128), 0, settings.scheme, settings.decoherence, settings.backend),
        t_end=state.time + h,
        t_start=state.time,
        grid=grid,
        initial=state.coherence.samples,
    )
    recorded = list(state.recorded_output)
    if not recorded:
        recorded.append((state.time, record.samples[0]))
    recorded.append((state.time + h, record.samples[-1]))
    return SimState(state.time + h, final, state.boundary_input, recorded, list(state.snapshots))


def run(timeline, source: Envelope, cfg: EnsembleConfig, settings: SolverSettings = SolverSettings()) -> SimResult:
    """Execute a staged write / hold / read sequence.

    ``timeline`` supplies ``drive``, ``t_end`` and ``read_window`` (see
    ``protocol.SequenceTimeline``). Input times are absolute sequence times.
    """
    drive = timeline.drive
    record, final, snaps, h = simulate(drive, source, cfg, settings, t_end=timeline.t_end)
    r0, r1 = timeline.read_window
    t = record.t
    m = (t >= r0 - 1e-9) & (t <= r1 + 1e-9)
    idx = np.nonzero(m)[0]
    if idx.size < 2:
        raise InvalidParams("read window shorter than two solver steps")
    out = Envelope(TimeGrid(float(t[idx[0]] - r0), h, idx.size), record.samples[idx], source.omega0)
    e_in = source.energy()
    eff = out.energy() / e_in if e_in > 0 else 0.0
    return SimResult(
        output=out,
        transmitted=record,
        efficiency=eff,
        input_energy=e_in,
        final=final,
        snapshots=snaps,
        dt=h,
        meta={"read_window": (r0, r1), "nz": final.grid.n, "scheme": settings.scheme},
    )


def stored_energy(cfg: EnsembleConfig, field_: CoherenceField) -> float:
    """Photon-equivalent excitation held in the spin wave: sum Gamma g n |S|^2 dz."""
    g = field_.grid
    return float(np.sum(cfg.gamma * _cell_gn(cfg, g) * np.abs(field_.samples) ** 2) * g.dz)


def snapshot_kspace(field_: CoherenceField) -> Spectrum:
    """Spatial transform S(z) -> S(K_z), same convention as the temporal one.

    ``omega`` of the returned Spectrum is K_z in rad/cm.
    """
    g = field_.grid
    k = 2 * math.pi * np.fft.fftshift(np.fft.fftfreq(g.n, g.dz))
    z0 = g.z[0]
    raw = np.fft.fftshift(np.fft.fft(field_.samples))
    samples = g.dz / math.sqrt(2 * math.pi) * np.exp(-1j * k * z0) * raw
    return Spectrum(k, samples, z0, g.dz, 1.0)
