"""Scenario and sweep files (YAML) with strict, line-precise validation.

Frequencies are written in MHz and converted to rad/us (x 2 pi); every key
name carries its unit. Unknown keys, wrong types and physically invalid
combinations are reported as ``path:line: message``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np
import yaml

from .errors import ConfigError, GemLensError
from .medium import DensityProfile, EnsembleConfig, mhz
from .phasespace import Envelope, TimeGrid
from .protocol import (
    DEFAULT_PHOTONS,
    DetectionModel,
    ProtocolParams,
    SequenceTimeline,
    build_standard_sequence,
    gaussian_input,
    sine_input,
    tabulated_input,
    two_pulse_input,
)
from .solver import SolverSettings, resolve_dt

FORMAT_VERSION = 1

_NUM = (int, float)
_REQ = object()  # marker for required keys


def _opt(t):
    return (t, type(None))


# key -> (accepted python types, default)
ENSEMBLE = {
    "od": (_NUM, _REQ),
    "gamma_mhz": (_NUM, 5.75),
    "delta_mhz": (_NUM, 70.0),
    "delta0_mhz": (_opt(_NUM), None),
    "density": (dict, None),
}
DENSITY = {
    "kind": (str, "super_gaussian"),
    "length_cm": (_NUM, 1.0),
    "order": (int, 4),
    "width_cm": (_opt(_NUM), None),
    "z_cm": (_opt(list), None),
    "value": (_opt(list), None),
}
SEQUENCE = {
    "beta_mhz_per_cm": (_NUM, -1.7),
    "alpha_mhz_per_us": (_NUM, 0.04),
    "rabi_mhz": (_NUM, 4.7),
    "write_us": (_NUM, 24.0),
    "hold_us": (_NUM, 7.0),
    "ramp_us": (_NUM, 7.0),
    "ssm_us": (_NUM, 3.0),
    "read_us": (_NUM, 36.0),
    "chirped_read": (bool, False),
    "ssm_coefficient_rad_per_cm2": (_opt(_NUM), None),
    "ssm_instantaneous": (bool, True),
    "slew_limit_mhz_per_cm_per_us": (_opt(_NUM), "default"),
    "settle_us": (_opt(_NUM), None),
}
INPUT = {
    "kind": (str, _REQ),
    "separation_us": (_NUM, 5.0),
    "width_us": (_NUM, 1.5),
    "frequency_mhz": (_NUM, 0.2),
    "envelope_us": (_NUM, 6.0),
    "center_us": (_opt(_NUM), None),
    "photons": (_NUM, DEFAULT_PHOTONS),
    "dt_us": (_NUM, 0.01),
    "t_us": (_opt(list), None),
    "amplitude": (_opt(list), None),
}
DETECTION = {
    "path_transmission": (_NUM, 0.60),
    "detector_efficiency": (_NUM, 0.65),
    "noise_mean_per_tau": (_NUM, 0.023),
    "bin_us": (_NUM, 0.5),
    "tau_us": (_NUM, 25.0),
    "shots": (int, 10000),
    "seed": (int, 0),
}
SOLVER = {
    "dt_us": (_opt(_NUM), None),
    "nz": (int, 512),
    "snapshot_us": (_NUM, 0.5),
    "scheme": (str, "exponential-midpoint"),
    "backend": (_opt(str), None),
    "decoherence": (bool, True),
}
OUTPUTS = ("envelope", "input", "snapshots", "histogram", "summary", "analytic")
SCENARIO = {
    "format_version": (int, _REQ),
    "name": (str, _REQ),
    "ensemble": (dict, _REQ),
    "sequence": (dict, None),
    "input": (dict, _REQ),
    "detection": (dict, None),
    "solver": (dict, None),
    "outputs": (list, list(OUTPUTS)),
}
GRID_AXIS = {"start": (_NUM, _REQ), "stop": (_NUM, _REQ), "num": (int, _REQ),
             "spacing": (str, "linear")}
SWEEP_GRID = {"rabi_mhz": ((list, dict), _REQ), "beta_mhz_per_cm": ((list, dict), _REQ)}
SWEEP = {
    "format_version": (int, _REQ),
    "name": (str, _REQ),
    "ensemble": (dict, _REQ),
    "grid": (dict, _REQ),
    "backend": (str, "analytic"),
    "depth": (str, "solver"),
}


# -- YAML with line numbers --------------------------------------------------

class _Doc:
    """Parsed YAML plus the source line (1-based) of every key and value."""

    def __init__(self, text: str, path: Optional[str]):
        self.path = path
        self.key_lines: dict[tuple, int] = {}
        self.value_lines: dict[tuple, int] = {}
        try:
            loader = yaml.SafeLoader(text)
            try:
                node = loader.get_single_node()
                if node is None:
                    raise ConfigError("file is empty", 1, path)
                self._walk(node, ())
                self.data = loader.construct_document(node)
            finally:
                loader.dispose()
        except yaml.MarkedYAMLError as exc:
            mark = exc.problem_mark or exc.context_mark
            line = mark.line + 1 if mark is not None else None
            raise ConfigError(f"YAML syntax error: {exc.problem or exc}", line, path) from None

    def _walk(self, node, path):
        self.value_lines[path] = node.start_mark.line + 1
        if isinstance(node, yaml.MappingNode):
            seen = set()
            for k, v in node.value:
                key = k.value
                if key in seen:
                    raise ConfigError(f"duplicate key {key!r}", k.start_mark.line + 1, self.path)
                seen.add(key)
                self.key_lines[path + (key,)] = k.start_mark.line + 1
                self._walk(v, path + (key,))
        elif isinstance(node, yaml.SequenceNode):
            for i, v in enumerate(node.value):
                self._walk(v, path + (i,))

    def line(self, path) -> Optional[int]:
        path = tuple(path)
        while path:
            if path in self.key_lines:
                return self.key_lines[path]
            if path in self.value_lines:
                return self.value_lines[path]
            path = path[:-1]
        return self.value_lines.get((), 1)

    def error(self, path, msg) -> ConfigError:
        dotted = ".".join(str(p) for p in path)
        return ConfigError(f"{dotted}: {msg}" if dotted else msg, self.line(path), self.path)


def _section(doc: _Doc, data: Any, schema: dict, path: tuple) -> dict:
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise doc.error(path, "expected a mapping")
    out = {}
    for key in data:
        if key not in schema:
            raise doc.error(path + (key,), f"unknown key (allowed: {', '.join(sorted(schema))})")
    for key, (types, default) in schema.items():
        if key in data:
            v = data[key]
            ok = isinstance(v, types) and not (isinstance(v, bool) and bool not in _flat(types))
            if not ok:
                raise doc.error(path + (key,), f"expected {_tname(types)}, got {type(v).__name__}")
            if isinstance(v, float) and not math.isfinite(v):
                raise doc.error(path + (key,), "value must be finite")
            out[key] = v
        elif default is _REQ:
            raise doc.error(path, f"missing required key {key!r}")
        else:
            out[key] = default
    return out


def _flat(types):
    res = []
    for t in types if isinstance(types, tuple) else (types,):
        res.extend(_flat(t) if isinstance(t, tuple) else [t])
    return res


def _tname(types) -> str:
    names = {int: "integer", float: "number", str: "string", bool: "boolean", list: "list",
             dict: "mapping", type(None): "null"}
    seen = []
    for t in _flat(types):
        n = names.get(t, t.__name__)
        if n not in seen:
            seen.append(n)
    return " or ".join(seen)


def _numbers(doc, values, path) -> np.ndarray:
    for i, v in enumerate(values):
        if isinstance(v, bool) or not isinstance(v, _NUM):
            raise doc.error(path + (i,), "expected a number")
    return np.asarray(values, float)


# -- scenario objects --------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Scenario:
    name: str
    ensemble: EnsembleConfig
    timeline: SequenceTimeline
    params: ProtocolParams
    source: Envelope
    input_spec: dict
    detection: DetectionModel
    shots: int
    settings: SolverSettings
    outputs: tuple
    path: Optional[str] = None
    lines: dict = field(default_factory=dict)


@dataclass(frozen=True, eq=False)
class SweepSpec:
    name: str
    ensemble: EnsembleConfig
    rabis: np.ndarray  # rad/us
    betas: np.ndarray  # rad/us/cm
    backend: str
    depth: str
    path: Optional[str] = None


def _guard(doc, path, fn, *args, **kw):
    """Call a constructor, turning domain errors into located config errors."""
    try:
        return fn(*args, **kw)
    except (GemLensError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise doc.error(path, str(exc)) from None


def _ensemble(doc, raw) -> EnsembleConfig:
    e = _section(doc, raw, ENSEMBLE, ("ensemble",))
    d = _section(doc, e["density"], DENSITY, ("ensemble", "density"))
    dp = ("ensemble", "density")
    if d["kind"] not in ("uniform", "super_gaussian", "tabulated"):
        raise doc.error(dp + ("kind",), f"unknown density kind {d['kind']!r}")
    z = _numbers(doc, d["z_cm"], dp + ("z_cm",)) if d["z_cm"] is not None else None
    v = _numbers(doc, d["value"], dp + ("value",)) if d["value"] is not None else None
    density = _guard(doc, dp, DensityProfile, d["kind"], float(d["length_cm"]), d["order"],
                     d["width_cm"], z, v)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return _guard(
            doc, ("ensemble",), EnsembleConfig,
            od=float(e["od"]),
            gamma=mhz(e["gamma_mhz"]),
            delta=mhz(e["delta_mhz"]),
            delta0=None if e["delta0_mhz"] is None else mhz(e["delta0_mhz"]),
            density=density,
        )


def _params(doc, raw) -> ProtocolParams:
    s = _section(doc, raw, SEQUENCE, ("sequence",))
    slew = s["slew_limit_mhz_per_cm_per_us"]
    kw = {}
    if slew != "default":
        kw["slew_limit"] = None if slew is None else mhz(slew)
    return ProtocolParams(
        beta=mhz(s["beta_mhz_per_cm"]),
        alpha=mhz(s["alpha_mhz_per_us"]),
        rabi=mhz(s["rabi_mhz"]),
        write_duration=float(s["write_us"]),
        hold_duration=float(s["hold_us"]),
        ramp_duration=float(s["ramp_us"]),
        ssm_duration=float(s["ssm_us"]),
        read_duration=float(s["read_us"]),
        chirped_read=s["chirped_read"],
        ssm_coefficient=s["ssm_coefficient_rad_per_cm2"],
        ssm_instantaneous=s["ssm_instantaneous"],
        settle_tau=s["settle_us"],
        **kw,
    )


def _timeline(doc, params: ProtocolParams) -> SequenceTimeline:
    try:
        return build_standard_sequence(params)
    except GemLensError as exc:
        msg = str(exc)
        key = "sequence"
        if "slew" in msg or "segment" in msg:
            key = "ramp_us"
        elif "SSM" in msg:
            key = "ssm_us"
        elif "alpha" in msg or "chirp" in msg:
            key = "alpha_mhz_per_us"
        elif "gradient" in msg or "beta" in msg:
            key = "beta_mhz_per_cm"
        path = ("sequence",) if key == "sequence" else ("sequence", key)
        if path not in doc.key_lines:
            path = ("sequence",)
        raise doc.error(path, msg) from None


def _source(doc, raw, timeline: SequenceTimeline) -> tuple[Envelope, dict]:
    s = _section(doc, raw, INPUT, ("input",))
    ip = ("input",)
    kind = s["kind"]
    dt = float(s["dt_us"])
    if not dt > 0:
        raise doc.error(ip + ("dt_us",), "must be positive")
    n = int(round(timeline.write.duration / dt))
    if n < 2:
        raise doc.error(ip + ("dt_us",), "write stage holds fewer than two input samples")
    grid = TimeGrid(0.0, dt, n)
    center = timeline.write_center if s["center_us"] is None else float(s["center_us"])
    photons = float(s["photons"])
    if kind == "two_pulse":
        env = _guard(doc, ip, two_pulse_input, grid, float(s["separation_us"]), float(s["width_us"]),
                     center, photons)
    elif kind == "sine":
        env = _guard(doc, ip, sine_input, grid, float(s["frequency_mhz"]), float(s["envelope_us"]),
                     center, photons)
    elif kind == "gaussian":
        env = _guard(doc, ip, gaussian_input, grid, float(s["width_us"]), center, photons)
    elif kind == "tabulated":
        if s["t_us"] is None or s["amplitude"] is None:
            raise doc.error(ip, "tabulated input needs t_us and amplitude lists")
        t = _numbers(doc, s["t_us"], ip + ("t_us",))
        a = _numbers(doc, s["amplitude"], ip + ("amplitude",))
        env = _guard(doc, ip, tabulated_input, grid, t, a, photons if photons > 0 else None)
    elif kind == "none":
        env = Envelope(grid, np.zeros(n))
    else:
        raise doc.error(ip + ("kind",), f"unknown input kind {kind!r} "
                        "(two_pulse, sine, gaussian, tabulated, none)")
    spec = {k: v for k, v in s.items() if v is not None and k not in ("t_us", "amplitude")}
    spec["center_us"] = center
    return env, spec


def load_scenario(path) -> Scenario:
    path = str(path)
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read file: {exc.strerror}", None, path) from None
    return parse_scenario(text, path)


def _check_version(doc, top):
    if top["format_version"] != FORMAT_VERSION:
        raise doc.error(("format_version",),
                        f"unsupported format_version {top['format_version']} (expected {FORMAT_VERSION})")


def parse_scenario(text: str, path: Optional[str] = None) -> Scenario:
    doc = _Doc(text, path)
    top = _section(doc, doc.data, SCENARIO, ())
    _check_version(doc, top)
    cfg = _ensemble(doc, top["ensemble"])
    params = _params(doc, top["sequence"])
    timeline = _timeline(doc, params)
    source, input_spec = _source(doc, top["input"], timeline)

    d = _section(doc, top["detection"], DETECTION, ("detection",))
    if d["shots"] < 1:
        raise doc.error(("detection", "shots"), "must be >= 1")
    detection = _guard(doc, ("detection",), DetectionModel, d["path_transmission"],
                       d["detector_efficiency"], d["noise_mean_per_tau"], d["bin_us"], d["tau_us"],
                       d["seed"])

    s = _section(doc, top["solver"], SOLVER, ("solver",))
    sp = ("solver",)
    if s["backend"] is not None and s["backend"] not in ("compiled", "python"):
        raise doc.error(sp + ("backend",), "backend must be 'compiled' or 'python'")
    settings = _guard(doc, sp, SolverSettings, s["dt_us"], s["nz"], float(s["snapshot_us"]),
                      s["scheme"], s["decoherence"], s["backend"])
    _guard(doc, sp + ("dt_us",), resolve_dt, cfg, timeline.drive, settings)

    outs = top["outputs"]
    for i, o in enumerate(outs):
        if o not in OUTPUTS:
            raise doc.error(("outputs", i), f"unknown output {o!r} (allowed: {', '.join(OUTPUTS)})")
    return Scenario(
        name=top["name"], ensemble=cfg, timeline=timeline, params=params, source=source,
        input_spec=input_spec, detection=detection, shots=d["shots"], settings=settings,
        outputs=tuple(outs), path=path, lines=dict(doc.key_lines),
    )


def _axis(doc, raw, path) -> np.ndarray:
    if isinstance(raw, list):
        if not raw:
            raise doc.error(path, "grid axis is empty")
        return _numbers(doc, raw, path)
    a = _section(doc, raw, GRID_AXIS, path)
    if a["num"] < 1:
        raise doc.error(path + ("num",), "must be >= 1")
    if a["spacing"] == "linear":
        return np.linspace(a["start"], a["stop"], a["num"])
    if a["spacing"] == "geometric":
        if a["start"] * a["stop"] <= 0:
            raise doc.error(path, "geometric spacing needs start and stop of one sign")
        return np.geomspace(a["start"], a["stop"], a["num"])
    raise doc.error(path + ("spacing",), "spacing must be 'linear' or 'geometric'")


def parse_sweep(text: str, path: Optional[str] = None) -> SweepSpec:
    doc = _Doc(text, path)
    top = _section(doc, doc.data, SWEEP, ())
    _check_version(doc, top)
    cfg = _ensemble(doc, top["ensemble"])
    g = _section(doc, top["grid"], SWEEP_GRID, ("grid",))
    rabis = _axis(doc, g["rabi_mhz"], ("grid", "rabi_mhz"))
    betas = _axis(doc, g["beta_mhz_per_cm"], ("grid", "beta_mhz_per_cm"))
    if np.any(rabis <= 0):
        raise doc.error(("grid", "rabi_mhz"), "Rabi frequencies must be positive")
    if np.any(betas == 0):
        raise doc.error(("grid", "beta_mhz_per_cm"), "gradients must be nonzero")
    if top["backend"] not in ("analytic", "solver"):
        raise doc.error(("backend",), "backend must be 'analytic' or 'solver'")
    if top["depth"] not in ("solver", "literal"):
        raise doc.error(("depth",), "depth must be 'solver' or 'literal'")
    return SweepSpec(top["name"], cfg, mhz(rabis), mhz(betas), top["backend"], top["depth"], path)


def load_sweep(path) -> SweepSpec:
    path = str(path)
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read file: {exc.strerror}", None, path) from None
    return parse_sweep(text, path)


def detect_kind(path) -> str:
    """'sweep' or 'scenario', from the top-level keys (no validation)."""
    try:
        data = yaml.safe_load(Path(path).read_text())
    except (OSError, yaml.YAMLError):
        return "scenario"
    return "sweep" if isinstance(data, dict) and "grid" in data else "scenario"


def bundled_scenarios() -> dict[str, Path]:
    base = Path(__file__).parent / "scenarios"
    return {p.stem: p for p in sorted(base.glob("*.yaml"))}
