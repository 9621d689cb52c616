"""CSV tables with unit-bearing headers and JSON + flat float64 binary arrays."""
from __future__ import annotations

import csv
import json
import math
import os
from pathlib import Path
from typing import Sequence

import numpy as np

from .phasespace import Envelope, Spectrum, TimeGrid, WignerMap

FLOAT_FMT = "%.17g"


def _fmt(v) -> str:
    return FLOAT_FMT % v


def write_table(path, header: Sequence[str], columns: Sequence[np.ndarray]) -> Path:
    """Write equal-length numeric columns; values round-trip exactly."""
    path = Path(path)
    cols = [np.asarray(c) for c in columns]
    n = cols[0].size if cols else 0
    if any(c.size != n for c in cols):
        raise ValueError("columns differ in length")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(n):
            w.writerow([_fmt(c[i]) if np.issubdtype(c.dtype, np.floating) else str(c[i]) for c in cols])
    return path


def read_table(path) -> tuple[list[str], dict[str, np.ndarray]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty table")
    header = rows[0]
    body = rows[1:]
    try:
        data = np.array([[float(x) for x in r] for r in body], dtype=float).reshape(len(body), len(header))
    except ValueError as exc:
        raise ValueError(f"{path}: non-numeric or ragged row ({exc})") from None
    return header, {h: data[:, i] for i, h in enumerate(header)}


ENVELOPE_HEADER = ["t_us", "re_amplitude_sqrt_photons_per_us", "im_amplitude_sqrt_photons_per_us",
                   "intensity_photons_per_us"]


def write_envelope_csv(path, env: Envelope) -> Path:
    s = env.samples
    return write_table(path, ENVELOPE_HEADER, [env.t, s.real, s.imag, env.intensity])


def read_envelope_csv(path, omega0: float | None = None) -> Envelope:
    header, cols = read_table(path)
    if header[:3] != ENVELOPE_HEADER[:3]:
        raise ValueError(f"{path}: not an envelope table (header {header})")
    t = cols["t_us"]
    if t.size < 2:
        raise ValueError(f"{path}: need at least two samples")
    dt = float(np.mean(np.diff(t)))
    if not np.allclose(np.diff(t), dt, rtol=1e-6, atol=1e-12):
        raise ValueError(f"{path}: time axis is not uniform")
    grid = TimeGrid(float(t[0]), dt, t.size)
    a = cols[ENVELOPE_HEADER[1]] + 1j * cols[ENVELOPE_HEADER[2]]
    return Envelope(grid, a) if omega0 is None else Envelope(grid, a, omega0)


def write_spectrum_csv(path, spec: Spectrum) -> Path:
    s = spec.samples
    return write_table(
        path,
        ["omega_rad_per_us", "re_amplitude_sqrt_photons", "im_amplitude_sqrt_photons", "power_photons_us"],
        [spec.omega, s.real, s.imag, spec.power],
    )


def write_wigner_csv(path, w: WignerMap) -> Path:
    """Long format: one row per (t, omega) cell."""
    T, O = np.meshgrid(w.t, w.omega, indexing="ij")
    return write_table(path, ["t_us", "omega_rad_per_us", "wigner"], [T.ravel(), O.ravel(), w.values.ravel()])


def write_histogram_csv(path, hist) -> Path:
    return write_table(
        path,
        ["bin_start_us", "counts", "expected_lambda_per_shot"],
        [np.asarray(hist.bin_start, float), np.asarray(hist.counts, np.int64), np.asarray(hist.expected, float)],
    )


def write_efficiency_map_csv(path, emap) -> Path:
    rows = list(emap.rows())
    cols = np.array(rows, float).reshape(len(rows), 3)
    return write_table(path, ["bandwidth_rad_per_us", "tau_us", "eta_bar"], [cols[:, 0], cols[:, 1], cols[:, 2]])


# -- JSON metadata + flat binary ---------------------------------------------

def _jsonable(v):
    if isinstance(v, np.ndarray):
        return [_jsonable(x) for x in v.tolist()]
    if isinstance(v, (np.floating, float)):
        f = float(v)
        return f if math.isfinite(f) else str(f)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return v


def write_json(path, obj) -> Path:
    path = Path(path)
    with open(path, "w") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def write_array(stem, values: np.ndarray, axes: dict, meta: dict | None = None) -> tuple[Path, Path]:
    """Store ``values`` as ``stem.bin`` (little-endian float64, C order) plus ``stem.json``.

    Complex arrays gain a trailing axis of length 2 (real, imaginary).
    ``axes`` maps axis name (with unit) to its coordinate values, in order.
    """
    stem = Path(stem)
    arr = np.asarray(values)
    is_complex = np.iscomplexobj(arr)
    if is_complex:
        arr = np.stack([arr.real, arr.imag], axis=-1)
    arr = np.ascontiguousarray(arr, dtype="<f8")
    bin_path = stem.with_suffix(".bin")
    arr.tofile(bin_path)
    header = {
        "format": "gemlens-array",
        "version": 1,
        "binary": bin_path.name,
        "dtype": "float64",
        "byte_order": "little",
        "order": "C",
        "shape": list(arr.shape),
        "complex": is_complex,
        "axes": [{"name": k, "values": np.asarray(v, float)} for k, v in axes.items()],
        "meta": meta or {},
    }
    return write_json(stem.with_suffix(".json"), header), bin_path


def read_array(json_path) -> tuple[np.ndarray, dict]:
    json_path = Path(json_path)
    with open(json_path) as fh:
        header = json.load(fh)
    if header.get("format") != "gemlens-array":
        raise ValueError(f"{json_path}: not a gemlens array header")
    raw = np.fromfile(json_path.parent / header["binary"], dtype="<f8")
    arr = raw.reshape(header["shape"])
    if header["complex"]:
        arr = arr[..., 0] + 1j * arr[..., 1]
    return arr, header


def write_wigner_array(stem, w: WignerMap) -> tuple[Path, Path]:
    return write_array(stem, w.values, {"t_us": w.t, "omega_rad_per_us": w.omega}, dict(w.meta))


def ensure_dir(path) -> Path:
    p = Path(path)
    os.makedirs(p, exist_ok=True)
    return p
