"""Sampled one-port spectra: interpolation, S11/impedance conversion, minima, file I/O."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .circuit_model import impedance_from_s11, s11_from_impedance
from .errors import DomainError, GridRangeError, ParseError, SingularityError

KINDS = ("s11", "impedance")


@dataclass(frozen=True)
class FrequencyGrid:
    start: float
    stop: float
    points: int

    def __post_init__(self):
        if not self.start > 0:
            raise DomainError("grid start must be positive")
        if not self.stop > self.start:
            raise DomainError("grid stop must exceed start")
        if int(self.points) != self.points or self.points < 2:
            raise DomainError("a grid needs at least two points")
        object.__setattr__(self, "points", int(self.points))

    @property
    def frequencies(self) -> np.ndarray:
        return np.linspace(self.start, self.stop, self.points)

    @property
    def step(self) -> float:
        return (self.stop - self.start) / (self.points - 1)

    @property
    def span(self) -> float:
        return self.stop - self.start


# desk defaults: the simulated sweep and the handheld reader sweep
SIMULATION_GRID = FrequencyGrid(1e6, 30e6, 101)
READER_GRID = FrequencyGrid(5e6, 30e6, 101)


@dataclass(frozen=True)
class Spectrum:
    grid: FrequencyGrid
    values: np.ndarray
    kind: str = "s11"
    reference_impedance: float = 50.0

    def __post_init__(self):
        vals = np.array(self.values, dtype=complex).reshape(-1)
        if vals.shape[0] != self.grid.points:
            raise DomainError(f"expected {self.grid.points} values, got {vals.shape[0]}")
        if not np.all(np.isfinite(vals)):
            raise DomainError("spectrum values must be finite")
        if self.kind not in KINDS:
            raise DomainError(f"unknown spectrum kind {self.kind!r}")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def frequencies(self) -> np.ndarray:
        return self.grid.frequencies

    @property
    def magnitude(self) -> np.ndarray:
        return np.abs(self.values)


# ---------------------------------------------------------------------------
# interpolation


def interp_uniform(values, freqs, f):
    """Piecewise-linear interpolation of complex ``values`` sampled on ``freqs``.

    ``values`` may carry leading batch axes ``(..., F)``; ``f`` then has shape
    ``(..., m)`` with matching leading axes. Real and imaginary parts are
    interpolated independently (a complex lerp does exactly that).
    """
    freqs = np.asarray(freqs, dtype=float)
    f = np.asarray(f, dtype=float)
    i = np.clip(np.searchsorted(freqs, f, side="right") - 1, 0, freqs.size - 2)
    f0, f1 = freqs[i], freqs[i + 1]
    t = (f - f0) / (f1 - f0)
    values = np.asarray(values)
    if values.ndim == 1:
        v0, v1 = values[i], values[i + 1]
    else:
        v0 = np.take_along_axis(values, i, axis=-1)
        v1 = np.take_along_axis(values, i + 1, axis=-1)
    return (1.0 - t) * v0 + t * v1


def interpolate(spec: Spectrum, f):
    f_arr = np.asarray(f, dtype=float)
    if np.any(f_arr < spec.grid.start) or np.any(f_arr > spec.grid.stop) or np.any(np.isnan(f_arr)):
        raise GridRangeError(f"frequency outside [{spec.grid.start}, {spec.grid.stop}] Hz")
    out = interp_uniform(spec.values, spec.frequencies, f_arr)
    return complex(out) if f_arr.ndim == 0 else out


# ---------------------------------------------------------------------------
# conversion


def to_impedance(spec: Spectrum, r0: float | None = None) -> Spectrum:
    if spec.kind == "impedance":
        return spec
    r0 = spec.reference_impedance if r0 is None else r0
    hit = np.nonzero(spec.values == 1)[0]
    if hit.size:
        raise SingularityError(f"S11 = 1 at index {hit[0]}", term="open circuit", index=int(hit[0]))
    return Spectrum(spec.grid, impedance_from_s11(spec.values, r0), "impedance", r0)


def to_s11(spec: Spectrum, r0: float | None = None) -> Spectrum:
    if spec.kind == "s11":
        return spec
    r0 = spec.reference_impedance if r0 is None else r0
    hit = np.nonzero(spec.values + r0 == 0)[0]
    if hit.size:
        raise SingularityError(f"Z = -R0 at index {hit[0]}", term="s11 pole", index=int(hit[0]))
    return Spectrum(spec.grid, s11_from_impedance(spec.values, r0), "s11", r0)


# ---------------------------------------------------------------------------
# minima


def minima_arrays(mag, freqs, refine=True, min_depth=0.0, window=1):
    """Local minima of ``mag`` along its last axis, padded with NaN.

    A sample qualifies when it is strictly lower than both neighbours, no
    higher than anything within ``window`` samples, and at least
    ``min_depth`` below the smaller of the two flanking maxima in that
    window. With ``refine`` the location and depth come from the parabola
    through the three surrounding samples.

    Returns ``(freq, value, count)`` with shapes ``(..., M)``, ``(..., M)``,
    ``(...)`` where ``M`` is the largest count in the batch.
    """
    mag = np.asarray(mag, dtype=float)
    freqs = np.asarray(freqs, dtype=float)
    n = mag.shape[-1]
    y0, y1, y2 = mag[..., :-2], mag[..., 1:-1], mag[..., 2:]
    mask = (y1 < y0) & (y1 < y2)
    if window > 1 or min_depth > 0:
        left, right = y0.copy(), y2.copy()
        lowest = np.minimum(y0, y2)
        for s in range(2, min(window, n - 2) + 1):
            # samples s away; beyond the edge the window is simply shorter
            lo_s, hi_s = mag[..., max(1 - s, 0) : n - 1 - s], mag[..., 1 + s :]
            a, b = left[..., s - 1 :], right[..., : n - 1 - s]
            np.maximum(a, lo_s, out=a)
            np.maximum(b, hi_s, out=b)
            np.minimum(lowest[..., s - 1 :], lo_s, out=lowest[..., s - 1 :])
            np.minimum(lowest[..., : n - 1 - s], hi_s, out=lowest[..., : n - 1 - s])
        mask &= y1 <= lowest
        mask &= (np.minimum(left, right) - y1) >= min_depth
    counts = mask.sum(axis=-1)
    m = int(counts.max()) if counts.size else 0
    shape = mag.shape[:-1] + (m,)
    if m == 0:
        return np.full(shape, np.nan), np.full(shape, np.nan), counts
    # scatter each qualifying sample into its rank slot along the last axis
    hit = np.nonzero(mask)
    rank = np.cumsum(mask, axis=-1)[hit] - 1
    centre = hit[-1] + 1
    a, b, c = mag[hit[:-1] + (centre - 1,)], mag[hit[:-1] + (centre,)], mag[hit[:-1] + (centre + 1,)]
    loc = freqs[centre]
    val = b
    if refine:
        curv = a - 2.0 * b + c
        with np.errstate(divide="ignore", invalid="ignore"):
            offset = np.where(curv > 0, 0.5 * (a - c) / curv, 0.0)
        offset = np.clip(offset, -0.5, 0.5)
        loc = loc + offset * (freqs[1] - freqs[0])
        val = b - 0.25 * (a - c) * offset
    out_loc, out_val = np.full(shape, np.nan), np.full(shape, np.nan)
    out_loc[hit[:-1] + (rank,)] = loc
    out_val[hit[:-1] + (rank,)] = val
    return out_loc, out_val, counts


def find_minima(spec: Spectrum, refine: bool = True, min_depth: float = 0.0, window: int = 1):
    """Sorted ``(frequency, magnitude)`` pairs of local minima of ``|values|``."""
    loc, val, count = minima_arrays(spec.magnitude, spec.frequencies, refine, min_depth, window)
    return [(float(loc[i]), float(val[i])) for i in range(int(count))]


# ---------------------------------------------------------------------------
# Touchstone v1 (.s1p)

_UNIT_SCALE = {"HZ": 1.0, "KHZ": 1e3, "MHZ": 1e6, "GHZ": 1e9}


def _grid_from_frequencies(freqs, line=None) -> FrequencyGrid:
    freqs = np.asarray(freqs, dtype=float)
    if freqs.size < 2:
        raise ParseError("need at least two frequency points", line)
    grid = FrequencyGrid(float(freqs[0]), float(freqs[-1]), freqs.size)
    if not np.allclose(freqs, grid.frequencies, rtol=0, atol=1e-6 * grid.step):
        raise ParseError("frequency points are not uniformly spaced", line)
    return grid


def read_touchstone(path) -> Spectrum:
    path = Path(path)
    unit, fmt, r0 = "GHZ", "MA", 50.0
    seen_option = False
    freqs, vals = [], []
    with path.open() as fh:
        for lineno, raw in enumerate(fh, start=1):
            text = raw.split("!", 1)[0].strip()
            if not text:
                continue
            if text.startswith("#"):
                if seen_option:
                    raise ParseError("duplicate option line", lineno)
                if freqs:
                    raise ParseError("option line after data", lineno)
                seen_option = True
                tokens = text[1:].upper().split()
                i = 0
                while i < len(tokens):
                    tok = tokens[i]
                    if tok in _UNIT_SCALE:
                        unit = tok
                    elif tok in ("RI", "MA", "DB"):
                        fmt = tok
                    elif tok == "S":
                        pass
                    elif tok in ("Y", "Z", "H", "G"):
                        raise ParseError(f"only S parameters are supported, got {tok}", lineno)
                    elif tok == "R":
                        if i + 1 >= len(tokens):
                            raise ParseError("missing reference resistance after R", lineno)
                        try:
                            r0 = float(tokens[i + 1])
                        except ValueError:
                            raise ParseError(f"bad reference resistance {tokens[i + 1]!r}", lineno) from None
                        i += 1
                    else:
                        raise ParseError(f"unrecognised option {tok!r}", lineno)
                    i += 1
                continue
            parts = text.split()
            if len(parts) != 3:
                raise ParseError(f"expected 3 columns for a one-port row, got {len(parts)}", lineno)
            try:
                f, a, b = (float(p) for p in parts)
            except ValueError:
                raise ParseError(f"non-numeric row {text!r}", lineno) from None
            if fmt == "RI":
                v = complex(a, b)
            elif fmt == "MA":
                v = a * complex(math.cos(math.radians(b)), math.sin(math.radians(b)))
            else:
                mag = 10.0 ** (a / 20.0)
                v = mag * complex(math.cos(math.radians(b)), math.sin(math.radians(b)))
            freqs.append(f * _UNIT_SCALE[unit])
            vals.append(v)
            last_line = lineno
    if not freqs:
        raise ParseError("no data rows", None)
    grid = _grid_from_frequencies(freqs, last_line)
    return Spectrum(grid, np.array(vals), "s11", r0)


def _fmt(x: float) -> str:
    return repr(float(x))


def write_touchstone(spec: Spectrum, path) -> None:
    s = to_s11(spec)
    lines = ["# Hz S RI R " + _fmt_r0(s.reference_impedance)]
    for f, v in zip(s.frequencies, s.values):
        lines.append(f"{_fmt(f)} {_fmt(v.real)} {_fmt(v.imag)}")
    Path(path).write_text("\n".join(lines) + "\n")


def _fmt_r0(r0: float) -> str:
    return str(int(r0)) if float(r0).is_integer() else _fmt(r0)


# ---------------------------------------------------------------------------
# CSV

_CSV_HEADERS = {
    "s11": ("frequency_hz", "s11_real", "s11_imag"),
    "impedance": ("frequency_hz", "z_real", "z_imag"),
}


def read_csv(path, reference_impedance: float = 50.0) -> Spectrum:
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ParseError("empty file", 1)
    header = tuple(h.strip() for h in rows[0])
    kind = next((k for k, h in _CSV_HEADERS.items() if h == header), None)
    if kind is None:
        raise ParseError(f"unexpected header {','.join(header)!r}", 1)
    freqs, vals = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 3:
            raise ParseError(f"expected 3 columns, got {len(row)}", lineno)
        try:
            f, a, b = (float(c) for c in row)
        except ValueError:
            raise ParseError(f"non-numeric row {row!r}", lineno) from None
        freqs.append(f)
        vals.append(complex(a, b))
    if not freqs:
        raise ParseError("no data rows", 2)
    grid = _grid_from_frequencies(freqs, len(rows))
    return Spectrum(grid, np.array(vals), kind, reference_impedance)


def csv_text(spec: Spectrum) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(_CSV_HEADERS[spec.kind])
    for f, v in zip(spec.frequencies, spec.values):
        w.writerow([_fmt(f), _fmt(v.real), _fmt(v.imag)])
    return buf.getvalue()


def write_csv(spec: Spectrum, path) -> None:
    Path(path).write_text(csv_text(spec), newline="")


def read_spectrum(path) -> Spectrum:
    """Dispatch on extension: ``.csv`` or Touchstone."""
    return read_csv(path) if Path(path).suffix.lower() == ".csv" else read_touchstone(path)


def write_spectrum(spec: Spectrum, path) -> None:
    if Path(path).suffix.lower() == ".csv":
        write_csv(spec, path)
    else:
        write_touchstone(spec, path)
