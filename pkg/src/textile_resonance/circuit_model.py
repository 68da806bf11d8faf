"""Equivalent-circuit model of a reader coil coupled to a multi-resonant textile interface.

The reader is a transmitter coil ``L_t`` shunted by the connector capacitance
``C_SMA``. The interface is a receiver coil ``L_r`` in series with a parallel
bank of sensor branches; every branch is a series RLC resonator reached
through a lumped transmission line (``R_line`` and ``L_line`` in series,
``C_line`` across the resonator).

All quantities are SI (H, F, ohm, Hz). The array kernels broadcast: branch
parameters carry a trailing branch axis ``(..., n)`` and frequencies a
trailing frequency axis ``(..., F)``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DesignError, DomainError, SingularityError

TWO_PI = 2.0 * math.pi


class Role(str, enum.Enum):
    """Which component of a branch, if any, is the unknown sensor value."""

    CAPACITIVE = "capacitive-sensor"
    INDUCTIVE = "inductive-sensor"
    RESISTIVE = "resistive-sensor"
    REFERENCE = "reference"
    FIXED = "fixed"

    @property
    def unknown(self) -> str | None:
        return {"capacitive-sensor": "c", "inductive-sensor": "l", "resistive-sensor": "r"}.get(self.value)

    @property
    def is_reactive(self) -> bool:
        return self in (Role.CAPACITIVE, Role.INDUCTIVE)


@dataclass(frozen=True)
class ReaderParams:
    transmitter_inductance: float
    parasitic_capacitance: float
    reference_impedance: float = 50.0

    def __post_init__(self):
        if not self.transmitter_inductance > 0:
            raise DesignError("transmitter inductance must be positive")
        if not self.parasitic_capacitance >= 0:
            raise DesignError("parasitic capacitance must be non-negative")
        if not self.reference_impedance > 0:
            raise DesignError("reference impedance must be positive")


@dataclass(frozen=True)
class LineParams:
    R_line: float = 0.0
    L_line: float = 0.0
    C_line: float = 0.0
    length: float = 0.0

    def __post_init__(self):
        for name in ("R_line", "L_line", "C_line", "length"):
            if not getattr(self, name) >= 0:
                raise DesignError(f"{name} must be non-negative")


@dataclass(frozen=True)
class SensorBranch:
    r: float
    l: float
    c: float
    line: LineParams = field(default_factory=LineParams)
    role: Role = Role.FIXED
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "role", Role(self.role))
        if not self.r >= 0:
            raise DesignError("branch resistance must be non-negative")
        if not (self.l > 0 and self.c > 0):
            raise DesignError("branch inductance and capacitance must be positive")

    @property
    def resonant_frequency(self) -> float:
        # l and c are validated on construction; skip the array checks
        return 1.0 / (TWO_PI * math.sqrt(self.l * self.c))

    def with_value(self, **changes) -> "SensorBranch":
        return replace(self, **changes)


@dataclass(frozen=True)
class InterfaceDesign:
    """Reader plus interface; ``branches`` is an ordered tuple of SensorBranch."""

    reader: ReaderParams
    receiver_inductance: float
    coupling_factor: float
    branches: tuple

    def __post_init__(self):
        object.__setattr__(self, "branches", tuple(self.branches))
        if not self.receiver_inductance > 0:
            raise DesignError("receiver inductance must be positive")
        if not 0.0 <= self.coupling_factor <= 1.0:
            raise DesignError("coupling factor must lie in [0, 1]")
        if not self.branches:
            raise DesignError("a design needs at least one branch")
        freqs = [b.resonant_frequency for b in self.branches]
        if len(set(freqs)) != len(freqs):
            raise DesignError("branch resonant frequencies must be pairwise distinct")

    @property
    def n_branches(self) -> int:
        return len(self.branches)

    def branch_arrays(self) -> dict:
        """Per-branch parameters as float arrays of shape ``(n,)``."""
        return branch_arrays(self.branches)

    def with_coupling(self, k: float) -> "InterfaceDesign":
        return replace(self, coupling_factor=k)


def branch_arrays(branches) -> dict:
    b = branches
    return {
        "r": np.array([x.r for x in b], dtype=float),
        "l": np.array([x.l for x in b], dtype=float),
        "c": np.array([x.c for x in b], dtype=float),
        "R_line": np.array([x.line.R_line for x in b], dtype=float),
        "L_line": np.array([x.line.L_line for x in b], dtype=float),
        "C_line": np.array([x.line.C_line for x in b], dtype=float),
    }


def stack_designs(designs) -> dict:
    """Batch arrays for structurally identical designs (same branch count).

    Works for anything with ``reader``, ``receiver_inductance`` and
    ``branches``; ``k`` is included when the designs carry a coupling factor.
    """
    arrs = [branch_arrays(d.branches) for d in designs]
    out = {key: np.stack([a[key] for a in arrs]) for key in arrs[0]}
    out["L_t"] = np.array([d.reader.transmitter_inductance for d in designs])
    out["C_sma"] = np.array([d.reader.parasitic_capacitance for d in designs])
    out["r0"] = np.array([d.reader.reference_impedance for d in designs])
    out["L_r"] = np.array([d.receiver_inductance for d in designs])
    if hasattr(designs[0], "coupling_factor"):
        out["k"] = np.array([d.coupling_factor for d in designs])
    return out


# ---------------------------------------------------------------------------
# array kernels


def _omega(f):
    return TWO_PI * np.asarray(f, dtype=float)


def branch_z(r, l, c, R_line, L_line, C_line, f):
    """Impedance of one branch seen from the receiver coil (broadcasting)."""
    w = _omega(f)
    z_rlc = r + 1j * (w * l - 1.0 / (w * c))
    # resonator || C_line, written without 1/z_rlc so z_rlc = 0 is finite
    z_par = z_rlc / (1.0 + 1j * w * C_line * z_rlc)
    return z_par + 1j * w * L_line + R_line


def parallel_z(z, axis=-2):
    """Parallel combination along ``axis``; any zero member shorts the bank."""
    z = np.asarray(z, dtype=complex)
    shorted = np.any(z == 0, axis=axis)
    with np.errstate(divide="ignore", invalid="ignore"):
        zp = 1.0 / np.sum(1.0 / z, axis=axis)
    return np.where(shorted, 0.0 + 0.0j, zp)


def system_z(L_t, C_sma, L_r, k, r, l, c, R_line, L_line, C_line, f):
    """Input impedance of reader + interface.

    Reader arguments have shape ``(...)``, branch arguments ``(..., n)`` and
    ``f`` ``(F,)`` or ``(..., F)``. Returns ``(..., F)``. Singular points come
    back as inf/nan; use :func:`system_impedance` for checked evaluation.
    """
    f = np.asarray(f, dtype=float)
    ex = lambda a: np.asarray(a, dtype=float)[..., None]
    zi = branch_z(ex(r), ex(l), ex(c), ex(R_line), ex(L_line), ex(C_line), f[..., None, :])
    w = _omega(f)
    L_t, C_sma, L_r, k = ex(L_t), ex(C_sma), ex(L_r), ex(k)
    z_s = parallel_z(zi, axis=-2) + 1j * w * L_r
    z_m = 1j * w * k * np.sqrt(L_t * L_r)
    with np.errstate(divide="ignore", invalid="ignore"):
        inner = 1j * w * L_t - z_m**2 / z_s
        return inner / (1.0 + 1j * w * C_sma * inner)


def approx_abs_z(L_t, C_sma, L_r, k, L_line, f):
    """Magnitude of the system impedance with one branch shorted at resonance.

    Drops the branch resistance, the line resistance and every line
    capacitance; only the resonating branch's line inductance survives.
    """
    w = _omega(f)
    z_m = 1j * w * k * np.sqrt(L_t * L_r)
    inner = 1j * w * L_t - z_m**2 / (1j * w * (L_line + L_r))
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.abs(1.0 / (1.0 / inner + 1j * w * C_sma))


def s11(z, r0=50.0):
    return (z - r0) / (z + r0)


def s11_and_sensitivities(L_t, C_sma, L_r, k, r, l, c, R_line, L_line, C_line, r0, f, coupling=False):
    """S11 together with its derivatives w.r.t. every branch ``r`` and ``C_line``.

    Returns ``(s, ds_dr, ds_dcline)`` with shapes ``(..., F)``,
    ``(..., n, F)``, ``(..., n, F)``; with ``coupling`` a fourth array
    ``ds_dk`` of shape ``(..., F)`` is appended.
    """
    f = np.asarray(f, dtype=float)
    ex = lambda a: np.asarray(a, dtype=float)[..., None]
    r, l, c, R_line, L_line, C_line = (ex(a) for a in (r, l, c, R_line, L_line, C_line))
    w = _omega(f)
    wb = w[..., None, :]
    z_rlc = r + 1j * (wb * l - 1.0 / (wb * c))
    inv = 1.0 / (1.0 + 1j * wb * C_line * z_rlc)
    zc = z_rlc * inv
    zi = zc + 1j * wb * L_line + R_line
    dzi_dr = inv * inv
    dzi_dc = -1j * wb * zc * zc

    yi = 1.0 / zi
    zp = 1.0 / np.sum(yi, axis=-2)
    dzp_dzi = zp[..., None, :] * yi
    dzp_dzi *= dzp_dzi

    L_t, C_sma, L_r, k, r0 = ex(L_t), ex(C_sma), ex(L_r), ex(k), ex(r0)
    z_s = zp + 1j * w * L_r
    zm2 = -(w**2) * k**2 * L_t * L_r
    inner = 1j * w * L_t - zm2 / z_s
    d_inner = zm2 / z_s**2
    den2 = 1.0 + 1j * w * C_sma * inner
    z = inner / den2
    dz = 1.0 / den2**2
    s = (z - r0) / (z + r0)
    ds = 2.0 * r0 / (z + r0) ** 2
    chain = (ds * dz * d_inner)[..., None, :] * dzp_dzi
    if coupling:
        ds_dk = ds * dz * (2.0 * w**2 * k * L_t * L_r) / z_s
        return s, chain * dzi_dr, chain * dzi_dc, ds_dk
    return s, chain * dzi_dr, chain * dzi_dc


# ---------------------------------------------------------------------------
# checked scalar/vector API


def _check_freq(f):
    f_arr = np.asarray(f, dtype=float)
    if not np.all(np.isfinite(f_arr)) or np.any(f_arr <= 0):
        raise DomainError("frequency must be finite and positive")
    return f_arr


def _unwrap(x, f):
    return complex(x) if np.ndim(f) == 0 else x


def branch_impedance(branch: SensorBranch, f):
    """Impedance of a single branch including its transmission line."""
    f_arr = _check_freq(f)
    w = _omega(f_arr)
    ln = branch.line
    z_rlc = branch.r + 1j * (w * branch.l - 1.0 / (w * branch.c))
    den = 1.0 + 1j * w * ln.C_line * z_rlc
    if np.any(den == 0):
        raise SingularityError("line capacitance resonates with the sensor branch", term="branch line pole")
    z = z_rlc / den + 1j * w * ln.L_line + ln.R_line
    if not np.all(np.isfinite(z)):
        raise DomainError("branch impedance is not finite")
    return _unwrap(z, f)


def mutual_impedance(design: InterfaceDesign, f):
    f_arr = _check_freq(f)
    z = 1j * _omega(f_arr) * design.coupling_factor * math.sqrt(
        design.reader.transmitter_inductance * design.receiver_inductance
    )
    return _unwrap(z, f)


def reader_impedance(reader: ReaderParams, f):
    """Reader-only impedance (no interface coupled): ``jwL_t || C_SMA``."""
    f_arr = _check_freq(f)
    w = _omega(f_arr)
    den = 1.0 - w**2 * reader.transmitter_inductance * reader.parasitic_capacitance
    if np.any(den == 0):
        raise SingularityError("reader tank resonance", term="reader pole")
    return _unwrap(1j * w * reader.transmitter_inductance / den, f)


def system_impedance(design: InterfaceDesign, f):
    """Exact input impedance seen by the reader; raises on exact poles."""
    f_arr = _check_freq(f)
    w = _omega(np.atleast_1d(f_arr).ravel())
    p = {key: v[:, None] for key, v in design.branch_arrays().items()}
    z_rlc = p["r"] + 1j * (w * p["l"] - 1.0 / (w * p["c"]))
    den = 1.0 + 1j * w * p["C_line"] * z_rlc
    bad = np.argwhere(den == 0)
    if bad.size:
        i = int(bad[0][0])
        raise SingularityError(f"branch {i}: line capacitance pole", term="branch line pole", index=i)
    zi = z_rlc / den + 1j * w * p["L_line"] + p["R_line"]
    zp = parallel_z(zi, axis=0)
    if not np.all(np.isfinite(zp)):
        raise SingularityError("branch admittances cancel", term="parallel bank")
    z_s = zp + 1j * w * design.receiver_inductance
    rd = design.reader
    if design.coupling_factor > 0:
        if np.any(z_s == 0):
            raise SingularityError("interface impedance Z_S is zero", term="Z_S")
        z_m = 1j * w * design.coupling_factor * math.sqrt(rd.transmitter_inductance * design.receiver_inductance)
        reflected = z_m**2 / z_s
    else:
        reflected = 0.0
    inner = 1j * w * rd.transmitter_inductance - reflected
    den2 = 1.0 + 1j * w * rd.parasitic_capacitance * inner
    if np.any(den2 == 0):
        raise SingularityError("reader tank pole", term="reader pole")
    return _unwrap(np.reshape(inner / den2, f_arr.shape), f)


def s11_from_impedance(z, r0: float = 50.0):
    z_arr = np.asarray(z, dtype=complex)
    if not np.all(np.isfinite(z_arr)):
        raise DomainError("impedance must be finite")
    if np.any(z_arr + r0 == 0):
        raise SingularityError("Z = -R0 has no reflection coefficient", term="s11 pole")
    out = (z_arr - r0) / (z_arr + r0)
    return complex(out) if np.ndim(z) == 0 else out


def impedance_from_s11(s, r0: float = 50.0):
    s_arr = np.asarray(s, dtype=complex)
    if np.any(s_arr == 1):
        raise SingularityError("S11 = 1 is an open circuit", term="open circuit")
    out = r0 * (1 + s_arr) / (1 - s_arr)
    return complex(out) if np.ndim(s) == 0 else out


def approx_impedance_at_branch_resonance(design: InterfaceDesign, branch_index: int, f):
    """|Z| with branch ``branch_index`` treated as a short at resonance."""
    f_arr = _check_freq(f)
    if not 0 <= branch_index < design.n_branches:
        raise DomainError(f"branch index {branch_index} out of range")
    rd = design.reader
    out = approx_abs_z(
        rd.transmitter_inductance,
        rd.parasitic_capacitance,
        design.receiver_inductance,
        design.coupling_factor,
        design.branches[branch_index].line.L_line,
        f_arr,
    )
    return float(out) if np.ndim(f) == 0 else out


def branch_resonant_frequency(l, c):
    l_arr, c_arr = np.asarray(l, dtype=float), np.asarray(c, dtype=float)
    if np.any(l_arr <= 0) or np.any(c_arr <= 0):
        raise DomainError("inductance and capacitance must be positive")
    out = 1.0 / (TWO_PI * np.sqrt(l_arr * c_arr))
    return float(out) if out.ndim == 0 else out
