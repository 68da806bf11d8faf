"""JSON design documents and design-rule checks.

Document layout (``"schema": 1``)::

    {
      "schema": 1,
      "reader": {"transmitter_inductance": {"value": 0.6, "unit": "uH"},
                 "parasitic_capacitance": {"value": 10, "unit": "pF"},
                 "reference_impedance": 50},
      "receiver_inductance": {"value": 4.54, "unit": "uH"},
      "coupling_factor": 0.27,                      # optional
      "branches": [
        {"name": "reference", "role": "reference",
         "r": {"value": 1, "unit": "ohm"},
         "l": {"value": 5.9, "unit": "uH"},
         "c": {"value": 5.9, "unit": "pF"},
         "line": {"style": "twisted", "length": {"value": 30, "unit": "cm"}}}
      ]
    }

Quantities are either bare SI numbers or ``{"value", "unit"}`` objects.
A line is given either by ``style`` + ``length`` (per-length model) or by
explicit ``R_line``/``L_line``/``C_line`` (+ optional ``length``). For a
sensing branch the value in the unknown slot is its idle/nominal value.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from pathlib import Path

from .circuit_model import InterfaceDesign, LineParams, ReaderParams, Role, SensorBranch
from .errors import DesignError, ParseError
from .estimator import KnownDesign

SCHEMA_VERSION = 1

UNITS = {
    "H": {"H": 1.0, "mH": 1e-3, "uH": 1e-6, "µH": 1e-6, "nH": 1e-9},
    "F": {"F": 1.0, "uF": 1e-6, "µF": 1e-6, "nF": 1e-9, "pF": 1e-12},
    "ohm": {"ohm": 1.0, "Ω": 1.0, "mohm": 1e-3, "kohm": 1e3},
    "m": {"m": 1.0, "cm": 1e-2, "mm": 1e-3},
    "Hz": {"Hz": 1.0, "kHz": 1e3, "MHz": 1e6, "GHz": 1e9},
}
# units written on output
PREFERRED = {"H": "uH", "F": "pF", "ohm": "ohm", "m": "m", "Hz": "MHz"}


def parse_quantity(q, dimension: str, what: str = "quantity") -> float:
    if isinstance(q, bool):
        raise DesignError(f"{what}: expected a number, got a boolean")
    if isinstance(q, (int, float)):
        return float(q)
    if isinstance(q, dict) and "value" in q:
        unit = q.get("unit", next(k for k, v in UNITS[dimension].items() if v == 1.0))
        table = UNITS[dimension]
        if unit not in table:
            raise DesignError(f"{what}: unit {unit!r} is not a {dimension} unit (known: {', '.join(table)})")
        try:
            return float(q["value"]) * table[unit]
        except (TypeError, ValueError):
            raise DesignError(f"{what}: value {q['value']!r} is not numeric") from None
    raise DesignError(f"{what}: expected a number or {{'value', 'unit'}} object")


def quantity(value: float, dimension: str) -> dict:
    unit = PREFERRED[dimension]
    return {"value": float(value) / UNITS[dimension][unit], "unit": unit}


def _need(d: dict, key: str, where: str):
    if key not in d:
        raise DesignError(f"{where}: missing field {key!r}")
    return d[key]


def _parse_line(doc, where: str) -> LineParams:
    from .simulator import LINE_MODELS, line_from_length

    if doc is None:
        return LineParams()
    if "style" in doc:
        style = doc["style"]
        if style not in LINE_MODELS:
            raise DesignError(f"{where}: unknown line style {style!r}")
        length = parse_quantity(_need(doc, "length", where), "m", f"{where}.length")
        return line_from_length(LINE_MODELS[style], length)
    return LineParams(
        R_line=parse_quantity(doc.get("R_line", 0.0), "ohm", f"{where}.R_line"),
        L_line=parse_quantity(doc.get("L_line", 0.0), "H", f"{where}.L_line"),
        C_line=parse_quantity(doc.get("C_line", 0.0), "F", f"{where}.C_line"),
        length=parse_quantity(doc.get("length", 0.0), "m", f"{where}.length"),
    )


def _parse_branch(doc: dict, i: int) -> SensorBranch:
    where = f"branches[{i}]"
    try:
        role = Role(doc.get("role", "fixed"))
    except ValueError:
        raise DesignError(f"{where}: unknown role {doc.get('role')!r}") from None
    return SensorBranch(
        r=parse_quantity(doc.get("r", 0.0), "ohm", f"{where}.r"),
        l=parse_quantity(_need(doc, "l", where), "H", f"{where}.l"),
        c=parse_quantity(_need(doc, "c", where), "F", f"{where}.c"),
        line=_parse_line(doc.get("line"), f"{where}.line"),
        role=role,
        name=str(doc.get("name", f"branch{i}")),
    )


@dataclass(frozen=True)
class DesignDocument:
    reader: ReaderParams
    receiver_inductance: float
    branches: tuple
    coupling_factor: float | None = None

    def interface(self, coupling_factor: float | None = None) -> InterfaceDesign:
        k = self.coupling_factor if coupling_factor is None else coupling_factor
        if k is None:
            raise DesignError("the design has no coupling_factor; one is needed to simulate it")
        return InterfaceDesign(self.reader, self.receiver_inductance, k, self.branches)

    def known(self) -> KnownDesign:
        return KnownDesign(self.reader, self.receiver_inductance, self.branches)


def design_from_dict(doc: dict) -> DesignDocument:
    if not isinstance(doc, dict):
        raise DesignError("design document must be a JSON object")
    schema = doc.get("schema")
    if schema != SCHEMA_VERSION:
        raise DesignError(f"unsupported design schema {schema!r} (expected {SCHEMA_VERSION})")
    rd = _need(doc, "reader", "design")
    reader = ReaderParams(
        parse_quantity(_need(rd, "transmitter_inductance", "reader"), "H", "reader.transmitter_inductance"),
        parse_quantity(rd.get("parasitic_capacitance", 0.0), "F", "reader.parasitic_capacitance"),
        parse_quantity(rd.get("reference_impedance", 50.0), "ohm", "reader.reference_impedance"),
    )
    l_r = parse_quantity(_need(doc, "receiver_inductance", "design"), "H", "receiver_inductance")
    branches = _need(doc, "branches", "design")
    if not isinstance(branches, list) or not branches:
        raise DesignError("design: 'branches' must be a non-empty list")
    parsed = tuple(_parse_branch(b, i) for i, b in enumerate(branches))
    k = doc.get("coupling_factor")
    if k is not None and (isinstance(k, bool) or not isinstance(k, (int, float))):
        raise DesignError("coupling_factor must be a plain number")
    if k is not None and not 0.0 <= k <= 1.0:
        raise DesignError("coupling_factor must lie in [0, 1]")
    return DesignDocument(reader, l_r, parsed, None if k is None else float(k))


def design_to_dict(design) -> dict:
    """Serialise an InterfaceDesign, KnownDesign or DesignDocument."""
    rd = design.reader
    out = {
        "schema": SCHEMA_VERSION,
        "reader": {
            "transmitter_inductance": quantity(rd.transmitter_inductance, "H"),
            "parasitic_capacitance": quantity(rd.parasitic_capacitance, "F"),
            "reference_impedance": quantity(rd.reference_impedance, "ohm"),
        },
        "receiver_inductance": quantity(design.receiver_inductance, "H"),
    }
    k = getattr(design, "coupling_factor", None)
    if k is not None:
        out["coupling_factor"] = float(k)
    out["branches"] = [
        {
            "name": b.name,
            "role": b.role.value,
            "r": quantity(b.r, "ohm"),
            "l": quantity(b.l, "H"),
            "c": quantity(b.c, "F"),
            "line": {
                "R_line": quantity(b.line.R_line, "ohm"),
                "L_line": quantity(b.line.L_line, "H"),
                "C_line": quantity(b.line.C_line, "F"),
                "length": quantity(b.line.length, "m"),
            },
        }
        for b in design.branches
    ]
    return out


def load_design(path) -> DesignDocument:
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: invalid JSON ({exc.msg})", exc.lineno) from None
    return design_from_dict(doc)


def save_design(design, path) -> None:
    Path(path).write_text(json.dumps(design_to_dict(design), indent=2) + "\n", encoding="utf-8")


def shirt_design(coupling_factor: float = 0.27) -> DesignDocument:
    """Four-branch shirt: resistive stretch sensor near 7.5 MHz, capacitive
    touch pad near 16 MHz, inductive coil near 22 MHz, reference at 27 MHz,
    all on 30 cm twisted lines."""
    from .simulator import TWISTED, components_from_ratio, line_from_length

    line = line_from_length(TWISTED, 0.30)
    l_ref, c_ref = components_from_ratio(27e6, 1.0)
    branches = (
        SensorBranch(60.0, 23.9e-6, 19.1e-12, line, Role.RESISTIVE, "stretch"),
        SensorBranch(5.0, 6.5e-6, 15e-12, line, Role.CAPACITIVE, "touch"),
        SensorBranch(5.0, 5.4e-6, 9.9e-12, line, Role.INDUCTIVE, "coil"),
        SensorBranch(1.0, l_ref, c_ref, line, Role.REFERENCE, "reference"),
    )
    return DesignDocument(ReaderParams(0.6e-6, 10e-12, 50.0), 4.54e-6, branches, coupling_factor)


# ---------------------------------------------------------------------------
# design rules

MHz = 1e6


@dataclass(frozen=True)
class RuleResult:
    rule: str
    severity: str  # "error" or "warning"
    passed: bool
    message: str

    def line(self) -> str:
        mark = "PASS" if self.passed else ("FAIL" if self.severity == "error" else "WARN")
        return f"[{mark}] {self.rule}: {self.message}"


@dataclass(frozen=True)
class DesignRules:
    band: tuple = (1 * MHz, 30 * MHz)
    min_gap: float = 1 * MHz
    reference_margin: float = 2 * MHz
    reference_floor: float = 10 * MHz
    long_line: float = 0.5
    high_frequency: float = 20 * MHz
    resistive_ratio_cap: float = 0.5


def validate_design(design, rules: DesignRules = DesignRules()) -> list:
    """Check a design against the operating rules; returns RuleResult items.

    Errors make estimation unreliable or impossible; warnings flag regions
    where accuracy is known to degrade.
    """
    out = []
    branches = design.branches
    f = [b.resonant_frequency for b in branches]
    refs = [i for i, b in enumerate(branches) if b.role is Role.REFERENCE]
    sensing = [i for i, b in enumerate(branches) if b.role.unknown is not None]

    out.append(RuleResult("single-reference", "error", len(refs) == 1,
                          f"{len(refs)} reference branch(es); exactly one is required"))

    lo, hi = rules.band
    outside = [branches[i].name for i in range(len(f)) if not lo <= f[i] <= hi]
    out.append(RuleResult("resonance-band", "error", not outside,
                          f"all resonances within {lo / MHz:g}-{hi / MHz:g} MHz"
                          + (f"; outside: {', '.join(outside)}" if outside else "")))

    close = [
        f"{branches[i].name}/{branches[j].name} ({abs(f[i] - f[j]) / MHz:.3g} MHz)"
        for i, j in itertools.combinations(range(len(f)), 2)
        if abs(f[i] - f[j]) < rules.min_gap
    ]
    out.append(RuleResult("frequency-gap", "error", not close,
                          f"adjacent resonances at least {rules.min_gap / MHz:g} MHz apart"
                          + (f"; too close: {', '.join(close)}" if close else "")))

    if len(refs) == 1:
        f_ref = f[refs[0]]
        top = max((f[i] for i in sensing), default=None)
        # resonances come from sqrt(l*c), so allow for round-off at the boundary
        ok = top is None or f_ref >= (top + rules.reference_margin) * (1 - 1e-9)
        msg = f"reference at {f_ref / MHz:.3g} MHz"
        if top is not None:
            msg += f", highest sensing resonance {top / MHz:.3g} MHz (needs {rules.reference_margin / MHz:g} MHz margin)"
        out.append(RuleResult("reference-above-sensors", "error", ok, msg))
        out.append(RuleResult("reference-frequency", "warning", f_ref >= rules.reference_floor,
                              f"reference at {f_ref / MHz:.3g} MHz; coupling estimates are less stable below "
                              f"{rules.reference_floor / MHz:g} MHz"))

    risky = [
        branches[i].name for i in sensing
        if branches[i].line.length > rules.long_line and f[i] > rules.high_frequency
    ]
    out.append(RuleResult("long-line-high-frequency", "warning", not risky,
                          f"lines over {rules.long_line * 100:g} cm with resonances above "
                          f"{rules.high_frequency / MHz:g} MHz lose accuracy"
                          + (f"; affected: {', '.join(risky)}" if risky else "")))

    steep = [
        branches[i].name for i in sensing
        if branches[i].role is Role.RESISTIVE and branches[i].line.length > rules.long_line
        and (branches[i].l / 1e-6) / (branches[i].c / 1e-12) > rules.resistive_ratio_cap
    ]
    out.append(RuleResult("resistive-lc-ratio", "warning", not steep,
                          f"resistive branches on lines over {rules.long_line * 100:g} cm should keep "
                          f"l[uH]/c[pF] <= {rules.resistive_ratio_cap:g}"
                          + (f"; affected: {', '.join(steep)}" if steep else "")))
    return out


def design_passes(results) -> bool:
    return all(r.passed for r in results if r.severity == "error")
