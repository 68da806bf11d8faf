"""Equivalent-circuit model and sensor-value recovery for multi-resonant
textile interfaces read out through a single inductive link."""

from .circuit_model import (
    InterfaceDesign,
    LineParams,
    ReaderParams,
    Role,
    SensorBranch,
    approx_impedance_at_branch_resonance,
    branch_impedance,
    branch_resonant_frequency,
    impedance_from_s11,
    mutual_impedance,
    s11_from_impedance,
    system_impedance,
)
from .errors import (
    DesignError,
    DomainError,
    EstimationError,
    GridRangeError,
    ParseError,
    SingularityError,
    TextileResonanceError,
)
from .estimator import EstimationResult, EstimatorConfig, KnownDesign, estimate
from .spectrum import FrequencyGrid, Spectrum, find_minima, interpolate, read_spectrum, write_spectrum

__version__ = "0.1.0"
