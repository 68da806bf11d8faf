"""Design generators and fixtures shared by the test modules."""

from dataclasses import replace

import numpy as np
from hypothesis import strategies as st

from textile_resonance import InterfaceDesign, LineParams, ReaderParams, Role, SensorBranch
from textile_resonance.estimator import KnownDesign
from textile_resonance.simulator import LINE_MODELS, TWISTED, components_from_ratio, line_from_length

MHz, uH, pF = 1e6, 1e-6, 1e-12
READER = ReaderParams(0.6 * uH, 10 * pF, 50.0)
L_R = 4.54 * uH
SENSOR_ROLES = (Role.CAPACITIVE, Role.INDUCTIVE, Role.RESISTIVE)


def validation_design(k=0.53):
    """Three-branch bench interface on 100/200/300 mm parallel lines.

    Component values are representative placeholders for the bench build.
    """
    model = LINE_MODELS["parallel-10mm"]
    parts = [(10.0, 2.2 * uH, 100 * pF), (10.0, 1.0 * uH, 100 * pF), (10.0, 1.0 * uH, 47 * pF)]
    branches = [
        SensorBranch(r, l, c, line_from_length(model, length), Role.FIXED, f"b{i}")
        for i, ((r, l, c), length) in enumerate(zip(parts, (0.1, 0.2, 0.3)))
    ]
    return InterfaceDesign(READER, L_R, k, branches)


def random_model_design(rng, n_max=4):
    """Loosely constrained design for model-level comparisons."""
    n = int(rng.integers(1, n_max + 1))
    while True:
        branches = []
        for _ in range(n):
            line = LineParams(rng.uniform(0, 3), rng.uniform(0, 1 * uH), rng.uniform(0, 100 * pF), 0.0)
            branches.append(SensorBranch(rng.uniform(0, 100), rng.uniform(0.1, 30) * uH, rng.uniform(1, 200) * pF, line))
        f = [b.resonant_frequency for b in branches]
        if len(set(f)) == n:
            break
    reader = ReaderParams(rng.uniform(0.1, 2) * uH, rng.uniform(0, 30) * pF, rng.choice([50.0, 75.0]))
    return InterfaceDesign(reader, rng.uniform(1, 10) * uH, rng.uniform(0, 1), branches)


def spaced_frequencies(rng, n, lo, hi, gap):
    """``n`` sorted frequencies in ``[lo, hi]`` with adjacent spacing >= ``gap``."""
    # draw in the shrunken interval, then re-insert the gaps
    free = (hi - lo) - (n - 1) * gap
    if free < 0:
        raise ValueError("band too narrow for the requested gaps")
    u = np.sort(rng.uniform(0.0, free, n))
    return lo + u + gap * np.arange(n)


def random_valid_design(rng, idle_jitter=0.05):
    """A design inside the estimator's operating envelope.

    One to three sensing branches resonating in 5-25 MHz at least 3 MHz
    apart, a reference at 10 MHz or above and at least 3 MHz over the top
    sensor, twisted lines up to 25 cm whose true capacitance deviates up to
    20% from nominal, reactive branches with r <= 15 ohm. Returns
    ``(truth, known)``; ``known`` holds the idle values, which differ from
    the truth by up to ``idle_jitter`` in the unknown component.
    """
    n = int(rng.integers(1, 4))
    while True:
        f = spaced_frequencies(rng, n, 5 * MHz, 25 * MHz, 3 * MHz)
        lo_ref = max(10 * MHz, f[-1] + 3 * MHz)
        if lo_ref <= 30 * MHz:
            break
    f_ref = rng.uniform(lo_ref, 30 * MHz)
    truth, known = [], []
    for fj in f:
        role = SENSOR_ROLES[int(rng.integers(3))]
        nominal = line_from_length(TWISTED, rng.uniform(0, 0.25))
        true_line = replace(nominal, C_line=nominal.C_line * (1 + rng.uniform(-0.2, 0.2)))
        l, c = components_from_ratio(fj, rng.uniform(0.1, 2.0))
        r = rng.uniform(10, 60) if role is Role.RESISTIVE else rng.uniform(0, 15)
        s = 1 + rng.uniform(-idle_jitter, idle_jitter)
        truth.append(SensorBranch(r, l, c, true_line, role))
        idle = {Role.CAPACITIVE: dict(c=c * s), Role.INDUCTIVE: dict(l=l * s), Role.RESISTIVE: dict(r=r * s)}[role]
        known.append(replace(truth[-1], line=nominal, **idle))
    nominal = line_from_length(TWISTED, rng.uniform(0, 0.25))
    true_line = replace(nominal, C_line=nominal.C_line * (1 + rng.uniform(-0.2, 0.2)))
    l, c = components_from_ratio(f_ref, 1.0)
    truth.append(SensorBranch(1.0, l, c, true_line, Role.REFERENCE, "reference"))
    known.append(replace(truth[-1], line=nominal))
    k = rng.uniform(0.25, 0.29)
    return InterfaceDesign(READER, L_R, k, truth), KnownDesign(READER, L_R, known)


def unknown_value(branch):
    return getattr(branch, branch.role.unknown)


# ---------------------------------------------------------------------------
# hypothesis strategies

positive = lambda lo, hi: st.floats(lo, hi, allow_nan=False, allow_infinity=False)


@st.composite
def lines(draw):
    return LineParams(draw(positive(0, 5)), draw(positive(0, 1e-6)), draw(positive(0, 150e-12)))


@st.composite
def branches(draw):
    return SensorBranch(draw(positive(0, 200)), draw(positive(1e-7, 5e-5)), draw(positive(1e-12, 5e-10)), draw(lines()))


@st.composite
def designs(draw, max_branches=4):
    bs = draw(st.lists(branches(), min_size=1, max_size=max_branches,
                       unique_by=lambda b: b.resonant_frequency))
    reader = ReaderParams(draw(positive(1e-7, 5e-6)), draw(positive(0, 5e-11)), draw(positive(10, 100)))
    return InterfaceDesign(reader, draw(positive(1e-6, 2e-5)), draw(positive(0, 1)), bs)


frequencies = positive(1e5, 1e8)
