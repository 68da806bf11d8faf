from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from textile_resonance import Role, system_impedance, s11_from_impedance
from textile_resonance.errors import DomainError
from textile_resonance.simulator import (
    EXPERIMENT1,
    EXPERIMENT2,
    EXPERIMENT3,
    LINE_MODELS,
    NOISELESS,
    TWISTED,
    Condition,
    LineModel,
    NoiseModel,
    ScenarioSpec,
    components_from_ratio,
    line_from_length,
    rng_stream,
    sample_design,
    synthesize_batch,
    synthesize_spectrum,
)
from textile_resonance.spectrum import SIMULATION_GRID, read_touchstone

DATA = Path(__file__).parent / "data"
MHz, uH, pF = 1e6, 1e-6, 1e-12


# ---------------------------------------------------------------------------
# lines


def test_twisted_line_anchor():
    assert line_from_length(TWISTED, 1.2).C_line == pytest.approx(113.5 * pF, rel=1e-12)


def test_zero_length_line_is_empty():
    for model in LINE_MODELS.values():
        ln = line_from_length(model, 0.0)
        assert (ln.R_line, ln.L_line, ln.C_line) == (0.0, 0.0, 0.0)


@given(st.floats(0, 3), st.sampled_from(sorted(LINE_MODELS)))
def test_lines_scale_linearly(length, style):
    model = LINE_MODELS[style]
    a, b = line_from_length(model, length), line_from_length(model, 2 * length)
    assert b.C_line == pytest.approx(2 * a.C_line, rel=1e-12, abs=1e-30)
    assert b.L_line == pytest.approx(2 * a.L_line, rel=1e-12, abs=1e-30)
    assert b.R_line == pytest.approx(2 * a.R_line, rel=1e-12, abs=1e-30)
    assert a.length == length


def test_half_length_halves_capacitance():
    assert line_from_length(TWISTED, 0.6).C_line == pytest.approx(line_from_length(TWISTED, 1.2).C_line / 2)


def test_line_validation():
    with pytest.raises(DomainError):
        line_from_length(TWISTED, -0.1)
    with pytest.raises(DomainError):
        LineModel(-1.0, 0.0, 0.0)


# ---------------------------------------------------------------------------
# components and scenarios


def test_components_from_ratio():
    l, c = components_from_ratio(27 * MHz, 1.0)
    assert l / uH == pytest.approx(c / pF, rel=1e-12)
    assert l / uH == pytest.approx(5.89, abs=0.01)
    assert 1 / (2 * np.pi * np.sqrt(l * c)) == pytest.approx(27 * MHz, rel=1e-12)
    l, c = components_from_ratio(10 * MHz, 0.25)
    assert (l / uH) / (c / pF) == pytest.approx(0.25)


def test_condition_counts():
    assert len(EXPERIMENT1.conditions()) == 400
    assert len(EXPERIMENT2.conditions()) == 400
    assert len(EXPERIMENT3.conditions()) == 500
    assert [c.index for c in EXPERIMENT3.conditions()] == list(range(500))


@pytest.mark.parametrize(
    "kw",
    [
        dict(n_sensors=2),
        dict(n_sensors=1, reference_frequency=None),
        dict(n_sensors=3, gaps=()),
        dict(ratio_range=(2.0, 1.0)),
        dict(coupling_range=(0.2, 1.5)),
        dict(reps=0),
    ],
)
def test_scenario_validation(kw):
    with pytest.raises(DomainError):
        ScenarioSpec(**kw)


def test_experiment1_design():
    cond = EXPERIMENT1.conditions()[37]
    truth, known = sample_design(EXPERIMENT1, rng_stream(0), cond)
    assert truth.n_branches == 1 and truth.branches[0].role is Role.REFERENCE
    rd = truth.reader
    assert (rd.transmitter_inductance, rd.parasitic_capacitance, truth.receiver_inductance) == (0.6 * uH, 10 * pF, 4.54 * uH)
    assert truth.branches[0].resonant_frequency == pytest.approx(cond.frequency, rel=1e-12)
    assert 0.25 <= truth.coupling_factor <= 0.29


def test_experiment2_design():
    for cond in EXPERIMENT2.conditions()[::37]:
        truth, known = sample_design(EXPERIMENT2, rng_stream(1, cond.index), cond)
        ref, sensor = truth.branches
        assert ref.resonant_frequency == pytest.approx(27 * MHz, rel=1e-12)
        assert ref.l / uH == pytest.approx(ref.c / pF)
        assert sensor.resonant_frequency <= 25 * MHz * (1 + 1e-12)
        lo, hi = cond.line_range
        assert all(lo <= b.line.length <= hi for b in truth.branches)


def test_experiment3_design_spacing():
    cond = Condition(0, 12 * MHz, (0.0, 0.25), 3 * MHz)
    truth, _ = sample_design(EXPERIMENT3, rng_stream(2), cond)
    f = sorted(b.resonant_frequency for b in truth.branches[1:])
    assert f == pytest.approx([9 * MHz, 12 * MHz, 15 * MHz])


def test_known_design_hides_the_unknown():
    cond = EXPERIMENT2.conditions()[50]
    sample = sample_design(EXPERIMENT2, rng_stream(3), cond, roles=[Role.RESISTIVE])
    t, k = sample.truth.branches[1], sample.known.branches[1]
    assert k.role is Role.RESISTIVE
    assert (k.l, k.c) == (t.l, t.c)
    assert k.r == sample.nominal_r[1]
    assert k.line == sample.nominal_lines[1]
    cap = sample.view([Role.REFERENCE, Role.CAPACITIVE]).branches[1]
    assert cap.c == sample.nominal_lc[1][1] and cap.r == t.r


def test_roles_do_not_change_ground_truth():
    cond = EXPERIMENT3.conditions()[123]
    a = sample_design(EXPERIMENT3, rng_stream(4), cond)
    b = sample_design(EXPERIMENT3, rng_stream(4), cond, roles=[Role.INDUCTIVE, Role.RESISTIVE, Role.CAPACITIVE])
    assert a.truth == b.truth


def test_same_seed_same_design():
    cond = EXPERIMENT2.conditions()[200]
    assert sample_design(EXPERIMENT2, rng_stream(9, 1), cond).truth == sample_design(EXPERIMENT2, rng_stream(9, 1), cond).truth
    assert sample_design(EXPERIMENT2, rng_stream(9, 1), cond).truth != sample_design(EXPERIMENT2, rng_stream(9, 2), cond).truth


@given(st.sampled_from([EXPERIMENT1, EXPERIMENT2, EXPERIMENT3]), st.integers(0, 499), st.integers(0, 2**32 - 1))
def test_sampled_designs_respect_invariants(spec, idx, seed):
    conds = spec.conditions()
    cond = conds[idx % len(conds)]
    sample = sample_design(spec, rng_stream(seed), cond)
    truth = sample.truth
    f = [b.resonant_frequency for b in truth.branches]
    assert len(set(f)) == len(f)
    lo, hi = spec.coupling_range
    assert lo <= truth.coupling_factor <= hi
    for b, nominal in zip(truth.branches, sample.nominal_lines):
        assert cond.line_range[0] <= b.line.length <= cond.line_range[1]
        dev = spec.line_capacitance_fluctuation
        assert nominal.C_line * (1 - dev) - 1e-24 <= b.line.C_line <= nominal.C_line * (1 + dev) + 1e-24
    for b in truth.branches[1:]:
        assert spec.sensor_band[0] * (1 - 1e-12) <= b.resonant_frequency <= spec.sensor_band[1] * (1 + 1e-12)


# ---------------------------------------------------------------------------
# spectra


def _exact(design):
    return s11_from_impedance(system_impedance(design, SIMULATION_GRID.frequencies), 50.0)


def test_noiseless_spectrum_is_the_model(shirt):
    d = shirt.interface()
    s = synthesize_spectrum(d, SIMULATION_GRID, NOISELESS)
    assert np.allclose(s.values, _exact(d), rtol=1e-13, atol=1e-15)


def test_quantization_only(shirt):
    d = shirt.interface()
    s = synthesize_spectrum(d, SIMULATION_GRID, NoiseModel(0.0, 3))
    exact = _exact(d)
    assert np.array_equal(s.values, np.round(exact.real, 3) + 1j * np.round(exact.imag, 3))


def test_rounding_is_half_even():
    out = NoiseModel(0.0, 0).apply(np.array([0.5, 1.5, 2.5, -0.5]) + 1j * np.array([0.5, 1.5, 2.5, -0.5]))
    assert list(out.real) == [0.0, 2.0, 2.0, -0.0]


def test_noise_level():
    clean = np.zeros(50_000, dtype=complex)
    noisy = NoiseModel(5e-4, None).apply(clean, rng_stream(11))
    diffs = np.concatenate([noisy.real, noisy.imag])
    assert diffs.size == 100_000
    assert np.std(diffs) == pytest.approx(5e-4, rel=0.02)
    assert abs(np.mean(diffs)) < 5e-4 * 0.02


def test_noise_requires_generator(shirt):
    with pytest.raises(DomainError):
        synthesize_spectrum(shirt.interface(), SIMULATION_GRID, NoiseModel())


@pytest.mark.parametrize("kw", [dict(sigma=-1.0), dict(decimals=-1)])
def test_noise_validation(kw):
    with pytest.raises(DomainError):
        NoiseModel(**kw)


def test_golden_noisy_spectrum(shirt):
    """Default noise with a fixed seed must reproduce the frozen file exactly."""
    s = synthesize_spectrum(shirt.interface(), SIMULATION_GRID, NoiseModel(), rng_stream(2024))
    golden = read_touchstone(DATA / "shirt_noisy.s1p")
    assert np.array_equal(s.values, golden.values)


def test_batch_synthesis_matches_single(shirt):
    designs = [shirt.interface(k) for k in (0.25, 0.27, 0.29)]
    rngs = lambda: [rng_stream(5, i) for i in range(3)]
    batch = synthesize_batch(designs, SIMULATION_GRID, NoiseModel(), rngs())
    for row, d, rng in zip(batch, designs, rngs()):
        assert np.array_equal(row, synthesize_spectrum(d, SIMULATION_GRID, NoiseModel(), rng).values)
    exact = synthesize_batch(designs, SIMULATION_GRID, NOISELESS, None)
    assert np.allclose(exact[1], _exact(designs[1]), rtol=1e-13, atol=1e-15)


def test_streams_are_independent_of_order():
    a = [rng_stream(3, 1, i).normal() for i in range(5)]
    b = [rng_stream(3, 1, i).normal() for i in reversed(range(5))][::-1]
    assert a == b
    assert len(set(a)) == 5
