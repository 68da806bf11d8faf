from pathlib import Path

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from helpers import L_R, READER, positive
from textile_resonance import InterfaceDesign, SensorBranch
from textile_resonance.errors import DomainError, GridRangeError, ParseError, SingularityError
from textile_resonance.simulator import TWISTED, components_from_ratio, line_from_length, synthesize_spectrum
from textile_resonance.spectrum import (
    SIMULATION_GRID,
    FrequencyGrid,
    Spectrum,
    csv_text,
    find_minima,
    interpolate,
    minima_arrays,
    read_csv,
    read_spectrum,
    read_touchstone,
    to_impedance,
    to_s11,
    write_csv,
    write_spectrum,
    write_touchstone,
)

DATA = Path(__file__).parent / "data"
MHz = 1e6


def grid(points=11, start=1 * MHz, stop=2 * MHz):
    return FrequencyGrid(start, stop, points)


def interface(freqs, r=2.0, length=0.1):
    branches = []
    for f in freqs:
        l, c = components_from_ratio(f, 1.0)
        branches.append(SensorBranch(r, l, c, line_from_length(TWISTED, length)))
    return InterfaceDesign(READER, L_R, 0.27, branches)


# ---------------------------------------------------------------------------
# containers


@pytest.mark.parametrize("args", [(0.0, 1.0, 3), (2.0, 1.0, 3), (1.0, 2.0, 1), (1.0, 2.0, 2.5)])
def test_grid_invariants(args):
    with pytest.raises(DomainError):
        FrequencyGrid(*args)


def test_grid_is_uniform_linear():
    g = FrequencyGrid(5 * MHz, 30 * MHz, 101)
    assert g.frequencies[0] == 5 * MHz and g.frequencies[-1] == 30 * MHz
    assert np.allclose(np.diff(g.frequencies), 0.25 * MHz)
    assert g.step == 0.25 * MHz


def test_spectrum_invariants():
    g = grid(3)
    with pytest.raises(DomainError):
        Spectrum(g, [0, 1])
    with pytest.raises(DomainError):
        Spectrum(g, [0, np.nan, 1])
    with pytest.raises(DomainError):
        Spectrum(g, [0, 0, 0], kind="admittance")
    s = Spectrum(g, [1, 2, 3])
    with pytest.raises(ValueError):
        s.values[0] = 5


# ---------------------------------------------------------------------------
# interpolation


def test_interpolation_on_grid_points_returns_samples():
    g = grid(5)
    vals = np.array([1 + 1j, 2 - 1j, 0.5j, -3, 4 + 4j])
    s = Spectrum(g, vals)
    for f, v in zip(g.frequencies, vals):
        assert interpolate(s, f) == v


def test_interpolation_reproduces_linear_functions():
    g = grid(7)
    a, b = 3e-6, -2.0
    s = Spectrum(g, a * g.frequencies + b + 1j * (b - a * g.frequencies))
    for f in np.linspace(g.start, g.stop, 37):
        v = interpolate(s, f)
        assert v.real == pytest.approx(a * f + b, rel=1e-12)
        assert v.imag == pytest.approx(b - a * f, rel=1e-12)


def test_interpolation_midpoint_is_mean():
    g = grid(3)
    s = Spectrum(g, [1 + 2j, 3 - 4j, 0])
    assert interpolate(s, 0.5 * (g.frequencies[0] + g.frequencies[1])) == pytest.approx((4 - 2j) / 2)


@pytest.mark.parametrize("f", [0.5 * MHz, 2.1 * MHz, float("nan")])
def test_interpolation_out_of_range(f):
    with pytest.raises(GridRangeError):
        interpolate(Spectrum(grid(3), [0, 1, 2]), f)


@given(st.lists(st.tuples(positive(-10, 10), positive(-10, 10)), min_size=2, max_size=30), st.data())
def test_interpolation_is_piecewise_linear(samples, data):
    g = grid(len(samples))
    vals = np.array([complex(a, b) for a, b in samples])
    s = Spectrum(g, vals)
    i = data.draw(st.integers(0, len(samples) - 2))
    t = data.draw(st.floats(0, 1))
    f0, f1 = g.frequencies[i], g.frequencies[i + 1]
    f = min(max(f0 + t * (f1 - f0), f0), f1)
    tt = (f - f0) / (f1 - f0)
    expected = (1 - tt) * vals[i] + tt * vals[i + 1]
    assert abs(interpolate(s, f) - expected) <= 1e-12 * (1 + abs(vals[i]) + abs(vals[i + 1]))


def test_interpolation_vectorised():
    g = grid(5)
    s = Spectrum(g, np.arange(5) * (1 + 1j))
    f = np.array([1.1, 1.5, 1.9]) * MHz
    assert np.allclose(interpolate(s, f), [(0.4 * (1 + 1j)), 2 * (1 + 1j), 3.6 * (1 + 1j)])


# ---------------------------------------------------------------------------
# conversion


def test_conversions_reference_values():
    s = Spectrum(grid(3), [0, -1, 0.6 + 0.8j])
    z = to_impedance(s)
    assert z.kind == "impedance"
    assert z.values[0] == 50 and z.values[1] == 0
    assert z.values[2] == pytest.approx(100j)
    assert to_s11(z).kind == "s11"
    assert to_impedance(z) is z


def test_conversion_round_trip():
    rng = np.random.default_rng(1)
    z = Spectrum(grid(50), rng.uniform(0, 500, 50) + 1j * rng.uniform(-500, 500, 50), "impedance")
    back = to_impedance(to_s11(z))
    assert np.allclose(back.values, z.values, rtol=1e-12, atol=0)


def test_conversion_pole_reports_index():
    with pytest.raises(SingularityError) as exc:
        to_impedance(Spectrum(grid(3), [0, 1, 0]))
    assert exc.value.index == 1
    with pytest.raises(SingularityError) as exc:
        to_s11(Spectrum(grid(3), [0, 0, -50], "impedance"))
    assert exc.value.index == 2


# ---------------------------------------------------------------------------
# minima


def test_monotone_spectrum_has_no_minima():
    g = grid(21)
    assert find_minima(Spectrum(g, np.linspace(0.1, 0.9, 21))) == []


@given(positive(0.05, 0.95), positive(0.1, 10), positive(0.0, 0.5))
def test_quadratic_dip_vertex(u, curv, floor):
    g = FrequencyGrid(1 * MHz, 30 * MHz, 101)
    f = g.frequencies
    vertex = g.start + u * g.span
    mag = floor + curv * ((f - vertex) / g.span) ** 2
    (loc, val), = find_minima(Spectrum(g, mag))
    assert abs(loc - vertex) <= 0.01 * g.step
    assert val == pytest.approx(floor, abs=1e-9)


def test_refinement_can_be_switched_off():
    g = grid(11)
    mag = (g.frequencies - 1.43 * MHz) ** 2 / MHz**2 + 0.1
    (loc, _), = find_minima(Spectrum(g, mag), refine=False)
    assert loc == g.frequencies[4]


def _dense_minima(design):
    dense = synthesize_spectrum(design, FrequencyGrid(1 * MHz, 30 * MHz, 10001))
    return [f for f, _ in find_minima(dense, refine=False)]


def test_single_branch_minimum_matches_dense_search():
    d = interface([15 * MHz])
    coarse = find_minima(synthesize_spectrum(d, SIMULATION_GRID))
    dense = _dense_minima(d)
    assert len(coarse) == len(dense) == 1
    assert abs(coarse[0][0] - dense[0]) <= 0.5 * SIMULATION_GRID.step


def test_three_branches_give_three_minima():
    d = interface([13 * MHz, 18 * MHz, 27 * MHz])
    coarse = find_minima(synthesize_spectrum(d, SIMULATION_GRID))
    dense = _dense_minima(d)
    assert len(coarse) == len(dense) == 3
    for (f, _), g in zip(coarse, dense):
        assert abs(f - g) <= 0.5 * SIMULATION_GRID.step
    assert [f for f, _ in coarse] == sorted(f for f, _ in coarse)


def test_depth_and_window_filters():
    f = np.linspace(0, 1, 21)
    mag = np.ones(21)
    mag[5] = 0.5  # deep, isolated
    mag[12], mag[13], mag[14] = 0.98, 0.99, 0.985  # shallow double dip
    loc, _, n = minima_arrays(mag, f, refine=False)
    assert n == 3
    loc, _, n = minima_arrays(mag, f, refine=False, min_depth=0.05)
    assert n == 1 and loc[0] == f[5]
    # within three samples of a lower point, index 14 no longer counts
    loc, _, n = minima_arrays(mag, f, refine=False, window=3)
    assert n == 2 and list(loc) == [f[5], f[12]]


def test_minima_batched_rows_are_independent():
    f = np.linspace(0, 1, 11)
    a = (f - 0.33) ** 2
    b = np.cos(8 * f) + 2
    loc, val, n = minima_arrays(np.stack([a, b, np.ones(11)]), f)
    assert list(n) == [1, 1, 0]
    for row, expect in zip(loc[:2], (a, b)):
        assert row[0] == minima_arrays(expect, f)[0][0]
    assert np.isnan(loc[2]).all()


# ---------------------------------------------------------------------------
# Touchstone


def test_touchstone_round_trip_is_lossless(tmp_path):
    rng = np.random.default_rng(7)
    g = FrequencyGrid(5 * MHz, 30 * MHz, 101)
    s = Spectrum(g, rng.normal(size=101) + 1j * rng.normal(size=101))
    write_touchstone(s, tmp_path / "a.s1p")
    back = read_touchstone(tmp_path / "a.s1p")
    assert back.grid == g
    assert np.array_equal(back.values, s.values)
    assert (tmp_path / "a.s1p").read_text().splitlines()[0] == "# Hz S RI R 50"


def test_touchstone_hand_written_fixture(tmp_path):
    p = tmp_path / "three.s1p"
    p.write_text("! bench sweep\n# Hz S RI R 50\n1000000 0.5 -0.25\n2000000 0.125 0.0 ! trailing\n3000000 -1 1\n")
    s = read_touchstone(p)
    assert list(s.frequencies) == [1e6, 2e6, 3e6]
    assert list(s.values) == [0.5 - 0.25j, 0.125 + 0j, -1 + 1j]
    assert s.reference_impedance == 50


def test_touchstone_mhz_header(tmp_path):
    f = np.linspace(5, 30, 101)
    lines = ["# MHz S RI R 50"] + [f"{x:.4f} 0.1 0.2" for x in f]
    (tmp_path / "m.s1p").write_text("\n".join(lines) + "\n")
    s = read_touchstone(tmp_path / "m.s1p")
    assert s.grid.points == 101
    assert s.frequencies[0] == pytest.approx(5e6) and s.frequencies[-1] == pytest.approx(30e6)


def test_touchstone_magnitude_angle_and_db(tmp_path):
    (tmp_path / "ma.s1p").write_text("# GHz S MA R 75\n0.001 0.5 90\n0.002 1 180\n")
    s = read_touchstone(tmp_path / "ma.s1p")
    assert s.reference_impedance == 75
    assert s.values[0] == pytest.approx(0.5j)
    assert s.values[1] == pytest.approx(-1)
    (tmp_path / "db.s1p").write_text("# kHz S DB R 50\n1000 -20 0\n2000 0 -90\n")
    s = read_touchstone(tmp_path / "db.s1p")
    assert s.values[0] == pytest.approx(0.1)
    assert s.values[1] == pytest.approx(-1j)


@pytest.mark.parametrize(
    "text, line",
    [
        ("# Hz S XX R 50\n1 0 0\n2 0 0\n", 1),
        ("# Hz Z RI R 50\n1 0 0\n2 0 0\n", 1),
        ("# Hz S RI R 50\n1 0 0\n2 0\n", 3),
        ("# Hz S RI R 50\n1 0 0\n2 a 0\n", 3),
        ("# Hz S RI R 50\n1 0 0\n# Hz S RI R 50\n", 3),
        ("# Hz S RI R\n1 0 0\n", 1),
    ],
)
def test_touchstone_errors_carry_line_numbers(tmp_path, text, line):
    (tmp_path / "bad.s1p").write_text(text)
    with pytest.raises(ParseError) as exc:
        read_touchstone(tmp_path / "bad.s1p")
    assert exc.value.line == line


def test_touchstone_rejects_non_uniform_grid(tmp_path):
    (tmp_path / "u.s1p").write_text("# Hz S RI R 50\n1 0 0\n2 0 0\n4 0 0\n")
    with pytest.raises(ParseError):
        read_touchstone(tmp_path / "u.s1p")


def test_touchstone_empty(tmp_path):
    (tmp_path / "e.s1p").write_text("! nothing\n")
    with pytest.raises(ParseError):
        read_touchstone(tmp_path / "e.s1p")


# ---------------------------------------------------------------------------
# CSV


def test_csv_round_trip(tmp_path):
    rng = np.random.default_rng(8)
    s = Spectrum(grid(17), rng.normal(size=17) + 1j * rng.normal(size=17))
    write_csv(s, tmp_path / "a.csv")
    back = read_csv(tmp_path / "a.csv")
    assert np.array_equal(back.values, s.values) and back.grid == s.grid


def test_csv_fixture(tmp_path):
    (tmp_path / "f.csv").write_text("frequency_hz,s11_real,s11_imag\n1e6,0.5,-0.5\n2e6,0,1\n")
    s = read_csv(tmp_path / "f.csv")
    assert list(s.values) == [0.5 - 0.5j, 1j]


def test_csv_impedance_kind(tmp_path):
    z = Spectrum(grid(3), [50, 25 + 1j, 10j], "impedance")
    write_csv(z, tmp_path / "z.csv")
    assert (tmp_path / "z.csv").read_text().startswith("frequency_hz,z_real,z_imag\n")
    assert read_csv(tmp_path / "z.csv").kind == "impedance"


@pytest.mark.parametrize(
    "text",
    [
        "frequency_hz,s11_real,s11_imag\n1e6,0.5\n2e6,0,1\n",
        "freq,re,im\n1e6,0,0\n2e6,0,0\n",
        "frequency_hz,s11_real,s11_imag\n1e6,0,0,0\n2e6,0,0\n",
        "",
    ],
)
def test_csv_errors(tmp_path, text):
    (tmp_path / "bad.csv").write_text(text)
    with pytest.raises(ParseError):
        read_csv(tmp_path / "bad.csv")


def test_dispatch_by_extension(tmp_path):
    s = Spectrum(grid(4), [0.1, 0.2j, -0.3, 0.4 + 0.4j])
    for name in ("x.csv", "x.s1p", "x.S1P"):
        write_spectrum(s, tmp_path / name)
        assert np.array_equal(read_spectrum(tmp_path / name).values, s.values)


# ---------------------------------------------------------------------------
# golden files


def test_golden_files_agree_with_each_other():
    a = read_touchstone(DATA / "shirt_noisy.s1p")
    b = read_csv(DATA / "shirt_noisy.csv")
    assert a.grid == b.grid == SIMULATION_GRID
    assert np.array_equal(a.values, b.values)


def test_golden_files_rewrite_byte_identically(tmp_path):
    s = read_touchstone(DATA / "shirt_noisy.s1p")
    write_touchstone(s, tmp_path / "t.s1p")
    write_csv(s, tmp_path / "t.csv")
    assert (tmp_path / "t.s1p").read_bytes() == (DATA / "shirt_noisy.s1p").read_bytes()
    assert (tmp_path / "t.csv").read_bytes() == (DATA / "shirt_noisy.csv").read_bytes()
    assert csv_text(s).encode() == (DATA / "shirt_noisy.csv").read_bytes()


@given(st.lists(st.tuples(st.floats(-1e3, 1e3, allow_nan=False), st.floats(-1e3, 1e3, allow_nan=False)),
                min_size=2, max_size=20))
def test_round_trip_keeps_nine_significant_digits(tmp_path_factory, pairs):
    d = tmp_path_factory.mktemp("rt")
    s = Spectrum(FrequencyGrid(1e6, 3e7, len(pairs)), [complex(a, b) for a, b in pairs])
    for name in ("p.s1p", "p.csv"):
        write_spectrum(s, d / name)
        back = read_spectrum(d / name).values
        assert np.allclose(back, s.values, rtol=1e-9, atol=0)
