import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from thzmc.channel import (
    SPEED_OF_LIGHT,
    W1,
    W2,
    AbsorptionSpectrum,
    CapacityCurve,
    DegenerateGeometryError,
    LinkBudget,
    LinkGeometry,
    OutOfRangeError,
    TransmissionWindow,
    load_spectrum,
    path_loss,
    sub_band_count,
    synthetic_spectrum,
    usable_bandwidth,
    wideband_capacity,
    write_spectrum,
)

_GRID = np.linspace(0.9e12, 3.6e12, 5401)
FLAT = AbsorptionSpectrum(_GRID, np.zeros_like(_GRID))


def test_free_space_loss_at_one_thz_one_metre():
    geom = LinkGeometry(0.0, 1.0)
    assert path_loss(1e12, geom, FLAT) == pytest.approx(1.7570e9, rel=1e-4)
    assert path_loss(1e12, geom, FLAT) == pytest.approx((4 * math.pi * 1e12 / SPEED_OF_LIGHT) ** 2,
                                                        rel=1e-15)


def test_doubling_distance_quadruples_spreading_loss():
    a = path_loss(1.05e12, LinkGeometry(0.0, 3.0), FLAT)
    b = path_loss(1.05e12, LinkGeometry(0.0, 6.0), FLAT)
    assert b / a == pytest.approx(4.0, rel=1e-14)


def test_absorption_factor_e():
    spec = AbsorptionSpectrum.constant(0.1, 0.9e12, 1.2e12)
    geom = LinkGeometry(0.0, 10.0)
    ratio = path_loss(1e12, geom, spec) / path_loss(1e12, geom, FLAT)
    assert ratio == pytest.approx(math.e, rel=1e-14)


def test_path_loss_errors():
    with pytest.raises(OutOfRangeError):
        path_loss(4e12, LinkGeometry(0.0, 1.0), FLAT)
    with pytest.raises(DegenerateGeometryError):
        path_loss(1e12, LinkGeometry(0.0, 0.0), FLAT)


def test_geometry_from_heights():
    g = LinkGeometry.from_heights(2.4, 3.0, 1.2)
    assert g.x_bar == math.sqrt(1.8 ** 2 + 2.4 ** 2)
    with pytest.raises(ValueError):
        LinkGeometry(5.0, 4.0)


def test_window_validation():
    assert W1.n_sub_bands == 100 and W2.n_sub_bands == 150
    assert W1.centers[0] == pytest.approx(0.9905e12)
    with pytest.raises(ValueError):
        TransmissionWindow(1e12, 1e12 + 1.5e9, 1e9)
    with pytest.raises(ValueError):
        TransmissionWindow(2e12, 1e12)


def test_spectrum_validation():
    with pytest.raises(ValueError):
        AbsorptionSpectrum(np.array([1.0, 1.0]), np.array([0.0, 0.0]))
    with pytest.raises(ValueError):
        AbsorptionSpectrum(np.array([1.0, 2.0]), np.array([0.0, -1.0]))
    sparse = AbsorptionSpectrum(np.array([0.99e12, 1.0e12, 1.09e12]), np.zeros(3))
    with pytest.raises(ValueError, match="sparser"):
        sparse.check_window(W1)


def test_spectrum_interpolation_is_linear():
    spec = AbsorptionSpectrum(np.array([1.0e12, 1.002e12]), np.array([0.0, 2.0]))
    assert spec(1.0005e12) == pytest.approx(0.5)


def test_spectrum_file_round_trip(tmp_path):
    spec = synthetic_spectrum()
    path = tmp_path / "s.tsv"
    write_spectrum(path, spec, ["test"])
    back = load_spectrum(path)
    np.testing.assert_allclose(back.frequencies, spec.frequencies, rtol=0, atol=1e-5)
    np.testing.assert_allclose(back.k_abs, spec.k_abs, rtol=1e-9)


def test_missing_spectrum_names_format(tmp_path):
    with pytest.raises(FileNotFoundError, match="frequency_hz<TAB>k_abs_per_m"):
        load_spectrum(tmp_path / "nope.tsv")


def test_bundled_spectrum_covers_both_windows(spectrum):
    spectrum.check_window(W1)
    spectrum.check_window(W2)


def test_flat_absorption_band_limited_by_spreading_only():
    # with no absorption the loss varies by (1.09/0.99)^2 < 2 across W1
    for x in (1.0, 10.0, 50.0):
        lo, hi = usable_bandwidth(LinkGeometry.from_heights(x, 3, 1.2), FLAT, W1)
        assert (lo, hi) == (W1.lo, W1.hi)


def test_single_lorentzian_band_shrinks_with_distance():
    spec = synthetic_spectrum(lines=((1.04e12, 0.5, 5e9),), spans=((0.98e12, 1.10e12),))
    widths = []
    for x in np.arange(1.0, 21.0):
        lo, hi = usable_bandwidth(LinkGeometry.from_heights(x, 3, 1.2), spec, W1)
        widths.append(hi - lo)
    assert all(b <= a for a, b in zip(widths, widths[1:]))
    assert widths[-1] < widths[0]


def test_usable_band_contains_minimum_and_is_within_3db(spectrum):
    geom = LinkGeometry.from_heights(7.0, 3, 1.2)
    lo, hi = usable_bandwidth(geom, spectrum, W1)
    fc = W1.centers
    loss = path_loss(fc, geom, spectrum)
    inside = (fc > lo) & (fc < hi)
    assert fc[np.argmin(loss)] > lo and fc[np.argmin(loss)] < hi
    assert np.all(loss[inside] <= 2 * loss.min())
    # maximal: the neighbours just outside exceed the threshold (or hit the edge)
    below, above = np.flatnonzero(fc < lo), np.flatnonzero(fc > hi)
    if below.size:
        assert loss[below[-1]] > 2 * loss.min()
    if above.size:
        assert loss[above[0]] > 2 * loss.min()


@pytest.mark.parametrize("width, count", [(91.46e9, 91), (1e9, 1), (58.65e9, 58)])
def test_sub_band_count_floors_the_width(monkeypatch, width, count):
    import thzmc.channel as ch

    monkeypatch.setattr(ch, "usable_bandwidth", lambda g, s, w: (1e12, 1e12 + width))
    assert sub_band_count(LinkGeometry(1, 2), FLAT, W1) == count


def test_capacity_snr_one_gives_one_bit_per_hz():
    window = TransmissionWindow(1.0e12, 1.001e12, 1e9)
    spec = AbsorptionSpectrum.constant(0.0, 0.99e12, 1.01e12)
    geom = LinkGeometry(0.0, 1.0)
    loss = path_loss(window.centers[0], geom, spec)
    n0 = 1e-20
    budget = LinkBudget(loss * window.delta_f * n0, 1.0, 1.0, n0)
    assert wideband_capacity(geom, spec, window, budget) == pytest.approx(1e9, rel=1e-12)


def test_capacity_term_by_term_oracle(spectrum, budget):
    geom = LinkGeometry.from_heights(2.0, 3.0, 1.2)
    lo, hi = usable_bandwidth(geom, spectrum, W1)
    n_b = round((hi - lo) / 1e9)
    total = 0.0
    for i in range(n_b):
        f = lo + (i + 0.5) * 1e9
        k = float(np.interp(f, spectrum.frequencies, spectrum.k_abs))
        loss = (4 * math.pi * f * geom.x_bar / 299792458.0) ** 2 * math.exp(k * geom.x_bar)
        snr = (budget.p_t_total / n_b) * budget.g_ap * budget.g_ue / (loss * 1e9 * budget.n0_density)
        total += 1e9 * math.log2(1 + snr)
    assert wideband_capacity(geom, spectrum, W1, budget) == pytest.approx(total, rel=1e-9)


def test_waterfilling_beats_uniform(spectrum, budget):
    from dataclasses import replace

    geom = LinkGeometry.from_heights(20.0, 3.0, 1.2)
    uni = wideband_capacity(geom, spectrum, W1, budget)
    wf = wideband_capacity(geom, spectrum, W1, replace(budget, allocation="waterfilling"))
    assert wf >= uni * (1 - 1e-12)


@settings(max_examples=40, deadline=None)
@given(x=st.floats(0.1, 60.0), f=st.floats(0.991e12, 1.089e12))
def test_path_loss_increases_with_distance(spectrum, x, f):
    a = path_loss(f, LinkGeometry.from_heights(x, 3, 1.2), spectrum)
    b = path_loss(f, LinkGeometry.from_heights(x * 1.1, 3, 1.2), spectrum)
    assert b > a


@settings(max_examples=30, deadline=None)
@given(x=st.floats(0.5, 40.0))
def test_usable_width_non_increasing(spectrum, x):
    def width(d):
        lo, hi = usable_bandwidth(LinkGeometry.from_heights(d, 3, 1.2), spectrum, W1)
        return hi - lo

    assert width(x * 1.5) <= width(x)


def test_capacity_decreasing_with_band_held_fixed(spectrum, budget):
    curve = CapacityCurve(spectrum, W1, budget, 3.0, 1.2, 1.0, 40.0)
    for k, (a, b) in enumerate(curve.segments):
        xs = np.linspace(a, b, 7)
        c = curve.on_segment(k, xs)
        assert np.all(np.diff(c) < 0) and np.all(c >= 0)


def test_capacity_curve_matches_exact_evaluation(spectrum, budget):
    curve = CapacityCurve(spectrum, W1, budget, 3.0, 1.2, 1.0, 40.0)
    xs = np.random.default_rng(0).uniform(1.0, 40.0, 2000)
    exact = np.array([wideband_capacity(LinkGeometry.from_heights(x, 3, 1.2), spectrum, W1, budget)
                      for x in xs[:50]])
    np.testing.assert_allclose(curve.exact(xs[:50]), exact, rtol=1e-12)
    np.testing.assert_allclose(curve(xs), curve.exact(xs), rtol=1e-6)
