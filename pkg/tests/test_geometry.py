import math

import numpy as np
import pytest
from hypothesis import assume, example, given
from hypothesis import strategies as st

from thz_nearfield.errors import DegenerateGeometryError, DomainError
from thz_nearfield.geometry import (
    SPEED_OF_LIGHT,
    ArrayGeometry,
    PolarLocation,
    effective_rank,
    element_distances,
    far_field_los_channel,
    far_field_steering,
    los_mimo_channel,
    near_field_steering,
    rayleigh_distance,
    singular_spectrum,
    spherical_phase_error,
    subcarrier_frequencies,
    wavelength,
    wideband_los_channels,
)

angles = st.floats(-1.4, 1.4)
distances = st.floats(0.5, 200.0)
freqs = st.floats(1e9, 5e11)
counts = st.integers(1, 40)


def geometry_at(n, f):
    return ArrayGeometry.half_wavelength(n, f)


# --- array geometry --------------------------------------------------------

@given(counts, st.floats(1e-4, 0.1))
def test_positions_symmetric_and_aperture(n, d):
    g = ArrayGeometry(n, d)
    p = g.element_positions
    np.testing.assert_allclose(p, -p[::-1], atol=1e-15)
    assert g.aperture == pytest.approx(p.max() - p.min(), abs=1e-15)
    expected = (np.arange(1, n + 1) - (n + 1) / 2) * d
    np.testing.assert_allclose(p, expected)


def test_aperture_constructor_matches_half_wavelength_fig_setup():
    g = ArrayGeometry.from_aperture(0.5, wavelength(100e9) / 2)
    assert g.aperture >= 0.5
    assert g.aperture - g.element_spacing < 0.5
    assert g.element_count == 335


def test_invalid_geometry_and_locations():
    with pytest.raises(DomainError):
        ArrayGeometry(0, 0.1)
    with pytest.raises(DomainError):
        PolarLocation(0.0, 0.0)
    with pytest.raises(DomainError):
        PolarLocation(math.pi / 2, 1.0)


# --- Rayleigh distance -----------------------------------------------------

def test_rayleigh_distance_examples():
    # hand evaluation: 2 * 0.25 * 3e11 / 299792458
    assert rayleigh_distance(0.5, 0.3e12) == pytest.approx(500.3461, rel=1e-6)
    assert rayleigh_distance(0.5, 0.1e12) == pytest.approx(166.7820, rel=1e-6)
    assert rayleigh_distance(0.0, 1e9) == 0.0
    with pytest.raises(DomainError):
        rayleigh_distance(0.5, 0.0)
    with pytest.raises(DomainError):
        rayleigh_distance(0.5, -1.0)


# --- steering vectors ------------------------------------------------------

def test_single_element_steering_is_one():
    g = ArrayGeometry(1, 0.001)
    np.testing.assert_array_equal(near_field_steering(g, PolarLocation(0.3, 2.0), 1e11), [1 + 0j])


def test_broadside_steering_mirror_symmetric():
    g = geometry_at(64, 1e11)
    a = near_field_steering(g, PolarLocation(0.0, 3.0), 1e11)
    np.testing.assert_allclose(a, a[::-1], atol=1e-12)


def test_near_field_phase_matches_brute_force_distance():
    g = geometry_at(16, 1e11)
    loc = PolarLocation(0.4, 2.5)
    x, y = loc.cartesian
    k = 2 * np.pi * 1e11 / SPEED_OF_LIGHT
    r_n = np.array([math.hypot(x, y - p) for p in g.element_positions])
    np.testing.assert_allclose(near_field_steering(g, loc, 1e11), np.exp(-1j * k * (r_n - 2.5)), atol=1e-10)


@given(counts, angles, distances, freqs)
def test_steering_unit_modulus_and_self_inner_product(n, theta, r, f):
    g = geometry_at(n, f)
    if r < g.aperture:  # keep clear of the array itself
        r = g.aperture + r
    a = near_field_steering(g, PolarLocation(theta, r), f)
    assert np.max(np.abs(np.abs(a) - 1)) < 1e-12
    assert abs(np.vdot(a, a)) == pytest.approx(n, rel=1e-12)
    b = far_field_steering(g, theta, f)
    assert np.max(np.abs(np.abs(b) - 1)) < 1e-12


def test_degenerate_location_raises():
    g = ArrayGeometry(3, 0.5)
    with pytest.raises(DegenerateGeometryError):
        near_field_steering(g, PolarLocation(math.asin(1.0) - 1e-12, 0.5), 1e9)


def test_far_field_broadside_and_linear_phase():
    g = geometry_at(20, 1e11)
    np.testing.assert_allclose(far_field_steering(g, 0.0, 1e11), np.ones(20))
    steps = np.diff(np.unwrap(np.angle(far_field_steering(g, 0.3, 1e11))))
    np.testing.assert_allclose(steps, steps[0], atol=1e-12)


@given(angles, st.integers(8, 200))
def test_near_field_converges_to_far_field(theta, n):
    f = 1e11
    g = geometry_at(n, f)
    r = 1000 * max(rayleigh_distance(g.aperture, f), 1.0)
    near = near_field_steering(g, PolarLocation(theta, r), f)
    far = far_field_steering(g, theta, f)
    diff = np.angle(near * np.conj(far))
    diff -= np.angle(np.mean(np.exp(1j * diff)))  # remove a common phase
    assert np.max(np.abs(diff)) < 1e-3


def _brute_phase_error(g, r, f):
    # oracle: element distances from Cartesian coordinates, planar path p sin(0) = 0
    k = 2 * np.pi * f / SPEED_OF_LIGHT
    return max(abs(k * (math.hypot(r, p) - r)) for p in g.element_positions)


def test_phase_error_bound_at_rayleigh_distance():
    f = 1e11
    g = ArrayGeometry.from_aperture(0.5, wavelength(f) / 2)
    d_r = rayleigh_distance(g.aperture, f)
    at_dr = spherical_phase_error(g, PolarLocation(0.0, d_r), f)
    assert at_dr == pytest.approx(_brute_phase_error(g, d_r, f), rel=1e-9)
    assert at_dr <= math.pi / 8 + 1e-3
    assert spherical_phase_error(g, PolarLocation(0.0, d_r / 4), f) > math.pi / 8
    for r in np.geomspace(d_r, 50 * d_r, 20):
        assert spherical_phase_error(g, PolarLocation(0.0, r), f) <= math.pi / 8 + 1e-3


# --- LoS MIMO channels -----------------------------------------------------

def test_single_path_channel():
    f, r = 1e11, 7.3
    g = ArrayGeometry(1, 0.0)
    h = los_mimo_channel(g, g, PolarLocation(0.2, r), 0.0, f)
    assert h.shape == (1, 1)
    assert abs(h[0, 0]) == pytest.approx(1 / r)
    expected = np.exp(-2j * np.pi * f * r / SPEED_OF_LIGHT)
    assert h[0, 0] * r == pytest.approx(expected, abs=1e-9)


def test_channel_magnitudes_and_phases():
    f = 1e11
    tx, rx = geometry_at(8, f), ArrayGeometry(4, 0.01)
    c = PolarLocation(0.3, 4.0)
    h = los_mimo_channel(tx, rx, c, 0.2, f)
    np.testing.assert_allclose(np.abs(h), 1 / 4.0)
    axis = np.array([-math.sin(0.2), math.cos(0.2)])
    k = 2 * np.pi * f / SPEED_OF_LIGHT
    for i, q in enumerate(rx.element_positions):
        for j, p in enumerate(tx.element_positions):
            d = np.linalg.norm(c.cartesian + q * axis - np.array([0.0, p]))
            assert np.angle(h[i, j] * np.exp(1j * k * d)) == pytest.approx(0.0, abs=1e-6)


def test_overlapping_arrays_raise():
    g = ArrayGeometry(4, 0.1)
    with pytest.raises(DegenerateGeometryError):
        los_mimo_channel(g, g, PolarLocation(0.0, 1e-12), 0.0, 1e9)


def test_swap_with_mirrored_angle_is_transpose():
    f = 1e11
    tx, rx = geometry_at(12, f), geometry_at(5, f)
    h = los_mimo_channel(tx, rx, PolarLocation(0.4, 3.0), 0.0, f)
    back = los_mimo_channel(rx, tx, PolarLocation(-0.4, 3.0), 0.0, f)
    np.testing.assert_allclose(back, h.T, atol=1e-12)


@given(st.floats(-1.0, 1.0), st.floats(2.0, 30.0), st.floats(-0.8, 0.8))
@example(theta=1.0, r=2.0, psi=0.4)
@example(theta=-1.0, r=5.0, psi=0.35)
def test_swap_with_rotated_receiver_is_transpose(theta, r, psi):
    # the transmitter must lie in front of the rotated receiver array
    assume(abs(theta - psi) < 1.4)
    f = 3e10
    tx, rx = geometry_at(6, f), geometry_at(3, f)
    c = PolarLocation(theta, r)
    h = los_mimo_channel(tx, rx, c, psi, f)
    # place the original transmitter in the receiver's own frame, then mirror x
    rot = np.array([[math.cos(-psi), -math.sin(-psi)], [math.sin(-psi), math.cos(-psi)]])
    x, y = -rot @ c.cartesian
    back = los_mimo_channel(rx, tx, PolarLocation.from_cartesian(-x, y), psi, f)
    np.testing.assert_allclose(back * r, h.T * r, atol=1e-9)


def test_far_channel_is_effectively_rank_one():
    f = 1e11
    tx, rx = geometry_at(32, f), geometry_at(8, f)
    r = 10 * rayleigh_distance(tx.aperture + rx.aperture, f)
    s = singular_spectrum(los_mimo_channel(tx, rx, PolarLocation(0.2, r), 0.0, f))
    assert s[1] / s[0] < 0.01


def test_planar_channel_rank_one_and_close_to_exact_far_away():
    f = 1e11
    tx, rx = geometry_at(32, f), geometry_at(8, f)
    loc = PolarLocation(0.3, 5000.0)
    planar = far_field_los_channel(tx, rx, loc, 0.1, f)
    assert effective_rank(singular_spectrum(planar), 0.01) == 1
    exact = los_mimo_channel(tx, rx, loc, 0.1, f)
    assert np.max(np.abs(planar - exact)) * loc.distance < 0.05


def test_identity_spectrum_and_errors():
    s = singular_spectrum(np.eye(2))
    np.testing.assert_allclose(s, [1, 1])
    assert effective_rank(s, 0.5) == 2
    with pytest.raises(DomainError):
        singular_spectrum(np.zeros((0, 3)))
    with pytest.raises(DomainError):
        effective_rank(s, 1.0)


@given(st.integers(1, 8), st.integers(1, 8), st.integers(0, 10_000))
def test_singular_values_sorted_and_match_frobenius(m, n, seed):
    r = np.random.default_rng(seed)
    h = r.standard_normal((m, n)) + 1j * r.standard_normal((m, n))
    s = singular_spectrum(h)
    assert np.all(np.diff(s) <= 1e-12)
    assert np.sum(s**2) == pytest.approx(np.linalg.norm(h, "fro") ** 2, rel=1e-10)


def test_near_field_rank_decays_with_distance():
    f = 1e11
    g = ArrayGeometry.from_aperture(0.5, wavelength(f) / 2)
    ranks = []
    for r in np.geomspace(5, 500, 12):
        ranks.append(effective_rank(singular_spectrum(los_mimo_channel(g, g, PolarLocation(0.0, r), 0.0, f)), 0.01))
    assert ranks[0] > 1
    assert all(a >= b for a, b in zip(ranks, ranks[1:]))


# --- subcarrier grid -------------------------------------------------------

def test_subcarrier_examples():
    np.testing.assert_allclose(subcarrier_frequencies(100e9, 10e9, 1).frequencies, [100e9])
    np.testing.assert_allclose(subcarrier_frequencies(100e9, 10e9, 2).frequencies, [97.5e9, 102.5e9])
    with pytest.raises(DomainError, match="subcarrier_count must be ≥ 1"):
        subcarrier_frequencies(100e9, 10e9, 0)
    with pytest.raises(DomainError):
        subcarrier_frequencies(1e9, 3e9, 4)


@given(st.floats(1e9, 1e12), st.floats(0, 1.0), st.integers(1, 64))
def test_subcarrier_grid_invariants(fc, frac, m):
    b = frac * fc
    grid = subcarrier_frequencies(fc, b, m)
    f = grid.frequencies
    assert f.size == m
    assert np.mean(f) == pytest.approx(fc, rel=1e-12)
    np.testing.assert_allclose(f - fc, -(f[::-1] - fc), atol=1e-6 * fc)
    assert f.max() - f.min() <= b * (1 + 1e-12)
    if m > 1 and b > 1e-9 * fc:  # below that the spread is not representable in float64
        assert np.all(np.diff(f) > 0)


def test_wideband_channels_normalized_shape():
    f = 1e11
    grid = subcarrier_frequencies(f, 1e10, 4)
    tx, rx = geometry_at(16, f), ArrayGeometry(2, 0.1)
    ch = wideband_los_channels(tx, rx, PolarLocation(0.5, 10.0), 0.5, grid)
    assert ch.matrices.shape == (4, 2, 16)
    np.testing.assert_allclose(np.abs(ch.matrices), 1.0)
    assert np.linalg.norm(ch.matrices[0]) ** 2 == pytest.approx(32)


def test_element_distances_broadcast():
    g = ArrayGeometry(3, 1.0)
    d = element_distances(g, np.array([0.0, 0.1]), np.array([[2.0], [3.0]]))
    assert d.shape == (2, 2, 3)
