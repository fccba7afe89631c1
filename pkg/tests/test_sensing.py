import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import mp_central_differences
from thz_nearfield.errors import DomainError
from thz_nearfield.geometry import (
    SPEED_OF_LIGHT,
    ArrayGeometry,
    PolarLocation,
    near_field_steering,
    rayleigh_distance,
)
from thz_nearfield.sensing import (
    CrbModel,
    MusicSpectrum,
    SensingScene,
    Target,
    crb,
    far_field_derivative,
    local_maxima,
    music_spectrum,
    peak_estimate,
    refine_peak,
    sample_covariance,
    signal_subspace,
    simulate_snapshots,
    steering_derivatives,
    trial_seed,
)

F = 100e9
ARRAY = ArrayGeometry.half_wavelength(256, F)
TARGET = PolarLocation.from_degrees(45, 20.0)


def scene(targets=(TARGET,), snr_db=20.0, t=200, geometry=ARRAY, noise=1.0):
    return SensingScene(tuple(Target(x) for x in targets), geometry, F, t, noise_power=noise,
                        signal_power=noise * 10 ** (snr_db / 10) if noise > 0 else 1.0)


# --- snapshots -------------------------------------------------------------

def test_noise_free_single_snapshot_is_collinear():
    s = simulate_snapshots(scene(t=1, noise=0.0), seed=3)
    y = s.observations[:, 0]
    a = near_field_steering(ARRAY, TARGET, F)
    resid = y - a * (np.vdot(a, y) / 256)
    assert np.linalg.norm(resid) < 1e-12 * np.linalg.norm(y)
    assert s.observations.shape == (256, 1)


def test_snapshots_deterministic_per_seed():
    a = simulate_snapshots(scene(), seed=11).observations
    b = simulate_snapshots(scene(), seed=11).observations
    c = simulate_snapshots(scene(), seed=12).observations
    assert np.array_equal(a, b) and not np.array_equal(a, c)


def test_element_variance_monte_carlo():
    g = ArrayGeometry.half_wavelength(4, F)
    sc = SensingScene((Target(PolarLocation(0.2, 2.0)),), g, F, 100_000, noise_power=0.5, signal_power=2.0)
    y = simulate_snapshots(sc, seed=5).observations
    p = np.abs(y) ** 2
    se = p.std(axis=1, ddof=1) / math.sqrt(p.shape[1])
    assert np.all(np.abs(p.mean(axis=1) - 2.5) < 3 * se)


def test_trial_seeds_distinct_and_stable():
    seeds = [trial_seed(7, t) for t in range(100)]
    assert len(set(seeds)) == 100
    assert seeds == [trial_seed(7, t) for t in range(100)]


def test_scene_validation():
    with pytest.raises(DomainError):
        SensingScene((Target(TARGET),), ARRAY, F, 0, 1.0)
    with pytest.raises(DomainError):
        SensingScene((Target(TARGET),), ARRAY, F, 1, -1.0)


# --- covariance ------------------------------------------------------------

def test_single_snapshot_covariance_rank_one():
    s = simulate_snapshots(scene(t=1), seed=0)
    r = sample_covariance(s)
    lam = np.linalg.eigvalsh(r)
    assert np.sum(lam > 1e-10 * lam.max()) == 1


@given(st.integers(1, 30), st.integers(0, 1000))
def test_covariance_hermitian_psd(t, seed):
    g = ArrayGeometry.half_wavelength(8, F)
    s = simulate_snapshots(SensingScene((Target(PolarLocation(0.1, 3.0)),), g, F, t, 1.0), seed)
    r = sample_covariance(s)
    np.testing.assert_allclose(r, r.conj().T, atol=1e-14)
    assert np.linalg.eigvalsh(r).min() >= -1e-10 * np.trace(r).real


def test_noise_free_covariance_single_eigenvalue():
    r = sample_covariance(simulate_snapshots(scene(t=20, noise=0.0), seed=1))
    lam = np.sort(np.linalg.eigvalsh(r))[::-1]
    assert np.all(lam[1:] < 1e-10 * lam[0])


def test_signal_subspace_split_by_eigenvalue():
    r = np.diag([5.0, 1.0, 1.0, 1.0]).astype(complex)
    assert signal_subspace(r, 1).shape == (4, 1)
    # a tie straddling the split keeps tied vectors together in the noise subspace
    r2 = np.diag([5.0, 1.0, 1.0, 0.5]).astype(complex)
    assert signal_subspace(r2, 2).shape == (4, 1)


# --- MUSIC -----------------------------------------------------------------

def grid_around(center_deg, center_m, half_deg=2.0, half_m=2.0, step_deg=0.1, step_m=0.1):
    angles = np.deg2rad(np.arange(center_deg - half_deg, center_deg + half_deg + step_deg / 2, step_deg))
    dists = np.arange(center_m - half_m, center_m + half_m + step_m / 2, step_m)
    return angles, dists


def test_music_peak_at_target_cell():
    r = sample_covariance(simulate_snapshots(scene(snr_db=20), seed=2))
    angles, dists = grid_around(45, 20, step_deg=0.5, step_m=0.5, half_deg=10, half_m=10)
    spectrum = music_spectrum(r, ARRAY, F, 1, angles, dists)
    i, j = spectrum.argmax()
    assert abs(angles[i] - TARGET.angle) <= np.deg2rad(0.5) + 1e-12
    assert abs(dists[j] - 20.0) <= 0.5 + 1e-12
    assert spectrum.values.max() == 1.0 and spectrum.values.min() > 0


def test_music_scale_invariance_and_errors():
    r = sample_covariance(simulate_snapshots(scene(snr_db=10, t=50), seed=4))
    angles, dists = grid_around(45, 20)
    a = music_spectrum(r, ARRAY, F, 1, angles, dists)
    b = music_spectrum(7.5 * r, ARRAY, F, 1, angles, dists)
    assert a.argmax() == b.argmax()
    with pytest.raises(DomainError):
        music_spectrum(r, ARRAY, F, 256, angles, dists)
    with pytest.raises(DomainError):
        music_spectrum(r, ARRAY, F, 1, [], dists)


def test_music_invariant_to_noise_subspace_rotation():
    g = ArrayGeometry.half_wavelength(16, F)
    sc = SensingScene((Target(PolarLocation(0.3, 2.0)),), g, F, 100, 0.1)
    r = sample_covariance(simulate_snapshots(sc, seed=9))
    lam, vec = np.linalg.eigh(r)
    rng = np.random.default_rng(0)
    q, _ = np.linalg.qr(rng.standard_normal((15, 15)) + 1j * rng.standard_normal((15, 15)))
    noise = vec[:, :15] @ q  # same span, rotated basis
    rotated = vec[:, 15:] * lam[15] @ vec[:, 15:].conj().T + noise @ np.diag(lam[:15]) @ noise.conj().T
    angles, dists = np.linspace(0.1, 0.5, 21), np.linspace(1.0, 3.0, 21)
    base = music_spectrum(r, g, F, 1, angles, dists).values
    # the spectrum only depends on the noise subspace, not on its basis or eigenvalues
    np.testing.assert_allclose(music_spectrum(rotated, g, F, 1, angles, dists).values, base, rtol=1e-10)


def test_two_targets_resolved():
    targets = (PolarLocation.from_degrees(-30, 8.0), PolarLocation.from_degrees(40, 25.0))
    r = sample_covariance(simulate_snapshots(scene(targets, snr_db=20), seed=21))
    angles = np.deg2rad(np.arange(-60, 60.01, 0.5))
    dists = np.arange(5.0, 30.01, 0.5)
    spectrum = music_spectrum(r, ARRAY, F, 2, angles, dists)
    peaks = peak_estimate(spectrum, 2)
    assert peaks.complete
    for truth in targets:
        assert any(abs(p.angle - truth.angle) <= np.deg2rad(0.5) + 1e-12 and abs(p.distance - truth.distance) <= 0.5
                   for p in peaks.locations)


def test_far_target_spectrum_flat_in_distance():
    g = ArrayGeometry.half_wavelength(256, F)
    d_r = rayleigh_distance(g.aperture, F)
    far = PolarLocation.from_degrees(45, 100 * d_r)
    r = sample_covariance(simulate_snapshots(scene((far,), snr_db=20, geometry=g), seed=0))
    dists = np.linspace(d_r, 200 * d_r, 400)
    profile = music_spectrum(r, g, F, 1, [far.angle], dists).values[0]
    upper = 10 * np.log10(profile[200:])
    assert upper.max() - upper.min() < 0.5


# --- peaks -----------------------------------------------------------------

def make_spectrum(values):
    values = np.asarray(values, float)
    return MusicSpectrum(np.linspace(-0.5, 0.5, values.shape[0]), np.linspace(1, 2, values.shape[1]), values, 1)


def test_constant_spectrum_has_no_peaks():
    res = peak_estimate(make_spectrum(np.ones((5, 5))), 1)
    assert not res.complete and res.locations == []


def test_peaks_ordered_and_tie_broken_by_index():
    v = np.full((5, 5), 0.1)
    v[1, 1] = v[3, 3] = 0.9
    v[1, 3] = 0.5
    res = peak_estimate(make_spectrum(v), 3)
    assert res.indices == [(1, 1), (3, 3), (1, 3)]
    assert res.values == [0.9, 0.9, 0.5]
    assert local_maxima(v).sum() == 3


@given(st.floats(1e-3, 1e3), st.integers(0, 200))
def test_peak_list_invariant_to_rescaling(scale, seed):
    v = np.random.default_rng(seed).random((9, 7))
    a = peak_estimate(make_spectrum(v), 3)
    b = peak_estimate(make_spectrum(v * scale), 3)
    assert a.indices == b.indices


def test_noise_free_on_grid_target_exact():
    g = ArrayGeometry.half_wavelength(64, F)
    angles, dists = np.deg2rad(np.arange(10, 20.01, 0.5)), np.arange(2.0, 4.01, 0.1)
    truth = PolarLocation(angles[8], dists[11])
    sc = SensingScene((Target(truth),), g, F, 10, noise_power=0.0)
    r = sample_covariance(simulate_snapshots(sc, seed=0))
    res = peak_estimate(music_spectrum(r, g, F, 1, angles, dists), 1)
    assert res.indices == [(8, 11)]


def test_refine_peak_recovers_off_grid_target():
    truth = PolarLocation.from_degrees(45.13, 20.27)
    r = sample_covariance(simulate_snapshots(scene((truth,), snr_db=40), seed=8))
    angles, dists = grid_around(45, 20, step_deg=0.5, step_m=0.5)
    start = peak_estimate(music_spectrum(r, ARRAY, F, 1, angles, dists), 1).locations[0]
    est = refine_peak(r, ARRAY, F, 1, start, np.deg2rad(0.5), 0.5)
    assert abs(est.angle - truth.angle) < 1e-4 and abs(est.distance - truth.distance) < 0.05


# --- Cramér-Rao bound ------------------------------------------------------

@pytest.mark.parametrize("loc", [TARGET, PolarLocation.from_degrees(-20, 5.0), PolarLocation.from_degrees(60, 90.0)])
def test_steering_derivatives_match_finite_differences(loc):
    a, da_t, da_r = steering_derivatives(ARRAY, loc, F)
    fd_t, fd_r = mp_central_differences(ARRAY, loc, F)
    assert np.linalg.norm(fd_t - da_t) / np.linalg.norm(da_t) < 1e-5
    assert np.linalg.norm(fd_r - da_r) / np.linalg.norm(da_r) < 1e-5
    np.testing.assert_allclose(a, near_field_steering(ARRAY, loc, F))


def test_far_field_derivative_finite_difference():
    from thz_nearfield.geometry import far_field_steering

    _, d = far_field_derivative(ARRAY, 0.7, F)
    h = 1e-7
    fd = (far_field_steering(ARRAY, 0.7 + h, F) - far_field_steering(ARRAY, 0.7 - h, F)) / (2 * h)
    assert np.linalg.norm(fd - d) / np.linalg.norm(d) < 1e-5


def test_fisher_matches_brute_force_oracle():
    # oracle: explicit projector and finite-difference derivatives
    sc = scene(snr_db=10, t=100)
    rep = crb(sc, "near_field_joint")
    a = near_field_steering(ARRAY, TARGET, F)
    proj = np.eye(256) - np.outer(a, a.conj()) / 256
    h = 1e-6

    def steer(t, r):
        return near_field_steering(ARRAY, PolarLocation(t, r), F)

    d = np.stack([(steer(TARGET.angle + h * TARGET.angle, 20) - steer(TARGET.angle - h * TARGET.angle, 20))
                  / (2 * h * TARGET.angle),
                  (steer(TARGET.angle, 20 + h * 20) - steer(TARGET.angle, 20 - h * 20)) / (2 * h * 20)], axis=1)
    fim = 2 * 100 * 10.0 * np.real(d.conj().T @ proj @ d)
    np.testing.assert_allclose(rep.fisher, fim, rtol=1e-5)
    inv = np.linalg.inv(fim)
    assert rep.rcrb_angle == pytest.approx(math.sqrt(inv[0, 0]), rel=1e-5)
    assert rep.rcrb_distance == pytest.approx(math.sqrt(inv[1, 1]), rel=1e-5)


def test_fisher_symmetric_psd_and_scaling():
    base = crb(scene(snr_db=10, t=100))
    np.testing.assert_allclose(base.fisher, base.fisher.T)
    assert np.all(np.linalg.eigvalsh(base.fisher) >= 0)
    double_t = crb(scene(snr_db=10, t=200))
    double_snr = crb(scene(snr_db=10 + 10 * math.log10(2), t=100))
    for other in (double_t, double_snr):
        assert other.rcrb_angle ** 2 == pytest.approx(base.rcrb_angle ** 2 / 2, rel=1e-9)
        assert other.rcrb_distance ** 2 == pytest.approx(base.rcrb_distance ** 2 / 2, rel=1e-9)


def test_distance_bound_increases_and_angle_gap_shrinks():
    dists = np.arange(5.0, 100.01, 5.0)
    near = [crb(scene((PolarLocation.from_degrees(45, d),), snr_db=10, t=100), CrbModel.near_field_joint) for d in dists]
    far = [crb(scene((PolarLocation.from_degrees(45, d),), snr_db=10, t=100), CrbModel.far_field_angle_only)
           for d in dists]
    rd = [r.rcrb_distance for r in near]
    assert all(a < b for a, b in zip(rd, rd[1:]))
    gaps = [n.rcrb_angle - f.rcrb_angle for n, f in zip(near, far)]
    assert all(g >= 0 for g in gaps)
    assert all(a > b for a, b in zip(gaps, gaps[1:]))
    assert all(math.isnan(f.rcrb_distance) for f in far)


def test_unidentifiable_distance_reports_unbounded():
    g = ArrayGeometry.half_wavelength(4, F)
    rep = crb(SensingScene((Target(PolarLocation(0.3, 1e9)),), g, F, 10, 1.0))
    assert math.isinf(rep.rcrb_distance) and math.isfinite(rep.rcrb_angle)


def test_crb_preconditions():
    with pytest.raises(DomainError):
        crb(scene((TARGET, PolarLocation(0.1, 5.0))))
    with pytest.raises(DomainError):
        crb(SensingScene((Target(TARGET),), ARRAY, F, 10, 0.0))


def test_music_efficiency_against_crb():
    """500 trials at 30 dB: refined MUSIC MSE within a factor of 3 of the bound."""
    sc = scene(snr_db=30, t=200)
    bound = crb(sc)
    angles, dists = grid_around(45, 20, half_deg=1.0, half_m=1.0, step_deg=0.1, step_m=0.1)
    err_t, err_r = [], []
    for trial in range(500):
        r = sample_covariance(simulate_snapshots(sc, trial_seed(2024, trial)))
        spectrum = music_spectrum(r, ARRAY, F, 1, angles, dists)
        i, j = spectrum.argmax()
        est = refine_peak(r, ARRAY, F, 1, PolarLocation(angles[i], dists[j]), np.deg2rad(0.1), 0.1)
        err_t.append(est.angle - TARGET.angle)
        err_r.append(est.distance - TARGET.distance)
    mse_t, mse_r = np.mean(np.square(err_t)), np.mean(np.square(err_r))
    assert bound.rcrb_angle ** 2 / 3 <= mse_t <= 3 * bound.rcrb_angle ** 2
    assert bound.rcrb_distance ** 2 / 3 <= mse_r <= 3 * bound.rcrb_distance ** 2
