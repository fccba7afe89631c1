"""Near-field joint angle-distance sensing: snapshots, 2-D MUSIC and Cramér-Rao bounds."""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np
from scipy.optimize import minimize

from .errors import DimensionError, DomainError
from .geometry import (
    ArrayGeometry,
    PolarLocation,
    element_distances,
    far_field_steering,
    near_field_steering,
    near_field_steering_grid,
    wavelength,
)

_GRID_CHUNK = 1 << 22  # complex entries per steering block


@dataclass(frozen=True)
class Target:
    location: PolarLocation
    amplitude: complex = 1.0


@dataclass(frozen=True)
class SensingScene:
    targets: tuple
    geometry: ArrayGeometry
    frequency: float
    snapshot_count: int
    noise_power: float
    signal_power: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "targets", tuple(
            t if isinstance(t, Target) else Target(*t) if isinstance(t, tuple) else Target(t)
            for t in self.targets))
        if self.snapshot_count < 1:
            raise DomainError("snapshot_count must be at least 1")
        if self.noise_power < 0 or self.signal_power < 0:
            raise DomainError("powers must be non-negative")
        if self.frequency <= 0:
            raise DomainError("frequency must be positive")

    @property
    def snr(self) -> float:
        return self.signal_power / self.noise_power if self.noise_power > 0 else np.inf


@dataclass(frozen=True)
class SnapshotSet:
    observations: np.ndarray  # (N, T)
    scene: SensingScene
    seed: int


@dataclass(frozen=True)
class MusicSpectrum:
    angle_grid: np.ndarray
    distance_grid: np.ndarray
    values: np.ndarray  # (angles, distances), max 1
    source_count_assumed: int

    def argmax(self) -> tuple[int, int]:
        # np.argmax returns the first occurrence, i.e. lowest flat index on ties
        return np.unravel_index(int(np.argmax(self.values)), self.values.shape)


@dataclass(frozen=True)
class PeakResult:
    locations: list
    values: list
    indices: list
    complete: bool  # False when fewer local maxima than requested exist


class CrbModel(str, Enum):
    near_field_joint = "near_field_joint"
    far_field_angle_only = "far_field_angle_only"


@dataclass(frozen=True)
class CrbReport:
    fisher: np.ndarray
    rcrb_angle: float
    rcrb_distance: float  # nan for the angle-only model
    model: CrbModel


def simulate_snapshots(scene: SensingScene, seed: int) -> SnapshotSet:
    """Echo snapshots ``y_t = sum_k a_k s_k(t) + n(t)`` with complex Gaussian signals and noise."""
    rng = np.random.default_rng(seed)
    n, t = scene.geometry.element_count, scene.snapshot_count
    y = np.zeros((n, t), dtype=complex)
    for target in scene.targets:
        a = near_field_steering(scene.geometry, target.location, scene.frequency)
        s = np.sqrt(scene.signal_power / 2) * (rng.standard_normal(t) + 1j * rng.standard_normal(t))
        y += np.outer(a, target.amplitude * s)
    if scene.noise_power > 0:
        y += np.sqrt(scene.noise_power / 2) * (rng.standard_normal((n, t)) + 1j * rng.standard_normal((n, t)))
    return SnapshotSet(y, scene, seed)


def trial_seed(base_seed: int, trial: int) -> int:
    """Independent per-trial seed derived from ``(base_seed, trial)``."""
    return int(np.random.SeedSequence([base_seed, trial]).generate_state(1)[0])


def sample_covariance(snapshots) -> np.ndarray:
    y = snapshots.observations if isinstance(snapshots, SnapshotSet) else np.asarray(snapshots)
    r = y @ y.conj().T / y.shape[1]
    return 0.5 * (r + r.conj().T)


def signal_subspace(covariance: np.ndarray, source_count: int) -> np.ndarray:
    """Orthonormal basis of the signal subspace, shape ``(N, K')``.

    The split is made by eigenvalue: every eigenvector whose eigenvalue is
    within a relative 1e-10 of the largest noise eigenvalue belongs to the
    noise subspace, so tied eigenvalues are never split across subspaces.
    """
    n = covariance.shape[0]
    if covariance.shape != (n, n):
        raise DimensionError("covariance must be square")
    if not 0 <= source_count < n:
        raise DomainError(f"source_count must lie in [0, {n}), got {source_count}")
    lam, vec = np.linalg.eigh(covariance)
    threshold = lam[n - source_count - 1]
    tol = 1e-10 * max(abs(lam[-1]), np.finfo(float).tiny)
    return vec[:, lam > threshold + tol]


def _null_spectrum(us: np.ndarray, steering: np.ndarray) -> np.ndarray:
    """``a^H U_n U_n^H a`` through the complement of the signal subspace."""
    total = np.sum(np.abs(steering) ** 2, axis=-1)
    proj = np.sum(np.abs(steering @ us.conj()) ** 2, axis=-1)
    return np.maximum(total - proj, total * 1e-15)


def music_spectrum(covariance, geometry: ArrayGeometry, frequency: float, source_count: int,
                   angle_grid, distance_grid) -> MusicSpectrum:
    """Normalized 2-D MUSIC pseudo-spectrum over an angle (rad) x distance (m) grid."""
    angle_grid = np.asarray(angle_grid, dtype=float)
    distance_grid = np.asarray(distance_grid, dtype=float)
    if angle_grid.size == 0 or distance_grid.size == 0:
        raise DomainError("angle and distance grids must be non-empty")
    n = geometry.element_count
    if source_count >= n:
        raise DomainError(f"source_count={source_count} must be smaller than the array size {n}")
    us = signal_subspace(np.asarray(covariance), source_count)
    null = np.empty((angle_grid.size, distance_grid.size))
    step = max(1, _GRID_CHUNK // (distance_grid.size * n))
    for i in range(0, angle_grid.size, step):
        a = near_field_steering_grid(geometry, angle_grid[i:i + step], distance_grid, frequency)
        null[i:i + step] = _null_spectrum(us, a)
    values = 1.0 / null
    return MusicSpectrum(angle_grid, distance_grid, values / values.max(), source_count)


def local_maxima(values: np.ndarray) -> np.ndarray:
    """Boolean mask of strict local maxima over the 8-neighbourhood (edges use existing neighbours)."""
    padded = np.pad(values, 1, constant_values=-np.inf)
    core = padded[1:-1, 1:-1]
    mask = np.ones(values.shape, dtype=bool)
    rows, cols = values.shape
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            if di == dj == 0:
                continue
            mask &= core > padded[1 + di:1 + di + rows, 1 + dj:1 + dj + cols]
    return mask


def peak_estimate(spectrum: MusicSpectrum, expected_sources: int) -> PeakResult:
    """Top ``expected_sources`` local maxima, largest first (ties: lowest grid index)."""
    if expected_sources < 1:
        raise DomainError("expected_sources must be at least 1")
    flat = np.flatnonzero(local_maxima(spectrum.values))
    vals = spectrum.values.ravel()[flat]
    order = np.lexsort((flat, -vals))[:expected_sources]
    locs, out_vals, idx = [], [], []
    for f in flat[order]:
        i, j = np.unravel_index(f, spectrum.values.shape)
        locs.append(PolarLocation(float(spectrum.angle_grid[i]), float(spectrum.distance_grid[j])))
        out_vals.append(float(spectrum.values[i, j]))
        idx.append((int(i), int(j)))
    return PeakResult(locs, out_vals, idx, complete=len(locs) == expected_sources)


def refine_peak(covariance, geometry: ArrayGeometry, frequency: float, source_count: int,
                start: PolarLocation, angle_step: float, distance_step: float) -> PolarLocation:
    """Off-grid MUSIC estimate: minimize the null spectrum around a grid peak (Nelder-Mead)."""
    us = signal_subspace(np.asarray(covariance), source_count)
    n = geometry.element_count
    k = 2 * np.pi / wavelength(frequency)
    pos = geometry.element_positions

    def cost(x):
        theta, r = start.angle + x[0] * angle_step, start.distance + x[1] * distance_step
        r_n = np.sqrt(np.maximum(r**2 + pos**2 - 2 * r * pos * np.sin(theta), 0.0))
        a = np.exp(-1j * k * (r_n - r))
        return float(_null_spectrum(us, a[None])[0]) / n

    res = minimize(cost, np.zeros(2), method="Nelder-Mead",
                   options={"xatol": 1e-6, "fatol": 1e-16, "maxiter": 2000,
                            "initial_simplex": [[0, 0], [0.5, 0], [0, 0.5]]})
    return PolarLocation(start.angle + res.x[0] * angle_step, start.distance + res.x[1] * distance_step)


def steering_derivatives(geometry: ArrayGeometry, location: PolarLocation, frequency: float):
    """Analytic ``(a, da/dtheta, da/dr)`` of the spherical steering vector."""
    k = 2 * np.pi / wavelength(frequency)
    p = geometry.element_positions
    theta, r = location.angle, location.distance
    r_n = element_distances(geometry, theta, r)
    a = np.exp(-1j * k * (r_n - r))
    dr_dtheta = -r * p * np.cos(theta) / r_n
    dr_dr = (r - p * np.sin(theta)) / r_n
    return a, -1j * k * dr_dtheta * a, -1j * k * (dr_dr - 1.0) * a


def far_field_derivative(geometry: ArrayGeometry, angle: float, frequency: float):
    """``(a, da/dtheta)`` of the planar steering vector."""
    k = 2 * np.pi / wavelength(frequency)
    p = geometry.element_positions
    a = far_field_steering(geometry, angle, frequency)
    return a, 1j * k * p * np.cos(angle) * a


def _fisher(a: np.ndarray, derivs: Sequence[np.ndarray], scale: float) -> np.ndarray:
    d = np.stack(derivs, axis=1)
    proj = d - np.outer(a, a.conj() @ d) / np.vdot(a, a).real
    fim = scale * np.real(d.conj().T @ proj)
    return 0.5 * (fim + fim.T)


def _root_bounds(fim: np.ndarray) -> np.ndarray:
    """``sqrt(diag(FIM^-1))``; parameters touching the numerical null space get ``inf``."""
    lam, vec = np.linalg.eigh(fim)
    tiny = lam.max() * 1e-13 if lam.max() > 0 else np.inf
    good = lam > tiny
    out = np.full(fim.shape[0], np.inf)
    if not np.any(good):
        return out
    var = (vec[:, good] ** 2) @ (1.0 / lam[good])
    unidentified = np.any(np.abs(vec[:, ~good]) > 1e-8, axis=1) if np.any(~good) else np.zeros(fim.shape[0], bool)
    out[~unidentified] = np.sqrt(var[~unidentified])
    return out


def crb(scene: SensingScene, model: CrbModel | str = CrbModel.near_field_joint) -> CrbReport:
    """Deterministic-signal Cramér-Rao bound for a single target.

    ``FIM = (2 T sigma_s^2 / sigma^2) Re{D^H P_a^perp D}`` with ``D`` the
    steering derivatives with respect to ``(theta, r)`` (near field) or
    ``theta`` alone (far field).
    """
    model = CrbModel(model)
    if len(scene.targets) != 1:
        raise DomainError("the bound is defined for a single target")
    if scene.noise_power <= 0:
        raise DomainError("noise_power must be positive")
    target = scene.targets[0]
    scale = 2 * scene.snapshot_count * scene.signal_power * abs(target.amplitude) ** 2 / scene.noise_power
    loc = target.location
    if model is CrbModel.near_field_joint:
        a, da_t, da_r = steering_derivatives(scene.geometry, loc, scene.frequency)
        fim = _fisher(a, [da_t, da_r], scale)
        rc = _root_bounds(fim)
        return CrbReport(fim, float(rc[0]), float(rc[1]), model)
    a, da_t = far_field_derivative(scene.geometry, loc.angle, scene.frequency)
    fim = _fisher(a, [da_t], scale)
    rc = _root_bounds(fim)
    return CrbReport(fim, float(rc[0]), float("nan"), model)
