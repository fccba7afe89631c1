"""Array geometry, spherical/planar steering vectors and LoS MIMO channels.

Conventions used throughout the package:

* The array lies on the y axis, centred at the origin, with element
  ``n`` at ``(0, p_n)``.
* A point at polar location ``(theta, r)`` sits at
  ``(r cos(theta), r sin(theta))``; ``theta`` is measured from broadside.
* Propagation over a distance ``d`` at frequency ``f`` contributes the
  phase ``-2 pi f d / c``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DegenerateGeometryError, DimensionError, DomainError

SPEED_OF_LIGHT = 299_792_458.0
DEGENERATE_TOL = 1e-9  # meters


def wavelength(frequency: float) -> float:
    if frequency <= 0:
        raise DomainError(f"frequency must be positive, got {frequency}")
    return SPEED_OF_LIGHT / frequency


@dataclass(frozen=True)
class ArrayGeometry:
    """Uniform linear array centred on the origin."""

    element_count: int
    element_spacing: float

    def __post_init__(self):
        if int(self.element_count) != self.element_count or self.element_count < 1:
            raise DomainError(f"element_count must be a positive integer, got {self.element_count}")
        if self.element_spacing < 0:
            raise DomainError(f"element_spacing must be non-negative, got {self.element_spacing}")

    @classmethod
    def half_wavelength(cls, element_count: int, frequency: float) -> "ArrayGeometry":
        return cls(element_count, wavelength(frequency) / 2)

    @classmethod
    def from_aperture(cls, aperture: float, element_spacing: float) -> "ArrayGeometry":
        """Smallest array with the given spacing whose aperture reaches ``aperture``."""
        if element_spacing <= 0:
            raise DomainError("element_spacing must be positive")
        count = int(np.ceil(aperture / element_spacing - 1e-9)) + 1
        return cls(count, element_spacing)

    @property
    def element_positions(self) -> np.ndarray:
        n = np.arange(1, self.element_count + 1)
        return (n - (self.element_count + 1) / 2) * self.element_spacing

    @property
    def aperture(self) -> float:
        return (self.element_count - 1) * self.element_spacing


@dataclass(frozen=True)
class PolarLocation:
    """Point in the array plane: angle from broadside (rad), distance from array centre (m)."""

    angle: float
    distance: float

    def __post_init__(self):
        if not self.distance > 0:
            raise DomainError(f"distance must be positive, got {self.distance}")
        if not -np.pi / 2 < self.angle < np.pi / 2:
            raise DomainError(f"angle must lie in (-pi/2, pi/2), got {self.angle}")

    @classmethod
    def from_degrees(cls, angle_deg: float, distance: float) -> "PolarLocation":
        return cls(np.deg2rad(angle_deg), distance)

    @classmethod
    def from_cartesian(cls, x: float, y: float) -> "PolarLocation":
        return cls(float(np.arctan2(y, x)), float(np.hypot(x, y)))

    @property
    def cartesian(self) -> np.ndarray:
        return np.array([self.distance * np.cos(self.angle), self.distance * np.sin(self.angle)])


@dataclass(frozen=True)
class SubcarrierGrid:
    center_frequency: float
    bandwidth: float
    subcarrier_count: int
    frequencies: np.ndarray


@dataclass(frozen=True)
class WidebandChannelSet:
    grid: SubcarrierGrid
    matrices: np.ndarray  # (M, N_rx, N_tx)

    def __post_init__(self):
        if self.matrices.ndim != 3:
            raise DimensionError("matrices must be a stack of 2-D channel matrices")
        if self.matrices.shape[0] != self.grid.subcarrier_count:
            raise DimensionError(
                f"{self.matrices.shape[0]} matrices for {self.grid.subcarrier_count} subcarriers"
            )

    @property
    def receive_count(self) -> int:
        return self.matrices.shape[1]

    @property
    def transmit_count(self) -> int:
        return self.matrices.shape[2]


def rayleigh_distance(aperture: float, frequency: float) -> float:
    """Classical near-field boundary ``2 D^2 / lambda``."""
    if aperture < 0:
        raise DomainError(f"aperture must be non-negative, got {aperture}")
    return 2.0 * aperture**2 / wavelength(frequency)


def element_distances(geometry: ArrayGeometry, angle, distance) -> np.ndarray:
    """Exact element-to-point distances.

    ``angle`` and ``distance`` broadcast against each other; the element
    axis is appended last.
    """
    angle = np.asarray(angle, dtype=float)[..., None]
    distance = np.asarray(distance, dtype=float)[..., None]
    p = geometry.element_positions
    sq = distance**2 + p**2 - 2.0 * distance * p * np.sin(angle)
    return np.sqrt(np.maximum(sq, 0.0))


def near_field_steering(geometry: ArrayGeometry, location, frequency: float) -> np.ndarray:
    """Spherical-wave steering vector, phase referenced to the array centre."""
    k = 2 * np.pi / wavelength(frequency)
    r_n = element_distances(geometry, location.angle, location.distance)
    if np.min(r_n) < DEGENERATE_TOL:
        raise DegenerateGeometryError(f"location {location} coincides with an array element")
    return np.exp(-1j * k * (r_n - location.distance))


def near_field_steering_grid(geometry: ArrayGeometry, angles, distances, frequency: float) -> np.ndarray:
    """Steering vectors for every (angle, distance) pair; shape ``(A, R, N)``.

    No degeneracy check; callers pass grids away from the aperture.
    """
    k = 2 * np.pi / wavelength(frequency)
    angles = np.asarray(angles, dtype=float)[:, None]
    distances = np.asarray(distances, dtype=float)[None, :]
    r_n = element_distances(geometry, angles, distances)
    return np.exp(-1j * k * (r_n - distances[..., None]))


def far_field_steering(geometry: ArrayGeometry, angle: float, frequency: float) -> np.ndarray:
    """Planar-wave steering vector (first-order expansion of the element distance)."""
    k = 2 * np.pi / wavelength(frequency)
    return np.exp(1j * k * geometry.element_positions * np.sin(angle))


def spherical_phase_error(geometry: ArrayGeometry, location, frequency: float) -> float:
    """Largest per-element gap between the exact and the planar propagation phase."""
    k = 2 * np.pi / wavelength(frequency)
    r_n = element_distances(geometry, location.angle, location.distance)
    exact = -k * (r_n - location.distance)
    planar = k * geometry.element_positions * np.sin(location.angle)
    return float(np.max(np.abs(exact - planar)))


def array_element_xy(geometry: ArrayGeometry, center=None, orientation: float = 0.0) -> np.ndarray:
    """Cartesian element coordinates, shape ``(N, 2)``.

    ``orientation`` rotates the array axis away from the y axis
    (counter-clockwise, radians); ``center`` is a PolarLocation or None for
    the origin.
    """
    axis = np.array([-np.sin(orientation), np.cos(orientation)])
    origin = np.zeros(2) if center is None else center.cartesian
    return origin + geometry.element_positions[:, None] * axis


def los_channel_from_positions(tx_xy: np.ndarray, rx_xy: np.ndarray, frequency: float,
                               amplitude: float = 1.0) -> np.ndarray:
    """Equal-amplitude LoS channel between two point sets, shape ``(N_rx, N_tx)``."""
    k = 2 * np.pi / wavelength(frequency)
    d = np.linalg.norm(rx_xy[:, None, :] - tx_xy[None, :, :], axis=-1)
    if np.min(d) < DEGENERATE_TOL:
        raise DegenerateGeometryError("transmit and receive arrays overlap")
    return amplitude * np.exp(-1j * k * d)


def los_mimo_channel(tx: ArrayGeometry, rx: ArrayGeometry, rx_center, rx_orientation: float,
                     frequency: float) -> np.ndarray:
    """Spherical-wave LoS MIMO channel with common amplitude ``1 / distance``."""
    tx_xy = array_element_xy(tx)
    rx_xy = array_element_xy(rx, rx_center, rx_orientation)
    return los_channel_from_positions(tx_xy, rx_xy, frequency, 1.0 / rx_center.distance)


def far_field_los_channel(tx: ArrayGeometry, rx: ArrayGeometry, rx_center, rx_orientation: float,
                          frequency: float) -> np.ndarray:
    """Planar-wave LoS MIMO channel: an outer product of two far-field steering vectors."""
    a_tx = far_field_steering(tx, rx_center.angle, frequency)
    # first-order path length: r - p sin(theta) + q sin(theta - orientation)
    a_rx = far_field_steering(rx, rx_orientation - rx_center.angle, frequency)
    phase = np.exp(-2j * np.pi * rx_center.distance / wavelength(frequency))
    return phase / rx_center.distance * np.outer(a_rx, a_tx)


def singular_spectrum(channel) -> np.ndarray:
    """Singular values in non-increasing order."""
    channel = np.asarray(channel)
    if channel.ndim != 2 or channel.size == 0:
        raise DomainError("singular_spectrum needs a non-empty matrix")
    return np.linalg.svd(channel, compute_uv=False)


def effective_rank(singular_values: Sequence[float], threshold: float) -> int:
    """Number of singular values at or above ``threshold`` times the largest."""
    if not 0 < threshold < 1:
        raise DomainError(f"threshold must lie in (0, 1), got {threshold}")
    s = np.asarray(singular_values, dtype=float)
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.count_nonzero(s >= threshold * s[0]))


def subcarrier_frequencies(center_frequency: float, bandwidth: float, count: int) -> SubcarrierGrid:
    """Uniform grid ``f_m = f_c + B (2m - 1 - M) / (2M)``, m = 1..M."""
    if int(count) != count or count < 1:
        raise DomainError("subcarrier_count must be ≥ 1")
    if bandwidth < 0:
        raise DomainError("bandwidth must be non-negative")
    if bandwidth > 2 * center_frequency:
        raise DomainError("bandwidth must not exceed twice the center frequency")
    m = np.arange(1, count + 1)
    freqs = center_frequency + bandwidth * (2 * m - 1 - count) / (2 * count)
    return SubcarrierGrid(center_frequency, bandwidth, int(count), freqs)


def wideband_los_channels(tx: ArrayGeometry, rx: ArrayGeometry, rx_center, rx_orientation: float,
                          grid: SubcarrierGrid, normalize: bool = True) -> WidebandChannelSet:
    """Per-subcarrier LoS MIMO channels.

    With ``normalize`` the common amplitude is dropped so every entry has unit
    magnitude, i.e. ``||H_m||_F^2 = N_tx * N_rx``.
    """
    tx_xy = array_element_xy(tx)
    rx_xy = array_element_xy(rx, rx_center, rx_orientation)
    amp = 1.0 if normalize else 1.0 / rx_center.distance
    mats = np.stack([los_channel_from_positions(tx_xy, rx_xy, f, amp) for f in grid.frequencies])
    return WidebandChannelSet(grid, mats)
