"""Matched beamfocusing, normalized gain maps and focusing-region metrics.

Weights act as a transmit precoder: the field radiated towards a probe
point is ``a(probe)^T w`` with ``a`` the spherical steering vector.  With
unit-norm ``w`` the normalized gain ``|a^T w|^2 / N`` is at most 1, reached
by ``w = conj(a(focus)) / sqrt(N)`` at the focus.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, DomainError
from .geometry import (
    ArrayGeometry,
    PolarLocation,
    far_field_steering,
    near_field_steering,
    near_field_steering_grid,
)

HALF_POWER = 0.5
UNBOUNDED = math.inf

_CHUNK = 1 << 22


@dataclass(frozen=True)
class GainMap:
    angle_grid: np.ndarray
    distance_grid: np.ndarray
    gains: np.ndarray  # (angles, distances)
    focus: PolarLocation
    frequency: float
    element_count: int = 1

    @property
    def raw_gains(self) -> np.ndarray:
        """Un-normalized gain ``|a^T w|^2`` (N at a matched focus)."""
        return self.gains * self.element_count


@dataclass(frozen=True)
class FocusRegion:
    """Half-power extents through the focus; ``UNBOUNDED`` (inf) if the contour reaches a grid edge."""

    depth_of_focus: float
    angular_width: float

    @property
    def bounded(self) -> bool:
        return math.isfinite(self.depth_of_focus)


def focus_weights(geometry: ArrayGeometry, focus: PolarLocation, frequency: float) -> np.ndarray:
    return np.conj(near_field_steering(geometry, focus, frequency)) / np.sqrt(geometry.element_count)


def steering_weights(geometry: ArrayGeometry, angle: float, frequency: float) -> np.ndarray:
    """Far-field beamsteering weights (no distance selectivity)."""
    return np.conj(far_field_steering(geometry, angle, frequency)) / np.sqrt(geometry.element_count)


def array_gain(weights, geometry: ArrayGeometry, probe: PolarLocation, frequency: float) -> float:
    weights = np.asarray(weights)
    if weights.shape != (geometry.element_count,):
        raise DimensionError(f"expected {geometry.element_count} weights, got shape {weights.shape}")
    a = near_field_steering(geometry, probe, frequency)
    return float(np.abs(a @ weights) ** 2 / geometry.element_count)


def gain_grid(weights, geometry: ArrayGeometry, frequency: float, angle_grid, distance_grid) -> np.ndarray:
    """Normalized gain of fixed weights over an angle x distance grid."""
    angle_grid = np.asarray(angle_grid, dtype=float)
    distance_grid = np.asarray(distance_grid, dtype=float)
    if angle_grid.size == 0 or distance_grid.size == 0:
        raise DomainError("grids must be non-empty")
    n = geometry.element_count
    out = np.empty((angle_grid.size, distance_grid.size))
    step = max(1, _CHUNK // (distance_grid.size * n))
    for i in range(0, angle_grid.size, step):
        a = near_field_steering_grid(geometry, angle_grid[i:i + step], distance_grid, frequency)
        out[i:i + step] = np.abs(a @ weights) ** 2 / n
    return out


def gain_map(geometry: ArrayGeometry, focus: PolarLocation, frequency: float, angle_grid,
             distance_grid) -> GainMap:
    w = focus_weights(geometry, focus, frequency)
    gains = np.clip(gain_grid(w, geometry, frequency, angle_grid, distance_grid), 0.0, 1.0)
    return GainMap(np.asarray(angle_grid, float), np.asarray(distance_grid, float), gains, focus, frequency,
                   geometry.element_count)


def default_angle_grid(step_deg: float = 0.25) -> np.ndarray:
    return np.deg2rad(np.arange(-90.0, 90.0 + step_deg / 2, step_deg))


def default_distance_grid(lo: float = 1.0, hi: float = 400.0, count: int = 400) -> np.ndarray:
    return np.geomspace(lo, hi, count)


def _extent(profile: np.ndarray, axis: np.ndarray, i: int) -> float:
    above = profile >= HALF_POWER
    if not above[i]:
        return 0.0
    lo = i
    while lo > 0 and above[lo - 1]:
        lo -= 1
    hi = i
    while hi < profile.size - 1 and above[hi + 1]:
        hi += 1
    if lo == 0 or hi == profile.size - 1:
        return UNBOUNDED

    def crossing(inside, outside):
        # linear interpolation of the half-power level between two cells
        t = (profile[inside] - HALF_POWER) / (profile[inside] - profile[outside])
        return axis[inside] + t * (axis[outside] - axis[inside])

    return float(crossing(hi, hi + 1) - crossing(lo, lo - 1))


def _nearest(grid: np.ndarray, value: float, name: str) -> int:
    if not grid.min() <= value <= grid.max():
        raise DomainError(f"focus {name} {value} lies outside the grid [{grid.min()}, {grid.max()}]")
    return int(np.argmin(np.abs(grid - value)))


def focus_region(gmap: GainMap) -> FocusRegion:
    """Half-power (-3 dB) depth of focus and angular width through the focus cell."""
    i = _nearest(gmap.angle_grid, gmap.focus.angle, "angle")
    j = _nearest(gmap.distance_grid, gmap.focus.distance, "distance")
    depth = _extent(gmap.gains[i, :], gmap.distance_grid, j)
    width = _extent(gmap.gains[:, j], gmap.angle_grid, i)
    return FocusRegion(depth, width)


def focus_cut(geometry: ArrayGeometry, focus: PolarLocation, frequency: float, angle_grid,
              distance_grid) -> GainMap:
    """Gain map restricted to the two cuts through the focus (cheap focus_region input).

    Cells off the two cuts are zero; only use it with :func:`focus_region`.
    """
    angle_grid = np.asarray(angle_grid, float)
    distance_grid = np.asarray(distance_grid, float)
    i = _nearest(angle_grid, focus.angle, "angle")
    j = _nearest(distance_grid, focus.distance, "distance")
    w = focus_weights(geometry, focus, frequency)
    gains = np.zeros((angle_grid.size, distance_grid.size))
    gains[i, :] = gain_grid(w, geometry, frequency, angle_grid[i:i + 1], distance_grid)[0]
    gains[:, j] = gain_grid(w, geometry, frequency, angle_grid, distance_grid[j:j + 1])[:, 0]
    return GainMap(angle_grid, distance_grid, np.clip(gains, 0.0, 1.0), focus, frequency, geometry.element_count)
