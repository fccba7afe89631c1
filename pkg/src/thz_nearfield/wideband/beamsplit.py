"""Per-subcarrier beam trajectories: where the analog beam lands at each frequency."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DomainError
from ..geometry import (
    ArrayGeometry,
    PolarLocation,
    SubcarrierGrid,
    near_field_steering,
    near_field_steering_grid,
)
from .architecture import ArchitectureConfig, HybridBeamformer, analog_stack
from .optimizers import hts_analog


@dataclass(frozen=True)
class BeamSplitReport:
    frequencies: np.ndarray
    peak_locations: list  # PolarLocation per subcarrier
    peak_gains: np.ndarray
    user_gains: np.ndarray  # nan when no user location was given

    @property
    def worst_user_gain(self) -> float:
        return float(np.nanmin(self.user_gains))

    @property
    def mean_user_gain(self) -> float:
        return float(np.nanmean(self.user_gains))

    @property
    def worst_loss_db(self) -> float:
        return float(-10 * np.log10(max(self.worst_user_gain, 1e-300)))


def _normalized_gain(steering: np.ndarray, w: np.ndarray) -> np.ndarray:
    """``|a^T w|^2 / (sum |w_n|)^2``: 1 only when every connected element adds in phase."""
    return np.abs(steering @ w) ** 2 / np.sum(np.abs(w)) ** 2


def beam_trajectory(beamformer: HybridBeamformer, geometry: ArrayGeometry, grid: SubcarrierGrid,
                    angle_grid, distance_grid, user_location: PolarLocation | None = None,
                    mode: str = "chain", chain: int = 0) -> BeamSplitReport:
    """Grid argmax of the analog beam at each subcarrier plus the gain at the user.

    ``mode="chain"`` follows one RF chain's analog column; ``mode="summed"``
    uses the sum of all columns.
    """
    angle_grid = np.asarray(angle_grid, dtype=float)
    distance_grid = np.asarray(distance_grid, dtype=float)
    if angle_grid.size == 0 or distance_grid.size == 0:
        raise DomainError("search grids must be non-empty")
    if mode not in ("chain", "summed"):
        raise DomainError(f"unknown mode {mode!r}")
    arch = beamformer.architecture
    a = analog_stack(arch, beamformer.full_phases(), beamformer.ttd_delays, grid.frequencies)
    peaks, peak_gains, user_gains = [], [], []
    for m, f in enumerate(grid.frequencies):
        w = a[m, :, chain] if mode == "chain" else a[m].sum(axis=1)
        steer = near_field_steering_grid(geometry, angle_grid, distance_grid, f)
        gains = _normalized_gain(steer, w)
        i, j = np.unravel_index(int(np.argmax(gains)), gains.shape)
        peaks.append(PolarLocation(float(angle_grid[i]), float(distance_grid[j])))
        peak_gains.append(float(gains[i, j]))
        if user_location is None:
            user_gains.append(np.nan)
        else:
            user_gains.append(float(_normalized_gain(near_field_steering(geometry, user_location, f), w)))
    return BeamSplitReport(np.asarray(grid.frequencies), peaks, np.array(peak_gains), np.array(user_gains))


def user_gain_per_subcarrier(beamformer: HybridBeamformer, geometry: ArrayGeometry, grid: SubcarrierGrid,
                             user_location: PolarLocation, chain: int = 0) -> np.ndarray:
    arch = beamformer.architecture
    a = analog_stack(arch, beamformer.full_phases(), beamformer.ttd_delays, grid.frequencies)
    return np.array([_normalized_gain(near_field_steering(geometry, user_location, f), a[m, :, chain])
                     for m, f in enumerate(grid.frequencies)])


def phase_only_beamformer(geometry: ArrayGeometry, architecture: ArchitectureConfig,
                          focus, center_frequency: float, digital=None) -> HybridBeamformer:
    """Conventional PS-only analog stage matched to ``focus`` at the centre frequency (all delays 0)."""
    zero = ArchitectureConfig(architecture.kind, architecture.antenna_count, architecture.rf_chain_count,
                              architecture.ttd_per_chain, 0.0)
    phases, delays = hts_analog(geometry, zero, focus, center_frequency)
    if digital is None:
        digital = np.zeros((1, architecture.rf_chain_count, 1))
    return HybridBeamformer.from_full_phases(architecture, phases, delays, digital)


def hts_stage_one(geometry: ArrayGeometry, architecture: ArchitectureConfig, focus,
                  center_frequency: float, digital=None) -> HybridBeamformer:
    """Analog stage of HTS wrapped as a beamformer (digital stage empty unless given)."""
    phases, delays = hts_analog(geometry, architecture, focus, center_frequency)
    if digital is None:
        digital = np.zeros((1, architecture.rf_chain_count, 1))
    return HybridBeamformer.from_full_phases(architecture, phases, delays, digital)
