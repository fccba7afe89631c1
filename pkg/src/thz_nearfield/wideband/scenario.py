"""Default single-user wideband scenario used by the SE experiments."""
from __future__ import annotations

from dataclasses import dataclass, replace
from functools import cached_property

import numpy as np

from ..geometry import (
    SPEED_OF_LIGHT,
    ArrayGeometry,
    PolarLocation,
    array_element_xy,
    subcarrier_frequencies,
    wavelength,
    wideband_los_channels,
)
from .architecture import Architecture, ArchitectureConfig, optimize_fd, spectral_efficiency


@dataclass(frozen=True)
class WidebandScenario:
    """A multi-antenna user served over a near-field LoS wideband channel.

    The receive array is oriented perpendicular to the line of sight unless
    ``rx_orientation_deg`` is given.  Channels are normalized to
    unit-magnitude entries so that SNR equals ``power / noise_power``.
    """

    antenna_count: int = 128
    rf_chain_count: int = 4
    stream_count: int = 4
    ttd_per_chain: int = 16
    center_frequency: float = 100e9
    bandwidth: float = 10e9
    subcarrier_count: int = 10
    user_angle_deg: float = 30.0
    user_distance: float = 15.0
    rx_antenna_count: int = 4
    rx_spacing: float = 0.25
    rx_orientation_deg: float | None = None
    max_delay: float | None = None
    noise_power: float = 1.0

    @cached_property
    def geometry(self) -> ArrayGeometry:
        return ArrayGeometry.half_wavelength(self.antenna_count, self.center_frequency)

    @cached_property
    def rx_geometry(self) -> ArrayGeometry:
        return ArrayGeometry(self.rx_antenna_count, self.rx_spacing)

    @property
    def user(self) -> PolarLocation:
        return PolarLocation.from_degrees(self.user_angle_deg, self.user_distance)

    @property
    def rx_orientation(self) -> float:
        deg = self.user_angle_deg if self.rx_orientation_deg is None else self.rx_orientation_deg
        return float(np.deg2rad(deg))

    @property
    def delay_range(self) -> float:
        if self.max_delay is not None:
            return self.max_delay
        return 2 * self.geometry.aperture / SPEED_OF_LIGHT

    @cached_property
    def grid(self):
        return subcarrier_frequencies(self.center_frequency, self.bandwidth, self.subcarrier_count)

    @cached_property
    def channels(self):
        return wideband_los_channels(self.geometry, self.rx_geometry, self.user,
                                     self.rx_orientation, self.grid, normalize=True)

    @property
    def rx_locations(self) -> list[PolarLocation]:
        xy = array_element_xy(self.rx_geometry, self.user, self.rx_orientation)
        return [PolarLocation.from_cartesian(x, y) for x, y in xy]

    def architecture(self, kind: str, ttd_per_chain: int | None = None) -> ArchitectureConfig:
        return ArchitectureConfig(kind, self.antenna_count, self.rf_chain_count,
                                  ttd_per_chain or self.ttd_per_chain, self.delay_range)

    def power_for_snr(self, snr_db: float) -> float:
        return self.noise_power * 10 ** (snr_db / 10)

    def with_(self, **changes) -> "WidebandScenario":
        return replace(self, **changes)

    @property
    def wavelength(self) -> float:
        return wavelength(self.center_frequency)


SCHEMES = ("FD", "P-FDA", "HTS", "FDA", "HB")


def hts_focus(scenario: WidebandScenario, kind: str):
    """Focus points for HTS stage one.

    A fully-connected chain spans the whole aperture and can resolve the
    receive antennas, so chain ``l`` focuses on receive antenna ``l``.  A
    sub-connected chain only drives a small subarray whose beam covers the
    whole receiver; every chain then focuses on the user centre.
    """
    if Architecture(kind) is Architecture.fully_connected:
        return scenario.rx_locations
    return scenario.user


def evaluate_schemes(scenario: WidebandScenario, kind: str, snr_db: float, schemes=SCHEMES,
                     ttd_per_chain: int | None = None) -> dict:
    """Spectral efficiency of each requested scheme on one architecture.

    Returns ``{scheme: (se_bps_hz, converged)}``.  P-FDA is seeded with the
    better of the FDA and HTS analog stages.
    """
    from .optimizers import fda_fit, hts_analog, optimize_hts, optimize_pfda

    h = scenario.channels
    power = scenario.power_for_snr(snr_db)
    ns, noise = scenario.stream_count, scenario.noise_power
    arch = scenario.architecture(kind, ttd_per_chain)
    focus = hts_focus(scenario, kind)
    out = {}
    fd = optimize_fd(h, power, ns, noise)
    if "FD" in schemes:
        out["FD"] = (spectral_efficiency(h, fd, noise), True)
    fda = None
    if "FDA" in schemes or "P-FDA" in schemes:
        fda = fda_fit(h, arch, fd, power)
        out["FDA"] = (spectral_efficiency(h, fda, noise), fda.converged)
    if "HTS" in schemes:
        hts = optimize_hts(h, arch, power, ns, focus, scenario.geometry, noise)
        out["HTS"] = (spectral_efficiency(h, hts, noise), True)
    if "P-FDA" in schemes:
        seeds = [fda, hts_analog(scenario.geometry, arch, focus, scenario.center_frequency)]
        pfda = optimize_pfda(h, arch, power, ns, noise, initial=seeds)
        out["P-FDA"] = (spectral_efficiency(h, pfda, noise), pfda.converged)
    if "HB" in schemes:
        # conventional hybrid beamforming: phase shifters only
        hb_arch = ArchitectureConfig(arch.kind, arch.antenna_count, arch.rf_chain_count, 1, 0.0)
        hb_fda = fda_fit(h, hb_arch, fd, power)
        seeds = [hb_fda, hts_analog(scenario.geometry, hb_arch, focus, scenario.center_frequency)]
        hb = optimize_pfda(h, hb_arch, power, ns, noise, initial=seeds)
        out["HB"] = (spectral_efficiency(h, hb, noise), hb.converged)
    return {k: v for k, v in out.items() if k in schemes}
