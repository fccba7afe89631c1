"""TTD-based hybrid beamforming architectures and spectral-efficiency evaluation."""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from ..errors import DimensionError, DomainError

FULLY_CONNECTED = "fully_connected"
SUB_CONNECTED = "sub_connected"


class Architecture(str, Enum):
    fully_connected = FULLY_CONNECTED
    sub_connected = SUB_CONNECTED


@dataclass(frozen=True)
class ArchitectureConfig:
    """Wiring of the analog network.

    In the fully-connected layout every RF chain reaches all ``antenna_count``
    antennas through ``ttd_per_chain`` TTDs, each feeding a contiguous block
    of phase shifters.  In the sub-connected layout chain ``l`` only reaches
    the ``l``-th contiguous subarray of ``antenna_count / rf_chain_count``
    antennas.
    """

    kind: Architecture
    antenna_count: int
    rf_chain_count: int
    ttd_per_chain: int
    max_delay: float

    def __post_init__(self):
        object.__setattr__(self, "kind", Architecture(self.kind))
        problems = self.problems()
        if problems:
            raise DomainError("; ".join(problems))

    def problems(self) -> list[str]:
        out = []
        n, nrf, k = self.antenna_count, self.rf_chain_count, self.ttd_per_chain
        if n < 1 or nrf < 1 or k < 1:
            return ["antenna, RF-chain and TTD counts must be positive"]
        if n % nrf:
            out.append(f"rf_chain_count={nrf} must divide antenna_count={n}")
        elif self.connected_count % k:
            out.append(
                f"ttd_per_chain={k} must divide the {self.connected_count} antennas driven by each RF chain"
            )
        if self.max_delay < 0:
            out.append("max_delay must be non-negative")
        return out

    @property
    def connected_count(self) -> int:
        """Antennas (hence phase shifters) driven by one RF chain."""
        if self.kind is Architecture.fully_connected:
            return self.antenna_count
        return self.antenna_count // self.rf_chain_count

    @property
    def group_size(self) -> int:
        """Phase shifters fed by a single TTD."""
        return self.connected_count // self.ttd_per_chain

    def chain_antennas(self, chain: int) -> np.ndarray:
        if self.kind is Architecture.fully_connected:
            return np.arange(self.antenna_count)
        s = self.connected_count
        return np.arange(chain * s, (chain + 1) * s)

    def ttd_group(self, chain: int) -> np.ndarray:
        """TTD index for each antenna of ``chain_antennas(chain)``."""
        return np.arange(self.connected_count) // self.group_size

    def mask(self) -> np.ndarray:
        """Boolean connection matrix, shape ``(N, N_RF)``."""
        m = np.zeros((self.antenna_count, self.rf_chain_count), dtype=bool)
        for l in range(self.rf_chain_count):
            m[self.chain_antennas(l), l] = True
        return m

    def group_index(self) -> np.ndarray:
        """TTD index of antenna ``n`` on chain ``l``; -1 where unconnected. Shape ``(N, N_RF)``."""
        g = -np.ones((self.antenna_count, self.rf_chain_count), dtype=int)
        for l in range(self.rf_chain_count):
            g[self.chain_antennas(l), l] = self.ttd_group(l)
        return g


@dataclass
class HybridBeamformer:
    """PS phases and TTD delays (frequency independent) plus per-subcarrier digital precoders.

    ``ps_phases`` has shape ``(N_RF, connected_count)``: one entry per
    physical phase shifter.  ``ttd_delays`` has shape ``(N_RF, K)`` in
    seconds.  ``digital`` has shape ``(M, N_RF, N_s)``.
    """

    architecture: ArchitectureConfig
    ps_phases: np.ndarray
    ttd_delays: np.ndarray
    digital: np.ndarray
    converged: bool = True
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        arch = self.architecture
        self.ps_phases = np.mod(np.asarray(self.ps_phases, dtype=float), 2 * np.pi)
        self.ttd_delays = np.asarray(self.ttd_delays, dtype=float)
        self.digital = np.asarray(self.digital, dtype=complex)
        if self.ps_phases.shape != (arch.rf_chain_count, arch.connected_count):
            raise DimensionError(f"ps_phases shape {self.ps_phases.shape} does not match architecture")
        if self.ttd_delays.shape != (arch.rf_chain_count, arch.ttd_per_chain):
            raise DimensionError(f"ttd_delays shape {self.ttd_delays.shape} does not match architecture")
        if self.digital.ndim != 3 or self.digital.shape[1] != arch.rf_chain_count:
            raise DimensionError("digital must have shape (M, N_RF, N_s)")

    @classmethod
    def from_full_phases(cls, architecture, phases_nl, delays, digital, **kw) -> "HybridBeamformer":
        """Build from an ``(N, N_RF)`` phase array; unconnected entries are ignored."""
        ps = np.stack([phases_nl[architecture.chain_antennas(l), l]
                       for l in range(architecture.rf_chain_count)])
        return cls(architecture, ps, delays, digital, **kw)

    def full_phases(self) -> np.ndarray:
        arch = self.architecture
        out = np.zeros((arch.antenna_count, arch.rf_chain_count))
        for l in range(arch.rf_chain_count):
            out[arch.chain_antennas(l), l] = self.ps_phases[l]
        return out


def analog_stack(architecture: ArchitectureConfig, phases_nl: np.ndarray, delays: np.ndarray,
                 frequencies) -> np.ndarray:
    """Analog beamformers for all frequencies, shape ``(M, N, N_RF)``."""
    freqs = np.atleast_1d(np.asarray(frequencies, dtype=float))
    if np.any(freqs <= 0):
        raise DomainError("frequencies must be positive")
    mask = architecture.mask()
    g = architecture.group_index()
    chain = np.broadcast_to(np.arange(architecture.rf_chain_count), g.shape)
    tau = np.where(mask, delays[chain, np.maximum(g, 0)], 0.0)  # (N, N_RF)
    a = np.exp(1j * (phases_nl[None] - 2 * np.pi * freqs[:, None, None] * tau[None]))
    return a * mask[None]


def assemble_analog(beamformer: HybridBeamformer, frequency: float) -> np.ndarray:
    """Analog beamformer ``A(f)`` of shape ``(N, N_RF)``."""
    if frequency <= 0:
        raise DomainError(f"frequency must be positive, got {frequency}")
    return analog_stack(beamformer.architecture, beamformer.full_phases(),
                        beamformer.ttd_delays, [frequency])[0]


def precoders(beamformer: HybridBeamformer, frequencies) -> np.ndarray:
    """Overall precoders ``F_m = A(f_m) D_m``, shape ``(M, N, N_s)``."""
    a = analog_stack(beamformer.architecture, beamformer.full_phases(),
                     beamformer.ttd_delays, frequencies)
    if a.shape[0] != beamformer.digital.shape[0]:
        raise DimensionError("digital precoder count does not match subcarrier count")
    return a @ beamformer.digital


def rate_per_subcarrier(channels: np.ndarray, precoder: np.ndarray, noise_power: float) -> np.ndarray:
    """``log2 det(I + H F F^H H^H / sigma^2)`` for each subcarrier."""
    hf = channels @ precoder
    nrx = channels.shape[-2]
    gram = np.eye(nrx) + hf @ np.conj(np.swapaxes(hf, -1, -2)) / noise_power
    sign, logdet = np.linalg.slogdet(gram)
    return logdet.real / np.log(2)


def spectral_efficiency(channels, beamformer, noise_power: float) -> float:
    """Average spectral efficiency (bits/s/Hz) over subcarriers.

    ``beamformer`` is either a :class:`HybridBeamformer` or a stack of
    fully-digital precoders ``(M, N, N_s)``.
    """
    if noise_power <= 0:
        raise DomainError("noise_power must be positive")
    h = channels.matrices
    if not np.all(np.isfinite(h)):
        raise DomainError("channel contains non-finite entries")
    if isinstance(beamformer, HybridBeamformer):
        f = precoders(beamformer, channels.grid.frequencies)
    else:
        f = np.asarray(beamformer)
    if f.ndim != 3 or f.shape[0] != h.shape[0] or f.shape[1] != h.shape[2]:
        raise DimensionError(f"precoder shape {f.shape} incompatible with channels {h.shape}")
    return float(np.mean(rate_per_subcarrier(h, f, noise_power)))


def water_filling(gains, power: float, noise_power: float = 1.0) -> np.ndarray:
    """Power allocation maximizing ``sum log(1 + p_i g_i / noise)`` with ``sum p_i = power``."""
    gains = np.asarray(gains, dtype=float)
    p = np.zeros_like(gains)
    if power <= 0 or not np.any(gains > 0):
        return p
    order = np.argsort(gains)[::-1]
    g = gains[order]
    active = int(np.count_nonzero(g > 0))
    inv = noise_power / g[:active]
    while active > 0:
        level = (power + inv[:active].sum()) / active
        if level > inv[active - 1]:
            break
        active -= 1
    p[order[:active]] = level - inv[:active]
    return p


def optimize_fd(channels, power_per_subcarrier: float, stream_count: int,
                noise_power: float = 1.0) -> np.ndarray:
    """Capacity-achieving fully-digital precoders: right singular vectors with water-filling.

    Returns an array of shape ``(M, N, N_s)``.
    """
    h = channels.matrices
    if stream_count > min(h.shape[1:]):
        raise DomainError(f"stream_count={stream_count} exceeds the channel dimensions {h.shape[1:]}")
    m_count, _, n_tx = h.shape
    out = np.zeros((m_count, n_tx, stream_count), dtype=complex)
    for m in range(m_count):
        _, s, vh = np.linalg.svd(h[m])
        s = s[:stream_count]
        p = water_filling(s**2, power_per_subcarrier, noise_power)
        out[m] = np.conj(vh[:stream_count]).T * np.sqrt(p)
    return out


def normalize_power(analog: np.ndarray, digital: np.ndarray, power: float) -> np.ndarray:
    """Rescale ``digital`` so that ``||A_m D_m||_F^2 = power`` on each subcarrier."""
    f = analog @ digital
    norms = np.sum(np.abs(f) ** 2, axis=(1, 2))
    scale = np.where(norms > 0, np.sqrt(power / np.where(norms > 0, norms, 1.0)), 0.0)
    return digital * scale[:, None, None]
