"""Hybrid beamformer designs for TTD-based architectures.

Three designs are provided on top of the fully-digital optimum
(:func:`~thz_nearfield.wideband.architecture.optimize_fd`):

``optimize_fda``
    Fully-digital approximation: alternating minimization of
    ``sum_m ||F_m - A(f_m) D_m||_F^2`` over PS phases, TTD delays and the
    digital precoders.
``optimize_pfda``
    Penalty-based FDA: an auxiliary precoder per subcarrier is pulled
    towards the rate optimum (weighted-MMSE step) while being coupled to the
    hybrid product through a penalty whose weight grows until the two agree.
``optimize_hts``
    Heuristic two-stage design: analog beams focused on known locations at
    every subcarrier, then water-filling on the reduced equivalent channel.
"""
from __future__ import annotations

import logging
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from ..errors import DegenerateGeometryError, DomainError
from ..geometry import SPEED_OF_LIGHT, ArrayGeometry, PolarLocation
from .architecture import (
    ArchitectureConfig,
    HybridBeamformer,
    analog_stack,
    normalize_power,
    optimize_fd,
    rate_per_subcarrier,
    water_filling,
)

log = logging.getLogger(__name__)

DELAY_GRID_POINTS = 256
GOLDEN_ITERATIONS = 40
_INV_PHI = (np.sqrt(5.0) - 1.0) / 2.0


class _AnalogState:
    """Mutable PS phases ``(N, N_RF)`` and TTD delays ``(N_RF, K)``."""

    def __init__(self, architecture: ArchitectureConfig, phases: np.ndarray, delays: np.ndarray,
                 frequencies: np.ndarray):
        self.arch = architecture
        self.phases = np.array(phases, dtype=float)
        self.delays = np.array(delays, dtype=float)
        self.freqs = np.asarray(frequencies, dtype=float)
        self.delay_grid = np.linspace(0.0, architecture.max_delay, DELAY_GRID_POINTS)

    def analog(self) -> np.ndarray:
        return analog_stack(self.arch, self.phases, self.delays, self.freqs)

    def column(self, l: int) -> np.ndarray:
        rows = self.arch.chain_antennas(l)
        tau = self.delays[l, self.arch.ttd_group(l)]
        return np.exp(1j * (self.phases[rows, l][None] - 2 * np.pi * self.freqs[:, None] * tau[None]))

    def beamformer(self, digital: np.ndarray, **kw) -> HybridBeamformer:
        return HybridBeamformer.from_full_phases(self.arch, self.phases, self.delays.copy(), digital, **kw)


def _envelope(beta: np.ndarray, freqs: np.ndarray, t: np.ndarray) -> np.ndarray:
    """``|sum_m beta[m, k] exp(-j 2 pi f_m t[k, ...])|`` for each group ``k``."""
    ph = np.exp(-2j * np.pi * freqs[:, None, None] * t[None])
    return np.abs(np.einsum("mk,mkg->kg", beta, ph))


def _best_delays(beta: np.ndarray, freqs: np.ndarray, grid: np.ndarray, current: np.ndarray) -> np.ndarray:
    """Maximize the per-group envelope over ``[0, max_delay]``: grid search then golden section."""
    k_count = beta.shape[1]
    vals = _envelope(beta, freqs, np.broadcast_to(grid, (k_count, grid.size)))
    i = np.argmax(vals, axis=1)
    lo = grid[np.maximum(i - 1, 0)]
    hi = grid[np.minimum(i + 1, grid.size - 1)]
    x1 = hi - _INV_PHI * (hi - lo)
    x2 = lo + _INV_PHI * (hi - lo)
    f1 = _envelope(beta, freqs, x1[:, None])[:, 0]
    f2 = _envelope(beta, freqs, x2[:, None])[:, 0]
    for _ in range(GOLDEN_ITERATIONS):
        left = f1 > f2
        hi = np.where(left, x2, hi)
        lo = np.where(left, lo, x1)
        x2n = np.where(left, x1, lo + _INV_PHI * (hi - lo))
        x1n = np.where(left, hi - _INV_PHI * (hi - lo), x2)
        x1, x2 = x1n, x2n
        f1 = _envelope(beta, freqs, x1[:, None])[:, 0]
        f2 = _envelope(beta, freqs, x2[:, None])[:, 0]
    cands = np.stack([current, grid[i], x1, x2], axis=1)
    cvals = _envelope(beta, freqs, cands)
    rows = np.arange(k_count)
    j = np.argmax(cvals, axis=1)
    # keep the incumbent unless a candidate is strictly better
    improved = cvals[rows, j] > cvals[:, 0] * (1 + 1e-12)
    return np.where(improved, cands[rows, j], current)


def _analog_sweep(state: _AnalogState, target: np.ndarray, digital: np.ndarray,
                  update_delays: bool = True) -> None:
    """One Gauss-Seidel pass over RF chains, each an exact block update of its analog column.

    Minimizes ``sum_m ||target_m - A_m D_m||_F^2`` over the phases of the
    chain (closed form per phase shifter) and over each TTD delay jointly
    with a common phase rotation of the phase shifters it feeds.
    """
    arch = state.arch
    a = state.analog()
    resid = target - a @ digital
    for l in range(arch.rf_chain_count):
        rows = arch.chain_antennas(l)
        groups = arch.ttd_group(l)
        d_l = digital[:, l, :]  # (M, Ns)
        col = a[:, :, l]
        # residual with column l's own contribution removed
        e = resid + col[:, :, None] * d_l[:, None, :]
        y = np.einsum("ms,mns->mn", d_l, np.conj(e[:, rows, :]))  # (M, S)

        if update_delays and arch.max_delay > 0:
            beta = np.zeros((y.shape[0], arch.ttd_per_chain), dtype=complex)
            np.add.at(beta.T, groups, (np.exp(1j * state.phases[rows, l])[None] * y).T)
            new = _best_delays(beta, state.freqs, state.delay_grid, state.delays[l])
            state.delays[l] = new
            rot = np.sum(beta * np.exp(-2j * np.pi * state.freqs[:, None] * new[None]), axis=0)
            state.phases[rows, l] -= np.angle(rot)[groups]

        tau = state.delays[l, groups]
        z = np.sum(np.exp(-2j * np.pi * state.freqs[:, None] * tau[None]) * y, axis=0)
        nz = np.abs(z) > 0
        state.phases[rows[nz], l] = -np.angle(z[nz])

        new_col = np.zeros_like(col)
        new_col[:, rows] = state.column(l)
        a[:, :, l] = new_col
        resid = e - new_col[:, :, None] * d_l[:, None, :]


def _least_squares_digital(a: np.ndarray, target: np.ndarray) -> np.ndarray:
    return np.linalg.pinv(a) @ target


def _fit_error(a, digital, target) -> float:
    return float(np.sum(np.abs(target - a @ digital) ** 2))


def _conjugate_phase_init(channels, architecture: ArchitectureConfig) -> np.ndarray:
    """PS phases matching, at the centre subcarrier, receive antenna ``l mod N_rx`` for chain ``l``."""
    h = channels.matrices
    hc = h[h.shape[0] // 2] if h.shape[0] % 2 else 0.5 * (h[h.shape[0] // 2 - 1] + h[h.shape[0] // 2])
    phases = np.zeros((architecture.antenna_count, architecture.rf_chain_count))
    for l in range(architecture.rf_chain_count):
        phases[:, l] = -np.angle(hc[l % h.shape[1]])
    return phases


def _check_streams(channels, architecture, stream_count):
    if stream_count > architecture.rf_chain_count:
        raise DomainError("stream_count cannot exceed rf_chain_count")
    if architecture.antenna_count != channels.transmit_count:
        raise DomainError("architecture antenna_count does not match the channel")


def fda_fit(channels, architecture: ArchitectureConfig, targets: np.ndarray, power: float,
            max_iter: int = 200, tol: float = 1e-6, update_delays: bool = True,
            initial_phases: np.ndarray | None = None) -> HybridBeamformer:
    """Alternating least-squares fit of a hybrid beamformer to given precoders.

    The objective history is stored in ``info["objective"]``; it is
    non-increasing by construction.
    """
    freqs = channels.grid.frequencies
    phases = _conjugate_phase_init(channels, architecture) if initial_phases is None else initial_phases
    delays = np.zeros((architecture.rf_chain_count, architecture.ttd_per_chain))
    state = _AnalogState(architecture, phases, delays, freqs)
    a = state.analog()
    digital = _least_squares_digital(a, targets)
    history = [_fit_error(a, digital, targets)]
    converged = False
    for _ in range(max_iter):
        _analog_sweep(state, targets, digital, update_delays)
        a = state.analog()
        digital = _least_squares_digital(a, targets)
        history.append(_fit_error(a, digital, targets))
        prev, cur = history[-2], history[-1]
        if prev - cur <= tol * max(prev, np.finfo(float).tiny):
            converged = True
            break
    if not converged:
        log.warning("FDA stopped at the iteration cap (%d)", max_iter)
    digital = normalize_power(a, digital, power)
    return state.beamformer(digital, converged=converged, info={"objective": history})


def optimize_fda(channels, architecture: ArchitectureConfig, power: float, stream_count: int,
                 noise_power: float = 1.0, max_iter: int = 200, tol: float = 1e-6) -> HybridBeamformer:
    """Approximate the fully-digital optimum with a TTD-based hybrid beamformer."""
    _check_streams(channels, architecture, stream_count)
    targets = optimize_fd(channels, power, stream_count, noise_power)
    return fda_fit(channels, architecture, targets, power, max_iter, tol)


def _wmmse_precoder(h: np.ndarray, f: np.ndarray, anchor: np.ndarray, rho: float, power: float,
                    noise_power: float) -> np.ndarray:
    """Minimize ``tr(W E(F)) + ||F - anchor||^2 / rho`` s.t. ``||F||^2 <= power``.

    ``U`` and ``W`` are the MMSE receiver and weight for the current ``f``.
    """
    nrx = h.shape[0]
    hf = h @ f
    cov = hf @ hf.conj().T + noise_power * np.eye(nrx)
    u = np.linalg.solve(cov, hf)
    e = np.eye(f.shape[1]) - u.conj().T @ hf
    e = 0.5 * (e + e.conj().T)
    w = np.linalg.inv(e)
    w = 0.5 * (w + w.conj().T)
    chol = np.linalg.cholesky(w)
    g = h.conj().T @ u @ chol  # B = g g^H
    vg, sg, _ = np.linalg.svd(g, full_matrices=False)
    q = h.conj().T @ u @ w + anchor / rho
    q_par = vg.conj().T @ q
    q_perp_sq = max(np.sum(np.abs(q) ** 2) - np.sum(np.abs(q_par) ** 2), 0.0)
    par_sq = np.sum(np.abs(q_par) ** 2, axis=1)
    s2 = sg**2

    def power_at(alpha):
        return np.sum(par_sq / (s2 + alpha) ** 2) + q_perp_sq / alpha**2

    alpha = 1.0 / rho
    if power_at(alpha) > power:
        hi = alpha + np.sqrt(np.sum(np.abs(q) ** 2) / power) + 1.0
        alpha = brentq(lambda x: power_at(x) - power, alpha, hi, xtol=1e-14 * hi, rtol=1e-14)
    return vg @ (q_par / (s2 + alpha)[:, None]) + (q - vg @ q_par) / alpha


def _log_rate(h, f, noise_power) -> float:
    return float(np.sum(rate_per_subcarrier(h, f, noise_power)) * np.log(2))


def optimize_pfda(channels, architecture: ArchitectureConfig, power: float, stream_count: int,
                  noise_power: float = 1.0, initial=None, rho_scale: float = 1.0, shrink: float = 0.5,
                  coupling_tol: float = 1e-4, inner_tol: float = 1e-5, max_inner: int = 30,
                  max_outer: int = 60) -> HybridBeamformer:
    """Penalty-based fully-digital approximation.

    Alternates a weighted-MMSE update of auxiliary precoders ``Fhat_m`` with
    the FDA block updates fitting ``A(f_m) D_m`` to them; the penalty weight
    ``1/rho`` doubles whenever the inner loop stalls, until the relative
    coupling residual drops below ``coupling_tol``.

    ``initial`` holds candidate analog starting points, each a
    :class:`HybridBeamformer` or a ``(phases (N, N_RF), delays (N_RF, K))``
    pair; the candidate with the highest rate (under its rate-optimal
    digital stage) seeds the penalty continuation.  By default the single
    candidate is the FDA solution.  After every inner loop the digital stage
    is set to the rate-optimal precoder for the current analog stage and the
    best such hybrid beamformer, the seed included, is returned.

    ``info`` carries ``penalized_objective`` (one list per inner loop, each
    non-increasing), ``coupling`` (residual after each inner loop), ``rho``
    and ``se`` (bits/s/Hz after each inner loop).
    """
    _check_streams(channels, architecture, stream_count)
    h = channels.matrices
    freqs = channels.grid.frequencies
    m_count = h.shape[0]
    fd = optimize_fd(channels, power, stream_count, noise_power)

    if initial is None:
        initial = [fda_fit(channels, architecture, fd, power)]
    elif isinstance(initial, (HybridBeamformer, tuple)):
        initial = [initial]

    def rate_optimal(analog):
        d = equivalent_channel_digital(h, analog, power, stream_count, noise_power)
        return d, float(np.mean(rate_per_subcarrier(h, analog @ d, noise_power)))

    best_se = -np.inf
    for cand in initial:
        if isinstance(cand, HybridBeamformer):
            cand = (cand.full_phases(), cand.ttd_delays)
        cand_state = _AnalogState(architecture, cand[0], cand[1], freqs)
        d_opt, se = rate_optimal(cand_state.analog())
        if se > best_se:
            state, best_se, best_digital = cand_state, se, d_opt
    a = state.analog()
    best = (state.phases.copy(), state.delays.copy())

    fhat = fd.copy()
    digital = _least_squares_digital(a, fhat)
    rho = rho_scale * power

    def objective():
        return -_log_rate(h, fhat, noise_power) + _fit_error(a, digital, fhat) / rho

    def coupling():
        num = np.sqrt(np.sum(np.abs(fhat - a @ digital) ** 2, axis=(1, 2)))
        den = np.sqrt(np.sum(np.abs(fhat) ** 2, axis=(1, 2)))
        return float(np.max(num / np.where(den > 0, den, 1.0)))

    histories, couplings, rhos, rates = [], [], [], []
    converged = False
    for _ in range(max_outer):
        hist = [objective()]
        for _ in range(max_inner):
            for m in range(m_count):
                fhat[m] = _wmmse_precoder(h[m], fhat[m], a[m] @ digital[m], rho, power, noise_power)
            digital = _least_squares_digital(a, fhat)
            _analog_sweep(state, fhat, digital)
            a = state.analog()
            digital = _least_squares_digital(a, fhat)
            hist.append(objective())
            if hist[-2] - hist[-1] <= inner_tol * abs(hist[-2]):
                break
        histories.append(hist)
        couplings.append(coupling())
        rhos.append(rho)
        d_opt, se = rate_optimal(a)
        rates.append(se)
        if se > best_se:
            best_se, best_digital = se, d_opt
            best = (state.phases.copy(), state.delays.copy())
        if couplings[-1] < coupling_tol:
            converged = True
            break
        rho *= shrink
    if not converged:
        log.warning("P-FDA stopped with coupling residual %.3g", couplings[-1])
    state.phases, state.delays = best
    return state.beamformer(best_digital, converged=converged, info={
        "penalized_objective": histories, "coupling": couplings, "rho": rhos, "se": rates,
    })


def hts_analog(geometry: ArrayGeometry, architecture: ArchitectureConfig,
               focus: PolarLocation | Sequence[PolarLocation], center_frequency: float):
    """Stage one of HTS: TTD delays and PS phases focusing chain ``l`` on ``focus[l]``.

    Each TTD compensates the propagation delay at the centre of the antenna
    group it feeds; phase shifters then match the exact conjugate phase at
    the centre frequency.  Returns ``(phases (N, N_RF), delays (N_RF, K))``.
    """
    points = [focus] if isinstance(focus, PolarLocation) else list(focus)
    if not points:
        raise DomainError("at least one focus location is required")
    if geometry.element_count != architecture.antenna_count:
        raise DomainError("geometry and architecture disagree on the antenna count")
    pos = geometry.element_positions
    phases = np.zeros((architecture.antenna_count, architecture.rf_chain_count))
    delays = np.zeros((architecture.rf_chain_count, architecture.ttd_per_chain))
    for l in range(architecture.rf_chain_count):
        q = points[l % len(points)]
        rows = architecture.chain_antennas(l)
        groups = architecture.ttd_group(l)
        p = pos[rows]
        r_n = np.sqrt(q.distance**2 + p**2 - 2 * q.distance * p * np.sin(q.angle))
        if np.min(r_n) < 1e-9:
            raise DegenerateGeometryError(f"focus {q} coincides with an antenna")
        centers = np.array([p[groups == k].mean() for k in range(architecture.ttd_per_chain)])
        r_c = np.sqrt(q.distance**2 + centers**2 - 2 * q.distance * centers * np.sin(q.angle))
        r_ref = r_c.max()
        t = np.clip((r_ref - r_c) / SPEED_OF_LIGHT, 0.0, architecture.max_delay)
        delays[l] = t
        phases[rows, l] = 2 * np.pi * center_frequency * ((r_n - r_ref) / SPEED_OF_LIGHT + t[groups])
    return np.mod(phases, 2 * np.pi), delays


def equivalent_channel_digital(channels_h: np.ndarray, analog: np.ndarray, power: float,
                               stream_count: int, noise_power: float) -> np.ndarray:
    """Capacity-optimal digital precoders for a fixed analog stage.

    Whitens the analog Gram matrix so the power constraint applies to
    ``A D``, then water-fills over the eigenmodes of ``H A``.
    """
    m_count, _, n_rf = analog.shape
    out = np.zeros((m_count, n_rf, stream_count), dtype=complex)
    for m in range(m_count):
        gram = analog[m].conj().T @ analog[m]
        lam, vec = np.linalg.eigh(gram)
        keep = lam > lam.max() * 1e-10
        whiten = vec[:, keep] / np.sqrt(lam[keep])  # (N_RF, r)
        heq = channels_h[m] @ analog[m] @ whiten
        _, s, vh = np.linalg.svd(heq)
        ns = min(stream_count, s.size)
        p = water_filling(s[:ns] ** 2, power, noise_power)
        out[m, :, :ns] = whiten @ (np.conj(vh[:ns]).T * np.sqrt(p))
    return out


def optimize_hts(channels, architecture: ArchitectureConfig, power: float, stream_count: int,
                 user_location, geometry: ArrayGeometry, noise_power: float = 1.0) -> HybridBeamformer:
    """Heuristic two-stage design.

    ``user_location`` is a single PolarLocation or one location per RF chain
    (cycled), e.g. the receive-antenna positions of a multi-antenna user.
    Stage one needs only these locations; stage two uses the equivalent
    channels ``H_m A(f_m)``.
    """
    _check_streams(channels, architecture, stream_count)
    phases, delays = hts_analog(geometry, architecture, user_location, channels.grid.center_frequency)
    a = analog_stack(architecture, phases, delays, channels.grid.frequencies)
    digital = equivalent_channel_digital(channels.matrices, a, power, stream_count, noise_power)
    return HybridBeamformer.from_full_phases(architecture, phases, delays, digital)
