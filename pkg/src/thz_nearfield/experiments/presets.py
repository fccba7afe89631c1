"""Experiment presets: each maps a validated config to a result table."""
from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable

import numpy as np

from ..beamfocusing import focus_region, gain_map
from ..geometry import ArrayGeometry, PolarLocation, rayleigh_distance, wavelength
from ..sensing import (
    CrbModel,
    SensingScene,
    Target,
    crb,
    music_spectrum,
    sample_covariance,
    simulate_snapshots,
)
from ..wideband.scenario import WidebandScenario, evaluate_schemes
from .config import PRESET_PARAMS, ExperimentConfig
from .output import ResultTable

log = logging.getLogger(__name__)

THREADS_ENV = "THZ_NEARFIELD_THREADS"

Progress = Callable[[str], None]


def _quiet(_msg: str) -> None:
    pass


def thread_count() -> int:
    raw = os.environ.get(THREADS_ENV, "").strip()
    if not raw:
        return 1
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ValueError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    return n


def ordered_map(fn, items) -> list:
    """``[fn(x) for x in items]``, spread over worker threads when the override asks for it."""
    items = list(items)
    n = min(thread_count(), len(items))
    if n <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


def _grid(lo: float, hi: float, step: float) -> np.ndarray:
    count = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return lo + step * np.arange(count)


# --- beamfocusing gain map -------------------------------------------------

def run_gainmap(cfg: ExperimentConfig, progress: Progress = _quiet) -> ResultTable:
    p = cfg.params
    f = p["frequency_hz"]
    geometry = ArrayGeometry.from_aperture(p["aperture_m"], p["spacing_wavelengths"] * wavelength(f))
    angles_deg = _grid(p["angle_min_deg"], p["angle_max_deg"], p["angle_step_deg"])
    distances = np.geomspace(p["distance_min_m"], p["distance_max_m"], p["distance_count"])
    focus = PolarLocation.from_degrees(p["focus_angle_deg"], p["focus_distance_m"])
    progress(f"gain map: {geometry.element_count} elements, {angles_deg.size} x {distances.size} grid")
    gmap = gain_map(geometry, focus, f, np.deg2rad(angles_deg), distances)
    rows = [(float(a), float(d), float(g))
            for a, row in zip(angles_deg, gmap.gains) for d, g in zip(distances, row)]
    summary = {"element_count": geometry.element_count, "aperture_m": geometry.aperture,
               "rayleigh_distance_m": rayleigh_distance(geometry.aperture, f)}
    try:
        region = focus_region(gmap)
        summary.update(depth_of_focus_m=_json_number(region.depth_of_focus),
                       angular_width_deg=_json_number(math.degrees(region.angular_width)),
                       focus_bounded=region.bounded)
    except ValueError as exc:  # focus outside the plotted grid
        summary["focus_region"] = str(exc)
    extras = {"angles_deg": angles_deg, "distances": distances, "gains": gmap.gains}
    return ResultTable("fig2_gainmap", rows, summary=summary, extras=extras)


def _json_number(x: float):
    return x if math.isfinite(x) else "unbounded"


# --- wideband spectral efficiency -----------------------------------------

def wideband_scenario(cfg: ExperimentConfig, ttd_per_chain: int | None = None) -> WidebandScenario:
    p = cfg.params
    return WidebandScenario(
        antenna_count=p["antenna_count"], rf_chain_count=p["rf_chain_count"], stream_count=p["stream_count"],
        ttd_per_chain=ttd_per_chain or p.get("ttd_per_chain", 16), center_frequency=p["center_frequency_hz"],
        bandwidth=p["bandwidth_hz"], subcarrier_count=p["subcarrier_count"],
        user_angle_deg=p["user_angle_deg"], user_distance=p["user_distance_m"],
        rx_antenna_count=p["rx_antenna_count"], rx_spacing=p["rx_spacing_m"],
        max_delay=None if p["max_delay_s"] < 0 else p["max_delay_s"], noise_power=p["noise_power"])


def _se_rows(key, results: dict, schemes, archs, rows, flags):
    """Append rows for one sweep point; FD is architecture-free and reported once."""
    for scheme in schemes:
        targets = ["fully_digital"] if scheme == "FD" else archs
        for arch in targets:
            se, ok = results[arch if scheme != "FD" else archs[0]][scheme]
            if not ok:
                flags.append({"row": len(rows), "reason": f"{scheme} on {arch} stopped at its iteration cap"})
            rows.append((key, scheme, arch, float(se)))


def run_se_vs_snr(cfg: ExperimentConfig, progress: Progress = _quiet) -> ResultTable:
    p = cfg.params
    scenario = wideband_scenario(cfg)
    scenario.channels  # build once before any worker threads start
    schemes, archs = p["schemes"], p["architectures"]

    def point(snr):
        out = {arch: evaluate_schemes(scenario, arch, snr, schemes) for arch in archs}
        progress(f"SNR {snr:g} dB done")
        return out

    rows, flags = [], []
    for snr, res in zip(p["snr_db_list"], ordered_map(point, p["snr_db_list"])):
        _se_rows(float(snr), res, schemes, archs, rows, flags)
    return ResultTable("fig4a_se_vs_snr", rows, flags=flags, summary=_se_summary(rows, "snr_db"))


def run_se_vs_ttd(cfg: ExperimentConfig, progress: Progress = _quiet) -> ResultTable:
    p = cfg.params
    scenario = wideband_scenario(cfg)
    scenario.channels
    schemes, archs = p["schemes"], p["architectures"]

    def point(k):
        out = {arch: evaluate_schemes(scenario, arch, p["snr_db"], schemes, ttd_per_chain=k) for arch in archs}
        progress(f"K = {k} done")
        return out

    rows, flags = [], []
    for k, res in zip(p["ttd_counts"], ordered_map(point, p["ttd_counts"])):
        _se_rows(int(k), res, schemes, archs, rows, flags)
    return ResultTable("fig4b_se_vs_ttd", rows, flags=flags, summary=_se_summary(rows, "ttd_count"))


def _se_summary(rows, key_name) -> dict:
    best = {}
    for key, scheme, arch, se in rows:
        name = f"{scheme}/{arch}"
        best[name] = max(best.get(name, -math.inf), se)
    return {"max_se_bps_hz": best}


# --- sensing ---------------------------------------------------------------

def _sensing_geometry(cfg: ExperimentConfig) -> ArrayGeometry:
    p = cfg.params
    return ArrayGeometry(p["element_count"], p["spacing_wavelengths"] * wavelength(p["frequency_hz"]))


def _scene(cfg: ExperimentConfig, distance: float) -> SensingScene:
    p = cfg.params
    target = Target(PolarLocation.from_degrees(p["target_angle_deg"], distance))
    return SensingScene((target,), _sensing_geometry(cfg), p["frequency_hz"], p["snapshot_count"],
                        noise_power=1.0, signal_power=10 ** (p["snr_db"] / 10))


def run_music(cfg: ExperimentConfig, progress: Progress = _quiet) -> ResultTable:
    p = cfg.params
    scene = _scene(cfg, p["target_distance_m"])
    angles_deg = _grid(p["angle_min_deg"], p["angle_max_deg"], p["angle_step_deg"])
    distances = _grid(p["distance_min_m"], p["distance_max_m"], p["distance_step_m"])
    progress(f"MUSIC: {scene.geometry.element_count} elements, {angles_deg.size} x {distances.size} grid")
    snaps = simulate_snapshots(scene, cfg.seed)
    spectrum = music_spectrum(sample_covariance(snaps), scene.geometry, scene.frequency, p["source_count"],
                          np.deg2rad(angles_deg), distances)
    rows = [(float(a), float(d), float(v))
            for a, row in zip(angles_deg, spectrum.values) for d, v in zip(distances, row)]
    i, j = spectrum.argmax()
    summary = {"peak_angle_deg": float(angles_deg[i]), "peak_distance_m": float(distances[j]),
               "target_angle_deg": p["target_angle_deg"], "target_distance_m": p["target_distance_m"],
               "seed": cfg.seed}
    extras = {"angles_deg": angles_deg, "distances": distances, "values": spectrum.values}
    return ResultTable("fig5a_music", rows, summary=summary, extras=extras)


def run_rcrb(cfg: ExperimentConfig, progress: Progress = _quiet) -> ResultTable:
    p = cfg.params
    rows, flags = [], []
    for d in p["distances_m"]:
        scene = _scene(cfg, d)
        for model in p["models"]:
            rep = crb(scene, model)
            ang = rep.rcrb_angle if math.isfinite(rep.rcrb_angle) else None
            dist = None
            if rep.model is CrbModel.near_field_joint:
                dist = rep.rcrb_distance if math.isfinite(rep.rcrb_distance) else None
                if dist is None:
                    flags.append({"row": len(rows), "reason": "distance is not identifiable (singular Fisher information)"})
            if ang is None:
                flags.append({"row": len(rows), "reason": "angle is not identifiable (singular Fisher information)"})
            rows.append((float(d), model, ang, dist))
    geometry = _sensing_geometry(cfg)
    summary = {"rayleigh_distance_m": rayleigh_distance(geometry.aperture, p["frequency_hz"]),
               "element_count": geometry.element_count}
    return ResultTable("fig5b_rcrb", rows, flags=flags, summary=summary)


RUNNERS = {
    "fig2_gainmap": run_gainmap,
    "fig4a_se_vs_snr": run_se_vs_snr,
    "fig4b_se_vs_ttd": run_se_vs_ttd,
    "fig5a_music": run_music,
    "fig5b_rcrb": run_rcrb,
}

DESCRIPTIONS = {
    "fig2_gainmap": ("Fig. 2", "normalized beamfocusing gain over angle x distance"),
    "fig4a_se_vs_snr": ("Fig. 4a", "wideband spectral efficiency versus SNR per scheme and architecture"),
    "fig4b_se_vs_ttd": ("Fig. 4b", "wideband spectral efficiency versus TTDs per RF chain"),
    "fig5a_music": ("Fig. 5a", "2-D MUSIC pseudo-spectrum for a single near-field target"),
    "fig5b_rcrb": ("Fig. 5b", "root CRB of angle and distance versus target distance"),
    "custom": ("Figs. 2/4a/4b/5a/5b", "any preset above with overrides; set base_experiment"),
}


def _fmt_default(v) -> str:
    if isinstance(v, list):
        return "[" + ",".join(_fmt_default(x) for x in v) + "]"
    if isinstance(v, float):
        return format(v, "g")
    return str(v)


def list_experiments() -> str:
    lines = []
    for name, (fig, text) in DESCRIPTIONS.items():
        if name == "custom":
            defaults = "base_experiment=<preset>, then that preset's keys"
        else:
            defaults = ", ".join(f"{q.name}={_fmt_default(q.default)}" for q in PRESET_PARAMS[name])
        lines.append(f"{name:<16} [{fig}] {text}; defaults: {defaults}")
    return "\n".join(lines) + "\n"
