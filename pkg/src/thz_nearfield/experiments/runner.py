"""Run a validated experiment and persist CSV, manifest and figure."""
from __future__ import annotations

import datetime as _dt
import time
from dataclasses import dataclass
from pathlib import Path

from .. import __version__
from .config import ExperimentConfig
from .output import ResultTable, render_csv, sha256_text, write_manifest, write_text_atomic
from .presets import RUNNERS, thread_count


@dataclass(frozen=True)
class RunResult:
    table: ResultTable
    csv_path: Path
    manifest_path: Path
    figure_path: Path | None
    manifest: dict


def compute(config: ExperimentConfig, progress=None) -> ResultTable:
    """Result table of a config without touching the filesystem."""
    return RUNNERS[config.kind](config, progress or (lambda _m: None))


def run_experiment(config: ExperimentConfig, out_dir=None, figures: bool = True, progress=None) -> RunResult:
    """Compute the preset, then write ``<experiment>.csv``, ``.manifest.json`` and ``.png``."""
    out = Path(out_dir if out_dir is not None else config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    started = _dt.datetime.now(_dt.timezone.utc)
    t0 = time.perf_counter()
    table = compute(config, progress)
    elapsed = time.perf_counter() - t0

    stem = config.experiment if config.base_experiment is None else f"custom_{config.base_experiment}"
    header = [f"experiment: {config.experiment}", f"kind: {config.kind}", f"seed: {config.seed}",
              f"config_sha256: {config.numeric_hash()}"]
    text = render_csv(table, header)
    csv_path = out / f"{stem}.csv"
    write_text_atomic(csv_path, text)

    figure_path = None
    if figures:
        from .figures import render

        figure_path = out / f"{stem}.png"
        render(table, figure_path)

    manifest = {
        "experiment": config.experiment,
        "kind": config.kind,
        "config": config.to_dict(),
        "config_sha256": config.numeric_hash(),
        "seed": config.seed,
        "tool_version": __version__,
        "started_at_utc": started.isoformat(timespec="seconds"),
        "wall_clock_s": round(elapsed, 3),
        "threads": thread_count(),
        "csv": csv_path.name,
        "csv_sha256": sha256_text(text),
        "columns": list(table.columns),
        "row_count": len(table.rows),
        "flagged_rows": table.flags,
        "figure": figure_path.name if figure_path else None,
        "summary": table.summary,
    }
    manifest_path = out / f"{stem}.manifest.json"
    write_manifest(manifest_path, manifest)
    return RunResult(table, csv_path, manifest_path, figure_path, manifest)
