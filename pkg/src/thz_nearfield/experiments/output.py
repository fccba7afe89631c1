"""Result tables, deterministic CSV rendering and run manifests."""
from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

SCHEMAS = {
    "fig2_gainmap": (("angle_deg", "deg"), ("distance_m", "m"), ("gain_norm", "normalized, max 1")),
    "fig4a_se_vs_snr": (("snr_db", "dB"), ("scheme", "label"), ("architecture", "label"),
                        ("se_bps_hz", "bit/s/Hz")),
    "fig4b_se_vs_ttd": (("ttd_count", "TTDs per RF chain"), ("scheme", "label"), ("architecture", "label"),
                        ("se_bps_hz", "bit/s/Hz")),
    "fig5a_music": (("angle_deg", "deg"), ("distance_m", "m"), ("spectrum_norm", "normalized, max 1")),
    "fig5b_rcrb": (("distance_m", "m"), ("model", "label"), ("rcrb_angle_rad", "rad"),
                   ("rcrb_distance_m", "m, blank when the model has no distance parameter")),
}

FLOAT_FORMAT = ".10g"


@dataclass
class ResultTable:
    kind: str
    rows: list  # tuples matching SCHEMAS[kind]; None marks a not-applicable cell
    flags: list = field(default_factory=list)  # {"row": i, "reason": str}
    summary: dict = field(default_factory=dict)
    extras: dict = field(default_factory=dict)  # arrays kept for plotting, never written

    @property
    def columns(self) -> tuple[str, ...]:
        return tuple(c for c, _ in SCHEMAS[self.kind])

    def column(self, name: str) -> list:
        i = self.columns.index(name)
        return [r[i] for r in self.rows]


def format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, str):
        return value
    if isinstance(value, (bool,)):
        raise TypeError("booleans are not valid cells")
    if isinstance(value, int):
        return str(value)
    x = float(value)
    if not math.isfinite(x):
        raise ValueError(f"refusing to write non-finite value {x}")
    if x == 0.0:
        x = 0.0  # drop the sign of -0.0
    return format(x, FLOAT_FORMAT)


def render_csv(table: ResultTable, header_comments: list[str]) -> str:
    schema = SCHEMAS[table.kind]
    lines = [f"# {c}" for c in header_comments]
    lines.append("# units: " + "; ".join(f"{c} [{u}]" for c, u in schema))
    lines.append(",".join(table.columns))
    width = len(schema)
    for row in table.rows:
        if len(row) != width:
            raise ValueError(f"row {row!r} does not match the {table.kind} schema")
        lines.append(",".join(format_cell(v) for v in row))
    return "\n".join(lines) + "\n"


def csv_body(text: str) -> str:
    """Header row plus data rows, without comment lines."""
    return "".join(line for line in text.splitlines(keepends=True) if not line.startswith("#"))


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    body = csv_body(Path(path).read_text()).splitlines()
    return body[0].split(","), [line.split(",") for line in body[1:]]


def write_text_atomic(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()


def write_manifest(path: Path, manifest: dict) -> None:
    write_text_atomic(path, json.dumps(manifest, indent=2, sort_keys=True) + "\n")
