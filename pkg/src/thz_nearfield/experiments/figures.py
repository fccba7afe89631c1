"""Static PNG renderings of result tables (Agg backend, no display needed)."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .output import ResultTable  # noqa: E402


def _heatmap(ax, angles_deg, distances, values, label, floor_db, log_distance=False):
    db = 10 * np.log10(np.maximum(values, 10 ** (floor_db / 10)))
    mesh = ax.pcolormesh(angles_deg, distances, db.T, shading="auto", cmap="viridis", vmin=floor_db, vmax=0)
    if log_distance:
        ax.set_yscale("log")
    ax.set_xlabel("angle [deg]")
    ax.set_ylabel("distance [m]")
    ax.figure.colorbar(mesh, ax=ax, label=label)


def _lines(ax, table: ResultTable, xname: str):
    x_i, s_i, a_i, y_i = (table.columns.index(c) for c in (xname, "scheme", "architecture", "se_bps_hz"))
    series = {}
    for row in table.rows:
        series.setdefault((row[s_i], row[a_i]), []).append((row[x_i], row[y_i]))
    for (scheme, arch), pts in series.items():
        pts.sort()
        style = "--" if arch == "sub_connected" else "-"
        ax.plot(*zip(*pts), style, marker="o", ms=3, label=f"{scheme} ({arch.replace('_', '-')})")
    ax.set_ylabel("spectral efficiency [bit/s/Hz]")
    ax.grid(alpha=0.3)
    ax.legend(fontsize=7)


def render(table: ResultTable, path) -> None:
    fig, ax = plt.subplots(figsize=(6.4, 4.8))
    try:
        if table.kind == "fig2_gainmap":
            e = table.extras
            _heatmap(ax, e["angles_deg"], e["distances"], e["gains"], "normalized gain [dB]", -30,
                     log_distance=True)
        elif table.kind == "fig5a_music":
            e = table.extras
            _heatmap(ax, e["angles_deg"], e["distances"], e["values"], "normalized spectrum [dB]", -40)
        elif table.kind == "fig4a_se_vs_snr":
            _lines(ax, table, "snr_db")
            ax.set_xlabel("SNR [dB]")
        elif table.kind == "fig4b_se_vs_ttd":
            _lines(ax, table, "ttd_count")
            ax.set_xscale("log", base=2)
            ax.set_xlabel("TTDs per RF chain")
        elif table.kind == "fig5b_rcrb":
            fig.clf()
            fig.set_size_inches(10, 4.2)
            ax_a, ax_d = fig.subplots(1, 2)
            for model in dict.fromkeys(table.column("model")):
                rows = [r for r in table.rows if r[1] == model]
                d = np.array([r[0] for r in rows])
                ang = np.array([np.nan if r[2] is None else r[2] for r in rows])
                ax_a.semilogy(d, ang, marker="o", ms=3, label=model)
                if any(r[3] is not None for r in rows):
                    ax_d.semilogy(d, [np.nan if r[3] is None else r[3] for r in rows], marker="o", ms=3,
                                  label=model)
            ax_a.set_ylabel("angle RCRB [rad]")
            ax_d.set_ylabel("distance RCRB [m]")
            for a in (ax_a, ax_d):
                a.set_xlabel("distance [m]")
                a.grid(alpha=0.3, which="both")
                a.legend(fontsize=7)
        else:
            raise ValueError(f"no figure for {table.kind}")
        fig.tight_layout()
        fig.savefig(path, dpi=120)
    finally:
        plt.close(fig)
