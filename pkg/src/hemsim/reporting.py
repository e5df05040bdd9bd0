"""Rendering of experiment reports: text tables, CSV files and figures.

The CSV schema is stable (fixed column order, costs to 2 decimals, energies
to 3, exceedance to 1) so outputs can be diffed and re-parsed. Figures are
written next to the delimited output as PNG files.
"""

from __future__ import annotations

import csv
import io
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from hemsim.experiment import ExperimentReport
from hemsim.schedule import EMS_NAMES

SUMMARY_COLUMNS = [
    "ems",
    "total_ie",
    "day_ahead_ie",
    "extras_ie",
    "peak_ie",
    "yearly_ie",
    "total_net",
    "day_ahead_net",
    "extras_net",
    "peak_net",
    "yearly_net",
    "mpcp_total",
    "imported_kwh",
    "exported_kwh",
    "net_kwh",
    "safety_activations",
    "fallback_steps",
    "exceedance_wh",
]

DAILY_COLUMNS = [
    "day",
    "house",
    "ems",
    "start",
    "day_ahead",
    "extras",
    "imported_kwh",
    "exported_kwh",
    "activations",
    "fallbacks",
    "exceedance_wh",
    "mpcp_delta",
    "failed",
]

COST_PARTS = ["day_ahead", "offtake_extras", "peak", "yearly"]


def _ems_order(report: ExperimentReport) -> list[str]:
    return [e for e in EMS_NAMES if e in report.per_ems]


def summary_rows(report: ExperimentReport) -> list[list[str]]:
    rows = []
    for ems in _ems_order(report):
        r = report.per_ems[ems]
        mpcp = f"{r.mpcp_cost.total:.2f}" if r.mpcp_cost else ""
        rows.append(
            [
                ems,
                f"{r.cost_ie.total:.2f}",
                f"{r.cost_ie.day_ahead:.2f}",
                f"{r.cost_ie.offtake_extras:.2f}",
                f"{r.cost_ie.peak:.2f}",
                f"{r.cost_ie.yearly:.2f}",
                f"{r.cost_net.total:.2f}",
                f"{r.cost_net.day_ahead:.2f}",
                f"{r.cost_net.offtake_extras:.2f}",
                f"{r.cost_net.peak:.2f}",
                f"{r.cost_net.yearly:.2f}",
                mpcp,
                f"{r.imported_kwh:.3f}",
                f"{r.exported_kwh:.3f}",
                f"{r.net_kwh:.3f}",
                str(r.safety_activations),
                str(r.fallback_steps),
                f"{r.exceedance_wh:.1f}",
            ]
        )
    return rows


def daily_rows(report: ExperimentReport) -> list[list[str]]:
    rows = []
    records = [d for ems in _ems_order(report) for d in report.per_ems[ems].days]
    for d in sorted(records, key=lambda r: (r.day, r.house)):
        delta = d.mpcp_delta
        rows.append(
            [
                str(d.day),
                str(d.house),
                d.ems,
                d.start,
                f"{d.day_ahead:.4f}",
                f"{d.extras:.4f}",
                f"{d.imported_kwh:.3f}",
                f"{d.exported_kwh:.3f}",
                str(d.activations),
                str(d.fallbacks),
                f"{d.exceedance_wh:.1f}",
                "" if delta is None else f"{delta:.4f}",
                "1" if d.failed else "0",
            ]
        )
    return rows


def render_csv(report: ExperimentReport) -> tuple[str, str]:
    """(summary, daily) CSV texts."""
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(SUMMARY_COLUMNS)
    w.writerows(summary_rows(report))
    summary = out.getvalue()
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(DAILY_COLUMNS)
    w.writerows(daily_rows(report))
    return summary, out.getvalue()


def render_text(report: ExperimentReport) -> str:
    lines = [
        f"experiment start {report.start}, {report.n_days} day(s)",
        "",
        f"{'ems':<8} {'total EUR':>10} {'net EUR':>10} {'MPC-P EUR':>10} "
        f"{'import kWh':>11} {'export kWh':>11} {'activations':>12} {'exceed Wh':>10}",
    ]
    for ems in _ems_order(report):
        r = report.per_ems[ems]
        mpcp = f"{r.mpcp_cost.total:10.2f}" if r.mpcp_cost else f"{'-':>10}"
        lines.append(
            f"{ems:<8} {r.cost_ie.total:10.2f} {r.cost_net.total:10.2f} {mpcp} "
            f"{r.imported_kwh:11.3f} {r.exported_kwh:11.3f} "
            f"{r.safety_activations:12d} {r.exceedance_wh:10.1f}"
        )
    if report.failures:
        lines.append("")
        lines.append(f"failed day-runs ({len(report.failures)}):")
        lines.extend(f"  {f}" for f in report.failures)
    return "\n".join(lines) + "\n"


def write_figures(report: ExperimentReport, outdir: str) -> list[str]:
    """Render the comparison figures as PNG files; returns the paths."""
    os.makedirs(outdir, exist_ok=True)
    order = _ems_order(report)
    paths = []

    # Stacked cost components per EMS, both accountings side by side.
    fig, ax = plt.subplots(figsize=(7.2, 4.2))
    width = 0.38
    colors = {"day_ahead": "#4878cf", "offtake_extras": "#ee854a",
              "peak": "#6acc64", "yearly": "#956cb4"}
    for shift, attr, label in ((-width / 2, "cost_ie", "import/export"),
                               (width / 2, "cost_net", "net")):
        bottoms = [0.0] * len(order)
        for part in COST_PARTS:
            vals = [getattr(getattr(report.per_ems[e], attr), part) for e in order]
            ax.bar(
                [i + shift for i in range(len(order))],
                vals,
                width,
                bottom=bottoms,
                color=colors[part],
                edgecolor="white",
                label=part if shift < 0 else None,
            )
            bottoms = [b + v for b, v in zip(bottoms, vals)]
    if any(report.per_ems[e].mpcp_cost for e in order):
        mp = [report.per_ems[e].mpcp_cost.total if report.per_ems[e].mpcp_cost else None
              for e in order]
        ax.scatter(
            [i for i, v in enumerate(mp) if v is not None],
            [v for v in mp if v is not None],
            marker="_", s=420, color="black", label="MPC-P benchmark", zorder=3,
        )
    ax.set_xticks(range(len(order)), order)
    ax.set_ylabel("cost [EUR]")
    ax.set_title("Electricity cost per EMS (left: import/export, right: net)")
    ax.legend(fontsize=8)
    fig.tight_layout()
    path = os.path.join(outdir, "costs.png")
    fig.savefig(path, dpi=150)
    plt.close(fig)
    paths.append(path)

    # Energy exchanged with the grid.
    fig, ax = plt.subplots(figsize=(6.4, 3.8))
    idx = range(len(order))
    ax.bar([i - 0.3 for i in idx], [report.per_ems[e].imported_kwh for e in order],
           0.3, label="imported", color="#d65f5f")
    ax.bar(idx, [report.per_ems[e].exported_kwh for e in order],
           0.3, label="exported", color="#6acc64")
    ax.bar([i + 0.3 for i in idx], [report.per_ems[e].net_kwh for e in order],
           0.3, label="net", color="#4878cf")
    ax.set_xticks(list(idx), order)
    ax.set_ylabel("energy [kWh]")
    ax.set_title("Grid exchange per EMS")
    ax.legend(fontsize=8)
    fig.tight_layout()
    path = os.path.join(outdir, "energy.png")
    fig.savefig(path, dpi=150)
    plt.close(fig)
    paths.append(path)

    # Safety layer: activations and residual exceedance.
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(7.6, 3.6))
    ax1.bar(order, [report.per_ems[e].safety_activations for e in order], color="#4878cf")
    ax1.bar(order, [report.per_ems[e].fallback_steps for e in order], color="#ee854a",
            label="fallbacks")
    ax1.set_title("Safety layer activations")
    ax1.legend(fontsize=8)
    ax2.bar(order, [report.per_ems[e].exceedance_wh for e in order], color="#d65f5f")
    ax2.set_title("Grid exceedance [Wh]")
    fig.tight_layout()
    path = os.path.join(outdir, "safety.png")
    fig.savefig(path, dpi=150)
    plt.close(fig)
    paths.append(path)

    # Daily cost deltas against the perfect-foresight benchmark.
    if any(d.mpcp_delta is not None for e in order for d in report.per_ems[e].days):
        fig, ax = plt.subplots(figsize=(7.2, 3.6))
        for ems in order:
            pts = [(d.day, d.mpcp_delta) for d in report.per_ems[ems].days
                   if d.mpcp_delta is not None]
            if pts:
                ax.plot([p[0] for p in pts], [p[1] for p in pts],
                        marker="o", ms=3, lw=1, label=ems)
        ax.axhline(0.0, color="black", lw=0.8)
        ax.set_xlabel("experiment day")
        ax.set_ylabel("cost minus MPC-P [EUR]")
        ax.set_title("Daily day-ahead+extras cost vs perfect-foresight benchmark")
        ax.legend(fontsize=8)
        fig.tight_layout()
        path = os.path.join(outdir, "daily_deltas.png")
        fig.savefig(path, dpi=150)
        plt.close(fig)
        paths.append(path)
    return paths


def write_report(
    report: ExperimentReport, outdir: str, fmt: str = "csv", figures: bool = True
) -> list[str]:
    """Write the rendered report (and figures) into ``outdir``."""
    os.makedirs(outdir, exist_ok=True)
    paths = []
    if fmt == "csv":
        summary, daily = render_csv(report)
        for name, text in (("summary.csv", summary), ("daily.csv", daily)):
            path = os.path.join(outdir, name)
            with open(path, "w") as fh:
                fh.write(text)
            paths.append(path)
    elif fmt == "text":
        path = os.path.join(outdir, "report.txt")
        with open(path, "w") as fh:
            fh.write(render_text(report))
        paths.append(path)
    else:
        raise ValueError(f"format must be text or csv, got {fmt!r}")
    if figures:
        paths.extend(write_figures(report, outdir))
    return paths
