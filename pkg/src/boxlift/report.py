"""Evaluation report rendering: aligned text table, JSON, CSV and figures."""

from __future__ import annotations

import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from boxlift.metrics import EvalReport

TABLE_DIFFICULTIES = ("easy", "moderate", "hard")


COL = 10


def _pct(value: float | None) -> str:
    return f"{'n/a':>{COL}}" if value is None else f"{100.0 * value:{COL}.2f}"


def format_table(report: EvalReport) -> str:
    """Aligned columns: easy/moderate/hard for AP and AOS, one row per class."""
    diffs = [d for d in TABLE_DIFFICULTIES if any(
        d in by_diff for by_diff in report.entries.values())]
    if not diffs:
        diffs = sorted({d for by_diff in report.entries.values() for d in by_diff})
    group_width = COL * len(diffs)
    header = (f"{'class':<12} |"
              + f"{'3D AP [%]':^{group_width}} |"
              + f"{'AOS [%]':^{group_width}} |")
    sub = "".join(f"{d:>{COL}}" for d in diffs)
    lines = [header, f"{'':<12} |{sub} |{sub} |", "-" * len(header)]
    for cls in sorted(report.entries):
        by_diff = report.entries[cls]
        ap_cells = "".join(_pct(by_diff[d].ap) if d in by_diff else f"{'n/a':>{COL}}"
                           for d in diffs)
        aos_cells = "".join(_pct(by_diff[d].aos) if d in by_diff else f"{'n/a':>{COL}}"
                            for d in diffs)
        lines.append(f"{cls:<12} |{ap_cells} |{aos_cells} |")
    return "\n".join(lines) + "\n"


def write_report_json(report: EvalReport, path) -> None:
    Path(path).write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")


def write_pr_csv(report: EvalReport, path) -> None:
    """Long-format curve points: one row per class, difficulty and recall point."""
    rows = ["class,difficulty,recall,precision_interp,similarity_interp"]
    for cls in sorted(report.entries):
        for diff in sorted(report.entries[cls]):
            curve = report.entries[cls][diff].curve
            if curve is None:
                continue
            for i, r in enumerate(curve.recalls):
                sim = "" if curve.similarity is None else f"{curve.similarity[i]:.9g}"
                rows.append(f"{cls},{diff},{r:.9g},{curve.precision[i]:.9g},{sim}")
    Path(path).write_text("\n".join(rows) + "\n")


def render_pr_figures(report: EvalReport, out_dir) -> list[Path]:
    """One PR figure per class; interpolated precision solid, similarity dashed."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for cls in sorted(report.entries):
        fig, ax = plt.subplots(figsize=(6.0, 4.0))
        plotted = False
        for diff in sorted(report.entries[cls]):
            ev = report.entries[cls][diff]
            if ev.curve is None:
                continue
            line, = ax.plot(ev.curve.recalls, ev.curve.precision,
                            label=f"{diff} (AP {100 * ev.ap:.1f}%)")
            if ev.curve.similarity is not None:
                ax.plot(ev.curve.recalls, ev.curve.similarity, linestyle="--",
                        color=line.get_color(), alpha=0.6)
            plotted = True
        if not plotted:
            plt.close(fig)
            continue
        ax.set_xlabel("recall")
        ax.set_ylabel("interpolated precision / similarity")
        ax.set_xlim(0.0, 1.0)
        ax.set_ylim(0.0, 1.05)
        ax.grid(alpha=0.3)
        ax.legend(loc="lower left", fontsize=8)
        ax.set_title(f"{cls}: precision (solid) and orientation similarity (dashed)")
        path = out_dir / f"pr_{cls.lower()}.png"
        fig.tight_layout()
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)
    return written
