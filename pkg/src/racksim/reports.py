"""Pivot sweep results into per-figure tables and render them to image files.

Each table is long-format (one row per plotted point) so it can be fed to any
plotting tool directly; the built-in renderer draws the obvious line chart with
95% error bars next to every table it writes.

Tables produced, mirroring the experiment families:
  f1    completion time vs load, all schedulers, exact estimates
  f2    the two workload-aware schedulers only, high loads, exact estimates
  f3a-f completion time vs load per error level, estimates biased low
  f4    sensitivity vs error level, estimates biased low
  f5a-f like f3 with estimates biased high
  f6    like f4 with estimates biased high
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass
from typing import Optional

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .harness import CellStats, SweepResult, aggregate, sensitivity

_PANEL_LETTERS = {0.05: "a", 0.10: "b", 0.15: "c", 0.20: "d", 0.25: "e", 0.30: "f"}
_COMPARED_PAIR = ("balanced_pandas", "jsq_maxweight")


@dataclass
class FigureTable:
    figure_id: str
    title: str
    x_column: str
    series_column: str
    y_column: str
    columns: tuple[str, ...]
    rows: list[tuple]

    def write_csv(self, path: str) -> None:
        with open(path, "w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(self.columns)
            for row in self.rows:
                writer.writerow([
                    repr(v) if isinstance(v, float) else ("" if v is None else v)
                    for v in row
                ])


def _pick_mode(result: SweepResult) -> Optional[str]:
    modes = sorted({r.mode for r in result.rows if r.epsilon > 0})
    if not modes:
        return None
    if len(modes) == 1:
        return modes[0]
    if "independent" in modes:
        return "independent"
    raise ValueError(f"ambiguous perturbation modes in results: {modes}")


def _completion_table(
    figure_id: str,
    title: str,
    cells: list[CellStats],
) -> FigureTable:
    rows = [
        (c.load, c.scheduler, c.mean, c.ci95_half_width, c.n, c.any_unstable)
        for c in sorted(cells, key=lambda c: (c.load, c.scheduler))
    ]
    return FigureTable(
        figure_id=figure_id,
        title=title,
        x_column="load",
        series_column="scheduler",
        y_column="mean_completion_time",
        columns=("load", "scheduler", "mean_completion_time",
                 "ci95_half_width", "n", "any_unstable"),
        rows=rows,
    )


def _panel_label(epsilon: float) -> str:
    letter = _PANEL_LETTERS.get(round(epsilon, 2))
    return letter if letter is not None else f"eps{epsilon:g}"


def build_figure_tables(result: SweepResult) -> dict[str, FigureTable]:
    """All figure tables the result's rows can support, keyed f1, f2, f3a, ..."""
    if not result.rows:
        raise ValueError("no sweep rows to compare")
    mode = _pick_mode(result)
    tables: dict[str, FigureTable] = {}

    baseline_rows = [r for r in result.rows if r.epsilon == 0]
    if baseline_rows:
        # Zero-error estimates are identical whatever direction/mode labels the
        # cell carried, so baseline cells pool across them.
        pooled = SweepResult([
            type(r)(**{**r.__dict__, "direction": "-", "mode": "-"})
            for r in baseline_rows
        ])
        cells = aggregate(pooled)
        tables["f1"] = _completion_table(
            "f1", "Completion time vs load, exact rate estimates", cells)
        f2_cells = [c for c in cells
                    if c.scheduler in _COMPARED_PAIR and c.load >= 0.9]
        if f2_cells:
            tables["f2"] = _completion_table(
                "f2", "High-load completion time, exact rate estimates", f2_cells)

    for direction, fig_curves, fig_sens in (("lower", "f3", "f4"), ("higher", "f5", "f6")):
        directional = [r for r in result.rows
                       if r.epsilon > 0 and r.direction == direction and r.mode == mode]
        if not directional:
            continue
        cells = aggregate(SweepResult(directional))
        for epsilon in sorted({c.epsilon for c in cells}):
            panel = [c for c in cells if c.epsilon == epsilon]
            fig_id = f"{fig_curves}{_panel_label(epsilon)}"
            tables[fig_id] = _completion_table(
                fig_id,
                f"Completion time vs load, estimates {epsilon:.0%} {direction}",
                panel,
            )
        try:
            sens = sensitivity(SweepResult(directional + baseline_rows))
        except ValueError:
            sens = []
        sens = [s for s in sens if s.scheduler in _COMPARED_PAIR]
        if sens:
            rows = [
                (s.epsilon, s.scheduler, s.load, s.degradation,
                 s.ci95_half_width, s.n)
                for s in sorted(sens, key=lambda s: (s.epsilon, s.scheduler, s.load))
            ]
            tables[fig_sens] = FigureTable(
                figure_id=fig_sens,
                title=f"Sensitivity to rate-estimation error, estimates {direction}",
                x_column="epsilon",
                series_column="scheduler",
                y_column="sensitivity",
                columns=("epsilon", "scheduler", "load", "sensitivity",
                         "ci95_half_width", "n"),
                rows=rows,
            )
    return tables


def render_figure(table: FigureTable, path: str) -> None:
    """Line chart of the table: one series per scheduler (and load, if present)."""
    columns = {name: i for i, name in enumerate(table.columns)}
    x_i = columns[table.x_column]
    s_i = columns[table.series_column]
    y_i = columns[table.y_column]
    ci_i = columns.get("ci95_half_width")
    load_i = columns.get("load") if table.x_column != "load" else None

    series: dict[object, list[tuple]] = {}
    for row in table.rows:
        key = row[s_i] if load_i is None else (row[s_i], row[load_i])
        series.setdefault(key, []).append(row)

    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    for key in sorted(series, key=str):
        rows = sorted(series[key], key=lambda r: r[x_i])
        xs = [r[x_i] for r in rows]
        ys = [r[y_i] for r in rows]
        errs = None
        if ci_i is not None:
            errs = [r[ci_i] if isinstance(r[ci_i], (int, float)) else 0.0 for r in rows]
            if all(not e for e in errs):
                errs = None
        label = key if load_i is None else f"{key[0]} @ load {key[1]:g}"
        ax.errorbar(xs, ys, yerr=errs, marker="o", capsize=3, label=str(label))
    ax.set_xlabel(table.x_column)
    ax.set_ylabel(table.y_column)
    ax.set_title(table.title)
    if any(isinstance(r[y_i], float) and r[y_i] > 0 for r in table.rows) and \
            table.y_column == "mean_completion_time":
        finite = [r[y_i] for r in table.rows if isinstance(r[y_i], float) and math.isfinite(r[y_i])]
        if finite and max(finite) / max(min(finite), 1e-9) > 50:
            ax.set_yscale("log")
    ax.legend(fontsize=8)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def write_report(tables: dict[str, FigureTable], out_dir: str) -> list[str]:
    """Write every table as CSV plus its rendered PNG; returns the paths written."""
    os.makedirs(out_dir, exist_ok=True)
    written = []
    for fig_id in sorted(tables):
        table = tables[fig_id]
        csv_path = os.path.join(out_dir, f"{fig_id}.csv")
        png_path = os.path.join(out_dir, f"{fig_id}.png")
        table.write_csv(csv_path)
        render_figure(table, png_path)
        written.extend([csv_path, png_path])
    return written
