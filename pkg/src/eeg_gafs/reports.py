"""Fitness and performance tables for a finished run: aligned text and Excel."""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, List, Optional, Sequence

from openpyxl import Workbook
from openpyxl.styles import Alignment, Font, PatternFill
from openpyxl.utils import get_column_letter

from .artifacts import RunDirectory
from .errors import InputError, MissingArtifactError
from .ga import summarize_trace

logger = logging.getLogger(__name__)

FITNESS_HEADERS = ["strategy", "fitness", "mean", "std", "max", "final", "N_sf", "N_if", "generations", "minutes"]


@dataclass
class Table:
    title: str
    headers: List[str]
    rows: List[List[Any]] = field(default_factory=list)


@dataclass
class ReportTables:
    run_name: str
    tables: List[Table]

    def get(self, title: str) -> Optional[Table]:
        return next((t for t in self.tables if t.title == title), None)

    def to_text(self) -> str:
        blocks = [f"Run: {self.run_name}"]
        blocks.extend(format_table(t) for t in self.tables)
        return "\n\n".join(blocks) + "\n"


def _cell(value: Any) -> str:
    if value is None:
        return "-"
    if isinstance(value, float):
        return f"{value:.4f}"
    return str(value)


def format_table(table: Table) -> str:
    """Column-aligned plain text; first column left-aligned, the rest right-aligned."""
    cells = [[_cell(v) for v in row] for row in table.rows]
    widths = [len(h) for h in table.headers]
    for row in cells:
        widths = [max(w, len(c)) for w, c in zip(widths, row)]

    def line(values: Sequence[str]) -> str:
        parts = [values[0].ljust(widths[0])] + [v.rjust(w) for v, w in zip(values[1:], widths[1:])]
        return "  ".join(parts).rstrip()

    rule = "-" * (sum(widths) + 2 * (len(widths) - 1))
    return "\n".join([table.title, rule, line(table.headers), rule] + [line(r) for r in cells] + [rule])


def _fitness_table(run: RunDirectory, strategy: str) -> Optional[Table]:
    table = Table(title="Fitness summary", headers=list(FITNESS_HEADERS))
    if strategy == "GAFS":
        ga = run.read_json("ga_report.json")
        if not ga["trace"]:
            raise InputError(f"run {run.path.name}: ga_report.json has an empty fitness trace")
        summary = summarize_trace(ga["trace"])
        # N_sf belongs to the chromosome behind `final`, not the global best
        table.rows.append([
            "GAFS",
            ga["config"].get("fitness_family"),
            summary.mean,
            summary.std,
            summary.max,
            summary.final,
            len(ga["final_chromosome"]),
            ga["n_features"],
            ga["generations_run"],
            ga["elapsed_minutes"],
        ])
    elif run.artifact("benchmark_fitness.json").exists():
        bench = run.read_json("benchmark_fitness.json")
        table.rows.append([
            strategy, bench["fitness_family"], None, None, None, bench["fitness"],
            bench["n_selected"], bench["n_features"], None, None,
        ])
    return table if table.rows else None


def _performance_table(run: RunDirectory) -> Table:
    if run.artifact("classification_report.json").exists():
        report = run.read_json("classification_report.json")
        table = Table(title="Classification performance", headers=["metric", "value"])
        for label in report["labels"]:
            table.rows.append([f"Acc({label})", report["per_class_accuracy"][label]])
        table.rows.append(["gAcc", report["global_accuracy"]])
        table.rows.append(["waF1", report["weighted_f1"]])
        table.rows.append(["N_sf", report["n_selected"]])
        table.rows.append(["folds", report["folds_used"]])
        return table
    if run.artifact("clustering_report.json").exists():
        report = run.read_json("clustering_report.json")
        table = Table(title="Clustering performance", headers=["metric", "value"])
        table.rows.append(["avg silhouette", report["avg_silhouette"]])
        table.rows.append(["k", report["k"]])
        table.rows.append(["N_sf", report["n_selected"]])
        table.rows.append(["optimal k (sweep)", report["sweep"]["best_k"]])
        for k, score in report["sweep"]["scores"]:
            table.rows.append([f"silhouette k={k}", score])
        return table
    raise MissingArtifactError(
        f"run {run.path.name} has neither classification_report.json nor clustering_report.json"
    )


def report_tables(run_dir: Path) -> ReportTables:
    """
    Build the fitness and performance tables of a run directory.

    Raises:
        MissingArtifactError: Manifest or a required report is absent
    """
    run = run_dir if isinstance(run_dir, RunDirectory) else RunDirectory.open(run_dir)
    strategy = run.manifest["config"]["strategy"]
    tables = []
    fitness = _fitness_table(run, strategy)
    if fitness is not None:
        tables.append(fitness)
    tables.append(_performance_table(run))
    return ReportTables(run_name=run.manifest["name"], tables=tables)


def _style_header(ws, widths: List[int]) -> None:
    header_font = Font(bold=True, color="FFFFFF")
    header_fill = PatternFill(start_color="366092", end_color="366092", fill_type="solid")
    header_alignment = Alignment(horizontal="center", vertical="center")
    for cell in ws[1]:
        cell.font = header_font
        cell.fill = header_fill
        cell.alignment = header_alignment
    for i, width in enumerate(widths, start=1):
        ws.column_dimensions[get_column_letter(i)].width = width


def write_xlsx(tables: ReportTables, path: Path) -> Path:
    """One worksheet per table with a styled header row."""
    wb = Workbook()
    wb.remove(wb.active)
    for table in tables.tables:
        ws = wb.create_sheet(title=table.title[:31])
        ws.append(table.headers)
        for row in table.rows:
            ws.append(row)
        widths = [max(12, len(h) + 2) for h in table.headers]
        widths[0] = max(widths[0], max((len(str(r[0])) + 2 for r in table.rows), default=0))
        _style_header(ws, widths)
    try:
        wb.save(path)
    except IOError as e:
        logger.error(f"Failed to save Excel file: {e}")
        raise
    logger.info(f"Saved Excel report: {path}")
    return path


def write_reports(run: RunDirectory, formats: Sequence[str]) -> ReportTables:
    """Write report.txt and/or report.xlsx into the run directory."""
    tables = report_tables(run)
    if "text" in formats:
        run.write_text("report.txt", tables.to_text())
    if "xlsx" in formats:
        write_xlsx(tables, run.artifact("report.xlsx"))
        run.register("report.xlsx")
    return tables
