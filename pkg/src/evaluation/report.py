"""CSV and console output for evaluation results."""
import csv
import logging
import pathlib
from typing import Dict, Sequence, Tuple

from rich.console import Console
from rich.table import Table

from src.app.schemas import ComparisonRow, EvalReport

logger = logging.getLogger(__name__)


def write_eval_report(report: EvalReport, out_dir: pathlib.Path, prefix: str = "") -> Tuple[pathlib.Path, pathlib.Path]:
    """Write ``summary.csv`` (one row of scalar metrics) and ``curves.csv`` (threshold, dice, iou)."""
    out_dir = pathlib.Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    summary = out_dir / f"{prefix}summary.csv"
    curves = out_dir / f"{prefix}curves.csv"
    best_dice, best_iou = report.best_dice, report.best_iou
    with summary.open("w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["auroc", "aupro", "fpr_limit", "best_dice", "best_dice_threshold", "best_iou", "best_iou_threshold", "n_images"])
        writer.writerow(
            [
                repr(report.auroc),
                repr(report.aupro),
                repr(report.fpr_limit),
                repr(best_dice.value) if best_dice else "",
                repr(best_dice.threshold) if best_dice else "",
                repr(best_iou.value) if best_iou else "",
                repr(best_iou.threshold) if best_iou else "",
                report.n_images,
            ]
        )
    with curves.open("w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["threshold", "dice", "iou"])
        for d, u in zip(report.dice_curve, report.iou_curve):
            writer.writerow([repr(d.threshold), repr(d.value), repr(u.value)])
    logger.info(f"evaluation report written to {out_dir}")
    return summary, curves


def write_aggregate_csv(stats: Dict[str, Tuple[float, float]], n_seeds: int, path: pathlib.Path) -> pathlib.Path:
    path = pathlib.Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["metric", "mean", "std", "n_seeds"])
        for name, (mean, std) in stats.items():
            writer.writerow([name, repr(mean), repr(std), n_seeds])
    return path


def write_comparison_csv(rows: Sequence[ComparisonRow], path: pathlib.Path) -> pathlib.Path:
    path = pathlib.Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fields = list(ComparisonRow.model_fields)
    with path.open("w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=["row"] + fields)
        writer.writeheader()
        for row in rows:
            data = row.model_dump()
            label = row.label or ("seed" if row.seed is not None else "aggregate")
            writer.writerow({"row": label, **{k: "" if v is None else (repr(v) if isinstance(v, float) else v) for k, v in data.items()}})
    return path


def format_mean_std(mean: float, std: float) -> str:
    return f"{mean:.3f} ± {std:.3f}"


def summary_table(stats: Dict[str, Tuple[float, float]], title: str = "Evaluation") -> Table:
    table = Table(title=title)
    table.add_column("metric")
    table.add_column("mean ± std", justify="right")
    for name, (mean, std) in stats.items():
        table.add_row(name, format_mean_std(mean, std))
    return table


def comparison_table(rows: Sequence[ComparisonRow]) -> Table:
    table = Table(title="Quantum vs classical")
    for column in ("row", "quantum AUROC", "quantum AUPRO", "classical AUROC", "classical AUPRO", "q params", "c params"):
        table.add_column(column, justify="right")
    for row in rows:
        table.add_row(
            row.label or str(row.seed),
            f"{row.quantum_auroc:.3f}",
            f"{row.quantum_aupro:.3f}",
            f"{row.classical_auroc:.3f}",
            f"{row.classical_aupro:.3f}",
            str(row.quantum_parameters),
            str(row.classical_parameters),
        )
    return table


def print_table(table: Table) -> None:
    Console().print(table)
