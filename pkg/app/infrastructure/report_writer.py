"""
Informes de métricas y estadísticas: JSON estructurado más una tabla de texto
renderizada con rich.
"""

import io
import logging
from pathlib import Path
from typing import Iterable, Tuple

from pydantic import BaseModel
from rich.console import Console
from rich.table import Table

from app.domain.annotations import StatsReport
from app.domain.detection import MetricReport, RetrievalResult
from app.infrastructure.error_handlers import SafeOperations

logger = logging.getLogger(__name__)


def _render(table: Table) -> str:
    console = Console(record=True, width=100, file=io.StringIO(), color_system=None)
    console.print(table)
    return console.export_text()


def _rows_table(title: str, rows: Iterable[Tuple[str, str]]) -> Table:
    table = Table(title=title)
    table.add_column("métrica")
    table.add_column("valor", justify="right")
    for name, value in rows:
        table.add_row(name, value)
    return table


def metric_table(report: MetricReport) -> str:
    sections = []
    if report.pauroc is not None:
        rows = [(label, f"{value:.4f}") for label, value in report.pauroc.per_class.items()]
        rows.append(("macro", f"{report.pauroc.macro:.4f}"))
        rows.extend((f"{label} (excluida)", "-") for label in report.pauroc.excluded)
        sections.append(_render(_rows_table(f"pAUROC por segmentos (FPR ≤ {report.max_fpr})", rows)))
    if report.psds1 is not None:
        sections.append(_render(_rows_table("PSDS1", [("psds1", f"{report.psds1:.4f}")])))
    if report.retrieval is not None:
        sections.append(_render(_rows_table("Recuperación", retrieval_rows(report.retrieval))))
    grid = [
        ("umbrales", str(report.threshold_count)), ("segmento (s)", str(report.segment_s)),
        ("dtc", str(report.dtc)), ("gtc", str(report.gtc)), ("max eFPR (/h)", str(report.max_efpr)),
        ("penalización varianza", str(report.variance_penalty)), ("clips", str(report.clip_count)),
    ]
    sections.append(_render(_rows_table("Parámetros", grid)))
    return "\n".join(sections)


def retrieval_rows(result: RetrievalResult):
    return [("mAP@10", f"{result.map_at_10:.4f}"), ("R@1", f"{result.r_at_1:.4f}"),
            ("R@5", f"{result.r_at_5:.4f}"), ("R@10", f"{result.r_at_10:.4f}")]


def stats_table(report: StatsReport) -> str:
    rows = [(name, f"{value:.4f}" if isinstance(value, float) else str(value))
            for name, value in report.model_dump().items() if name != "duration_histogram"]
    histogram = Table(title="Duración de regiones (bins de 1 s)")
    histogram.add_column("bin")
    histogram.add_column("regiones", justify="right")
    for index, count in enumerate(report.duration_histogram):
        label = f"[{index}, {index + 1})" if index < len(report.duration_histogram) - 1 else f">= {index}"
        histogram.add_row(label, str(count))
    return _render(_rows_table("Estadísticas del corpus", rows)) + "\n" + _render(histogram)


def write_report(out_dir: Path, stem: str, report: BaseModel, table: str) -> Tuple[Path, Path]:
    """Escribe `<stem>.json` y `<stem>.txt` en `out_dir`"""
    out_dir = Path(out_dir)
    json_path, text_path = out_dir / f"{stem}.json", out_dir / f"{stem}.txt"
    ok = SafeOperations.safe_file_write(str(json_path), report.model_dump(mode="json"), logger=logger)
    ok = SafeOperations.safe_file_write(str(text_path), table, logger=logger) and ok
    if not ok:
        raise OSError(f"no se pudo escribir el informe en {out_dir}")
    return json_path, text_path
