"""
Archivos tabulares de eventos y descripciones de clase, y el log CSV de métricas.

Eventos: `clip_id<TAB>onset_s<TAB>offset_s<TAB>class`, con o sin cabecera.
Descripciones: `class_id<TAB>frase`, una por línea, sin cabecera.
"""

import csv
import logging
from pathlib import Path
from typing import Dict, Mapping

import pandas as pd

from app.domain.detection import Event, EventList
from app.domain.exceptions import ManifestParseError
from app.domain.repositories import MetricSink
from app.infrastructure.error_handlers import SafeOperations

logger = logging.getLogger(__name__)

EVENT_COLUMNS = ["clip_id", "onset_s", "offset_s", "class"]


def read_events(path: Path, role: str = "ground_truth") -> EventList:
    try:
        frame = pd.read_csv(path, sep="\t", header=None, names=EVENT_COLUMNS, dtype=str,
                            quoting=csv.QUOTE_NONE, keep_default_na=False)
    except pd.errors.EmptyDataError:
        return EventList((), role=role)
    if len(frame) and frame.iloc[0]["onset_s"] == "onset_s":
        frame = frame.iloc[1:]
    events = []
    for index, (clip_id, onset, offset, label) in enumerate(frame.itertuples(index=False, name=None)):
        try:
            events.append(Event(clip_id, label, float(onset), float(offset)))
        except ValueError as e:
            raise ManifestParseError(f"evento inválido en {path}: {e}", record_index=index) from e
    return EventList(tuple(events), role=role)


def write_events(path: Path, events: EventList) -> None:
    frame = pd.DataFrame(
        [(e.clip_id, f"{e.onset:.3f}", f"{e.offset:.3f}", e.label) for e in events.events],
        columns=EVENT_COLUMNS,
    )
    content = frame.to_csv(sep="\t", index=False, lineterminator="\n", quoting=csv.QUOTE_NONE)
    if not SafeOperations.safe_file_write(str(path), content, logger=logger):
        raise OSError(f"no se pudo escribir {path}")


def read_class_descriptions(path: Path) -> Dict[str, str]:
    frame = pd.read_csv(path, sep="\t", header=None, names=["class_id", "description"], dtype=str,
                        quoting=csv.QUOTE_NONE, keep_default_na=False)
    descriptions = {}
    for index, row in enumerate(frame.itertuples(index=False)):
        if not row.class_id or not row.description.strip():
            raise ManifestParseError(f"descripción vacía en {path}", record_index=index)
        descriptions[row.class_id] = row.description.strip()
    return descriptions


def write_class_descriptions(path: Path, descriptions: Mapping[str, str]) -> None:
    content = "".join(f"{class_id}\t{text}\n" for class_id, text in descriptions.items())
    if not SafeOperations.safe_file_write(str(path), content, logger=logger):
        raise OSError(f"no se pudo escribir {path}")


class CsvMetricLog(MetricSink):
    """Log de entrenamiento de sólo anexado: step,epoch,lr,loss"""

    HEADER = ("step", "epoch", "lr", "loss")

    def __init__(self, path: Path, truncate: bool = True):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        if truncate or not self.path.exists():
            with open(self.path, "w", encoding="utf-8", newline="") as f:
                csv.writer(f, lineterminator="\n").writerow(self.HEADER)

    def append(self, step: int, epoch: int, lr: float, loss: float) -> None:
        with open(self.path, "a", encoding="utf-8", newline="") as f:
            csv.writer(f, lineterminator="\n").writerow((step, epoch, repr(float(lr)), repr(float(loss))))

    def read(self) -> pd.DataFrame:
        return pd.read_csv(self.path)
