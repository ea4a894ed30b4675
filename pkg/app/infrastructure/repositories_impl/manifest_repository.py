"""
Manifiesto JSONL: un clip por línea.

    {"clip_id": ..., "audio_path": ..., "duration_s": 20.848, "subclass": ...,
     "weak_caption": ..., "regions": [{"onset_s": 0.000, "offset_s": 2.605,
     "text": ..., "annotator": ...}]}

Los segundos se escriben con al menos 3 decimales. También viven aquí los
archivos de split (JSON) y de ontología (YAML).
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, List

import numpy as np
import yaml
from pydantic import ValidationError as PydanticValidationError

from app.domain.annotations import AnnotatedClip, DatasetSplit, Ontology, OntologyLeaf
from app.domain.exceptions import ConfigError, ManifestParseError, ManifestValidationError, ValidationError
from app.domain.repositories import ManifestRepository
from app.infrastructure.error_handlers import SafeOperations

logger = logging.getLogger(__name__)

_SECONDS_TOKEN = "\u0000seconds:{}\u0000"


def format_seconds(value: float) -> str:
    """Decimal más corto que reproduce el valor, con al menos 3 decimales"""
    return np.format_float_positional(float(value), unique=True, trim="k", min_digits=3)


class JsonlManifestRepository(ManifestRepository):
    def load(self, path: Path, processed: bool = True) -> List[AnnotatedClip]:
        try:
            with open(path, "r", encoding="utf-8") as f:
                lines = [line for line in f.read().splitlines() if line.strip()]
        except OSError as e:
            raise ManifestParseError(f"no se pudo leer {path}: {e}", record_index=-1) from e

        clips, issues = [], []
        for index, line in enumerate(lines):
            record = self._parse(line, index)
            try:
                clips.append(AnnotatedClip.model_validate(record, context={"processed": processed}))
            except PydanticValidationError as e:
                for err in e.errors():
                    issues.append(ValidationError(
                        err["msg"], field=".".join(str(p) for p in err["loc"]) or None,
                        record_index=index, clip_id=record.get("clip_id"),
                    ))

        if issues:
            raise ManifestValidationError(issues)
        logger.info("✅ Manifiesto cargado: %s clips desde %s", len(clips), path)
        return clips

    @staticmethod
    def _parse(line: str, index: int) -> Dict[str, Any]:
        try:
            data = json.loads(line)
        except json.JSONDecodeError as e:
            raise ManifestParseError(f"JSON inválido: {e}", record_index=index) from e
        if not isinstance(data, dict):
            raise ManifestParseError("el registro no es un objeto", record_index=index)
        for key in ("clip_id", "duration_s"):
            if key not in data:
                raise ManifestParseError(f"falta el campo '{key}'", record_index=index)
        regions = data.get("regions") or []
        if not isinstance(regions, list):
            raise ManifestParseError("'regions' debe ser una lista", record_index=index)

        parsed_regions = []
        for k, region in enumerate(regions):
            if not isinstance(region, dict) or not {"onset_s", "offset_s", "text"} <= set(region):
                raise ManifestParseError(f"región {k} sin onset_s/offset_s/text", record_index=index)
            parsed_regions.append({
                "onset": region["onset_s"],
                "offset": region["offset_s"],
                "text": region["text"],
                "annotator_id": region.get("annotator"),
                "original_text": region.get("original_text"),
                "uncleaned": region.get("uncleaned", False),
            })
        return {
            "clip_id": data["clip_id"],
            "duration": data["duration_s"],
            "subclass": data.get("subclass"),
            "audio_path": data.get("audio_path"),
            "weak_caption": data.get("weak_caption"),
            "regions": parsed_regions,
        }

    def save(self, path: Path, clips: List[AnnotatedClip]) -> None:
        lines = [self.dumps(clip) for clip in clips]
        content = "\n".join(lines) + ("\n" if lines else "")
        if not SafeOperations.safe_file_write(str(path), content, logger=logger):
            raise OSError(f"no se pudo escribir el manifiesto {path}")

    @staticmethod
    def dumps(clip: AnnotatedClip) -> str:
        seconds: List[float] = []

        def token(value: float) -> str:
            seconds.append(value)
            return _SECONDS_TOKEN.format(len(seconds) - 1)

        regions = []
        for region in clip.regions:
            item = {"onset_s": token(region.onset), "offset_s": token(region.offset), "text": region.text,
                    "annotator": region.annotator_id}
            if region.original_text is not None:
                item["original_text"] = region.original_text
            if region.uncleaned:
                item["uncleaned"] = True
            regions.append(item)
        record = {
            "clip_id": clip.clip_id,
            "audio_path": clip.audio_path,
            "duration_s": token(clip.duration),
            "subclass": clip.subclass,
            "weak_caption": clip.weak_caption,
            "regions": regions,
        }
        text = json.dumps(record, ensure_ascii=False)
        for i, value in enumerate(seconds):
            text = text.replace(json.dumps(_SECONDS_TOKEN.format(i)), format_seconds(value), 1)
        return text


def save_split(path: Path, split: DatasetSplit) -> None:
    content = {"train": sorted(split.train_ids), "test": sorted(split.test_ids),
               "warnings": list(split.warnings)}
    if not SafeOperations.safe_file_write(str(path), content, logger=logger):
        raise OSError(f"no se pudo escribir el split {path}")


def load_split(path: Path) -> DatasetSplit:
    data = SafeOperations.safe_file_read(str(path), logger=logger)
    if not isinstance(data, dict) or "train" not in data or "test" not in data:
        raise ConfigError(f"archivo de split inválido: {path}")
    return DatasetSplit(train_ids=frozenset(data["train"]), test_ids=frozenset(data["test"]),
                        warnings=tuple(data.get("warnings", ())))


def load_ontology(path: Path) -> Ontology:
    """
    YAML con `superclasses: [..]` y `subclasses` como mapeo hoja → superclase
    o como lista de {name, parent}.
    """
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = yaml.safe_load(f) or {}
    except (OSError, yaml.YAMLError) as e:
        raise ConfigError(f"No se pudo leer la ontología {path}: {e}") from e
    leaves = data.get("subclasses", {})
    if isinstance(leaves, dict):
        leaves = [{"name": name, "parent": parent} for name, parent in leaves.items()]
    try:
        return Ontology(superclasses=tuple(data.get("superclasses", ())),
                        subclasses=tuple(OntologyLeaf(**leaf) for leaf in leaves))
    except (PydanticValidationError, TypeError) as e:
        raise ConfigError(f"Ontología inválida en {path}: {e}") from e


def save_ontology(path: Path, ontology: Ontology) -> None:
    content = yaml.safe_dump({
        "superclasses": list(ontology.superclasses),
        "subclasses": {leaf.name: leaf.parent for leaf in ontology.subclasses},
    }, sort_keys=False, allow_unicode=True)
    if not SafeOperations.safe_file_write(str(path), content, logger=logger):
        raise OSError(f"no se pudo escribir la ontología {path}")
