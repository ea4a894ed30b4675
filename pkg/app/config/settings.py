"""
Configuración global de strongcap.

Dos niveles:
- `AppSettings`: variables de entorno (prefijo STRONGCAP_) y `.env`.
- `RunConfig`: archivo YAML único con una sección por módulo.

Precedencia: flags de la CLI > archivo de configuración > valores por defecto.
"""

from pathlib import Path
from typing import Any, Dict, Mapping, Optional

import yaml
from pydantic import BaseModel, ValidationError as PydanticValidationError
from pydantic_settings import BaseSettings, SettingsConfigDict

from app.domain.audio import AudioConfig
from app.domain.captions import CaptionConfig
from app.domain.detection import EvalConfig
from app.domain.embeddings import ModelConfig
from app.domain.exceptions import ConfigError
from app.domain.synth import SynthSpec
from app.domain.training import TrainConfig


class AppSettings(BaseSettings):
    model_config = SettingsConfigDict(env_prefix="STRONGCAP_", env_file=".env", extra="ignore")

    LOG_LEVEL: str = "INFO"
    LOG_DIR: str = "logs"
    THREADS: int = 1


class RunConfig(BaseModel):
    audio: AudioConfig = AudioConfig()
    model: ModelConfig = ModelConfig()
    train: TrainConfig = TrainConfig()
    eval: EvalConfig = EvalConfig()
    captions: CaptionConfig = CaptionConfig()
    synth: SynthSpec = SynthSpec()


def merge_overrides(base: Dict[str, Any], overrides: Mapping[str, Any]) -> Dict[str, Any]:
    """Fusión recursiva; los valores None de `overrides` no pisan nada"""
    merged = dict(base)
    for key, value in overrides.items():
        if value is None:
            continue
        if isinstance(value, Mapping) and isinstance(merged.get(key), Mapping):
            merged[key] = merge_overrides(merged[key], value)
        else:
            merged[key] = value
    return merged


def load_run_config(path: Optional[Path] = None,
                    overrides: Optional[Mapping[str, Any]] = None) -> RunConfig:
    """Carga el YAML (si existe) y aplica los overrides de la CLI"""
    data: Dict[str, Any] = {}
    if path is not None:
        try:
            with open(path, "r", encoding="utf-8") as f:
                data = yaml.safe_load(f) or {}
        except (OSError, yaml.YAMLError) as e:
            raise ConfigError(f"No se pudo leer la configuración {path}: {e}") from e
        if not isinstance(data, dict):
            raise ConfigError(f"La configuración {path} debe ser un mapeo YAML")
    data = merge_overrides(data, overrides or {})
    try:
        return RunConfig.model_validate(data)
    except PydanticValidationError as e:
        raise ConfigError(f"Configuración inválida: {e}") from e
