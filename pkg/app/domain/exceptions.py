"""
Excepciones del dominio de strongcap.

Todas derivan de `StrongCapError` para que la CLI pueda traducirlas a un
código de salida distinto de cero sin capturar errores de programación.
"""

from typing import Any, List, Optional


class StrongCapError(Exception):
    """Excepción base del proyecto"""


class ValidationError(StrongCapError):
    """Excepción personalizada para errores de validación"""

    def __init__(
        self,
        message: str,
        field: Optional[str] = None,
        value: Any = None,
        record_index: Optional[int] = None,
        clip_id: Optional[str] = None,
    ):
        super().__init__(message)
        self.field = field
        self.value = value
        self.record_index = record_index
        self.clip_id = clip_id
        self.message = message

    def __str__(self) -> str:
        location = []
        if self.record_index is not None:
            location.append(f"registro {self.record_index}")
        if self.clip_id:
            location.append(f"clip {self.clip_id}")
        if self.field:
            location.append(f"campo {self.field}")
        prefix = f"[{', '.join(location)}] " if location else ""
        return f"{prefix}{self.message}"


class ManifestParseError(StrongCapError):
    """Registro del manifiesto que no se puede parsear"""

    def __init__(self, message: str, record_index: int):
        super().__init__(f"[registro {record_index}] {message}")
        self.record_index = record_index


class ManifestValidationError(StrongCapError):
    """Agrupa todas las violaciones de invariantes encontradas en un manifiesto"""

    def __init__(self, issues: List[ValidationError]):
        self.issues = issues
        summary = "; ".join(str(issue) for issue in issues[:5])
        if len(issues) > 5:
            summary += f" (+{len(issues) - 5} más)"
        super().__init__(f"{len(issues)} errores de validación: {summary}")


class ShapeMismatchError(StrongCapError, ValueError):
    """Dimensiones incompatibles entre parámetros y entradas"""


class UnsupportedSampleRateError(StrongCapError, ValueError):
    """Frecuencia de muestreo fuera del rango soportado"""


class EmptyInputError(StrongCapError, ValueError):
    """Entrada vacía donde se requiere al menos un elemento"""


class NonFiniteGradientError(StrongCapError, ValueError):
    """Gradiente con NaN o Inf"""


class InvalidBatchError(StrongCapError, ValueError):
    """Lote contrastivo con menos de dos clips"""


class TrainingError(StrongCapError):
    """Configuración o datos que impiden entrenar"""


class MetricUndefinedError(StrongCapError, ValueError):
    """La métrica no está definida para la entrada dada"""


class CompletionError(StrongCapError):
    """Fallo del cliente de completado tras agotar los reintentos"""


class ConfigError(StrongCapError):
    """Archivo de configuración inválido"""
