import json
import logging
import os
import random
import time
from enum import Enum
from functools import wraps
from typing import Any, Callable, Dict, Optional

import yaml


class ErrorType(Enum):
    """Categorías de incidentes no fatales que se cuentan en lugar de propagarse"""
    NETWORK_ERROR = "network_error"
    NUMERICAL_ERROR = "numerical_error"


class RetryConfig:
    """Configuración para reintentos con backoff exponencial"""

    def __init__(self,
                 max_retries: int = 3,
                 base_delay: float = 1.0,
                 max_delay: float = 60.0,
                 backoff_factor: float = 2.0,
                 jitter: bool = True):
        self.max_retries = max_retries
        self.base_delay = base_delay
        self.max_delay = max_delay
        self.backoff_factor = backoff_factor
        self.jitter = jitter

    def delay_for(self, attempt: int) -> float:
        delay = min(self.base_delay * (self.backoff_factor ** attempt), self.max_delay)
        if self.jitter:
            delay *= (0.5 + random.random() * 0.5)
        return delay


def retry_with_backoff(config: RetryConfig = None,
                       retry_on: tuple = (Exception,),
                       logger: logging.Logger = None,
                       sleep: Callable[[float], None] = time.sleep):
    """
    Decorador para reintentos con backoff exponencial

    Args:
        config: Configuración de reintentos
        retry_on: Tupla de excepciones en las que reintentar
        logger: Logger para registrar reintentos
        sleep: Función de espera (inyectable en tests)
    """
    if config is None:
        config = RetryConfig()

    def decorator(func: Callable):
        @wraps(func)
        def wrapper(*args, **kwargs):
            last_exception = None

            for attempt in range(config.max_retries + 1):
                try:
                    return func(*args, **kwargs)
                except retry_on as e:
                    last_exception = e

                    if attempt == config.max_retries:
                        if logger:
                            logger.error("❌ Función %s falló después de %s reintentos: %s",
                                         func.__name__, config.max_retries, e)
                        raise

                    delay = config.delay_for(attempt)
                    if logger:
                        logger.warning("⚠️ Intento %s/%s falló para %s: %s. Reintentando en %.2fs",
                                       attempt + 1, config.max_retries + 1, func.__name__, e, delay)
                    sleep(delay)

            raise last_exception

        return wrapper
    return decorator


class ErrorHandler:
    """Manejador centralizado de errores"""

    def __init__(self, logger: logging.Logger = None, max_repeats: int = 10):
        self.logger = logger or logging.getLogger(__name__)
        self.max_repeats = max_repeats
        self.error_counts: Dict[str, int] = {}

    def handle_error(self,
                     error: Exception,
                     error_type: ErrorType,
                     context: str = "",
                     data: Any = None,
                     fatal: bool = False) -> bool:
        """
        Registra un incidente bajo la clave `tipo:contexto`.

        Devuelve False si el error es fatal o si la misma clave supera
        `max_repeats`; el llamador decide entonces si aborta.
        """
        error_key = f"{error_type.value}:{context}"
        self.error_counts[error_key] = self.error_counts.get(error_key, 0) + 1

        error_msg = f"{'🚨 FATAL' if fatal else '❌ ERROR'} [{error_type.value}] {context}: {error}"
        if data:
            error_msg += f" | Datos: {str(data)[:200]}..."

        if fatal:
            self.logger.critical(error_msg)
            return False

        self.logger.error(error_msg)
        if self.error_counts[error_key] > self.max_repeats:
            self.logger.critical("🚨 Demasiados errores del tipo %s (%s). Deteniendo.",
                                 error_key, self.error_counts[error_key])
            return False
        return True

    def total_errors(self) -> int:
        return sum(self.error_counts.values())

    def get_error_summary(self) -> Dict[str, int]:
        """Retorna resumen de errores ocurridos"""
        return self.error_counts.copy()


class SafeOperations:
    """Operaciones seguras de archivo: escritura atómica vía archivo temporal"""

    @staticmethod
    def safe_file_write(file_path: str, content: Any, encoding: str = 'utf-8',
                        logger: logging.Logger = None) -> bool:
        """Escribe texto, bytes, JSON (dict/list) de forma atómica"""
        temp_path = f"{file_path}.tmp"
        try:
            parent = os.path.dirname(os.path.abspath(file_path))
            os.makedirs(parent, exist_ok=True)

            if isinstance(content, bytes):
                with open(temp_path, 'wb') as f:
                    f.write(content)
            else:
                with open(temp_path, 'w', encoding=encoding, newline='\n') as f:
                    if isinstance(content, (dict, list)):
                        json.dump(content, f, ensure_ascii=False, indent=2)
                        f.write('\n')
                    else:
                        f.write(str(content))

            os.replace(temp_path, file_path)
            if logger:
                logger.info("✅ Archivo escrito exitosamente: %s", file_path)
            return True

        except OSError as e:
            if logger:
                logger.error("❌ Error escribiendo archivo %s: %s", file_path, e)
            if os.path.exists(temp_path):
                os.remove(temp_path)
            return False

    @staticmethod
    def safe_file_read(file_path: str, encoding: str = 'utf-8',
                       logger: logging.Logger = None) -> Optional[Any]:
        """Lee JSON o YAML según la extensión; texto plano en otro caso"""
        if not os.path.exists(file_path):
            if logger:
                logger.warning("⚠️ Archivo no existe: %s", file_path)
            return None
        try:
            with open(file_path, 'r', encoding=encoding) as f:
                content = f.read()
        except OSError as e:
            if logger:
                logger.error("❌ Error leyendo archivo %s: %s", file_path, e)
            return None

        if file_path.endswith((".yaml", ".yml")):
            return yaml.safe_load(content)
        try:
            return json.loads(content)
        except json.JSONDecodeError:
            return content
