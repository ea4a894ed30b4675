"""
Clientes de completado de chat.

- `HttpCompletionClient`: POST con la forma habitual {model, messages, temperature}
  sobre httpx, con reintentos y backoff exponencial.
- `MockCompletionClient`: determinista; devuelve el valor de una tabla fija o
  repite la entrada.
- `RateLimitedClient`: envuelve cualquier cliente y limita las peticiones por segundo.
"""

import logging
import threading
import time
from pathlib import Path
from typing import Callable, Dict, List, Mapping, Optional

import httpx

from app.domain.captions import CompletionRequest
from app.domain.exceptions import CompletionError, ConfigError
from app.domain.repositories import CompletionClient
from app.infrastructure.config.completion_config import CompletionSettings
from app.infrastructure.error_handlers import RetryConfig, SafeOperations, retry_with_backoff

logger = logging.getLogger(__name__)


class HttpCompletionClient(CompletionClient):
    def __init__(self,
                 settings: Optional[CompletionSettings] = None,
                 temperature: float = 0.0,
                 retry: Optional[RetryConfig] = None,
                 transport: Optional[httpx.BaseTransport] = None,
                 sleep: Callable[[float], None] = time.sleep):
        self.settings = settings or CompletionSettings()
        self.temperature = temperature
        self.retry = retry or RetryConfig(max_retries=self.settings.COMPLETION_MAX_RETRIES)
        self._client = httpx.Client(timeout=self.settings.COMPLETION_TIMEOUT_S,
                                    headers=self.settings.headers, transport=transport)
        self._post = retry_with_backoff(self.retry, retry_on=(httpx.HTTPError,),
                                        logger=logger, sleep=sleep)(self._post_once)

    def _post_once(self, body: dict) -> dict:
        response = self._client.post(self.settings.COMPLETION_ENDPOINT, json=body)
        response.raise_for_status()
        return response.json()

    def complete(self, request: CompletionRequest) -> str:
        body = {
            "model": self.settings.COMPLETION_MODEL,
            "messages": request.messages,
            "temperature": self.temperature,
        }
        logger.debug("Petición de completado [%s]: %s", request.template, request.payload)
        try:
            data = self._post(body)
        except httpx.HTTPError as e:
            raise CompletionError(f"completado fallido tras {self.retry.max_retries} reintentos: {e}") from e
        except ValueError as e:
            raise CompletionError(f"respuesta de completado no es JSON: {e}") from e
        try:
            text = data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as e:
            raise CompletionError(f"respuesta de completado sin contenido: {str(data)[:200]}") from e
        logger.debug("Respuesta de completado [%s]: %s", request.template, text)
        return text

    def close(self) -> None:
        self._client.close()


class MockCompletionClient(CompletionClient):
    """
    Cliente determinista para tests y ejecuciones sin red: busca `payload` en
    la tabla y, si no está, lo devuelve tal cual (o falla con `echo=False`).
    """

    def __init__(self, table: Optional[Mapping[str, str]] = None, echo: bool = True):
        self.table: Dict[str, str] = dict(table or {})
        self.echo = echo
        self.requests: List[CompletionRequest] = []
        self._lock = threading.Lock()

    @classmethod
    def from_file(cls, path: Path, echo: bool = True) -> "MockCompletionClient":
        """Tabla de respuestas en YAML o JSON: mapeo entrada → salida"""
        table = SafeOperations.safe_file_read(str(path), logger=logger)
        if not isinstance(table, dict):
            raise ConfigError(f"la tabla de respuestas {path} debe ser un mapeo")
        return cls({str(k): str(v) for k, v in table.items()}, echo=echo)

    def complete(self, request: CompletionRequest) -> str:
        with self._lock:
            self.requests.append(request)
        if request.payload in self.table:
            return self.table[request.payload]
        if self.echo:
            return request.payload
        raise CompletionError(f"sin respuesta en la tabla para {request.payload!r}")


class RateLimiter:
    """Espacia las salidas al menos 1/requests_per_second; reloj y espera inyectables"""

    def __init__(self, requests_per_second: float,
                 clock: Callable[[], float] = time.monotonic,
                 sleep: Callable[[float], None] = time.sleep):
        if requests_per_second <= 0:
            raise ValueError(f"requests_per_second debe ser positivo: {requests_per_second}")
        self.interval = 1.0 / requests_per_second
        self.clock = clock
        self.sleep = sleep
        self._next_slot: Optional[float] = None
        self._lock = threading.Lock()

    def acquire(self) -> float:
        """Bloquea hasta el siguiente hueco libre y devuelve su instante"""
        with self._lock:
            now = self.clock()
            slot = now if self._next_slot is None else max(now, self._next_slot)
            if slot > now:
                self.sleep(slot - now)
            self._next_slot = slot + self.interval
            return slot


class RateLimitedClient(CompletionClient):
    def __init__(self, inner: CompletionClient, limiter: RateLimiter):
        self.inner = inner
        self.limiter = limiter
        self.dispatch_times: List[float] = []

    def complete(self, request: CompletionRequest) -> str:
        self.dispatch_times.append(self.limiter.acquire())
        return self.inner.complete(request)
