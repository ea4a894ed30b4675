from typing import Optional

from pydantic_settings import BaseSettings, SettingsConfigDict


class CompletionSettings(BaseSettings):
    """Endpoint de completado de chat; la clave se lee del entorno o de `.env`"""

    model_config = SettingsConfigDict(env_file=".env", extra="ignore")

    COMPLETION_API_KEY: Optional[str] = None
    COMPLETION_ENDPOINT: str = "https://api.openai.com/v1/chat/completions"
    COMPLETION_MODEL: str = "gpt-4o-mini-2024-07-18"
    COMPLETION_TIMEOUT_S: float = 30.0
    COMPLETION_MAX_RETRIES: int = 3

    @property
    def headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        if self.COMPLETION_API_KEY:
            headers["Authorization"] = f"Bearer {self.COMPLETION_API_KEY}"
        return headers
