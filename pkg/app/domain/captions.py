from dataclasses import dataclass, field
from typing import Dict, List, Optional

from pydantic import BaseModel, Field


class CaptionConfig(BaseModel):
    prompts_dir: Optional[str] = None
    clean_template: str = "clean_caption"
    summary_template: str = "summarize_weak"
    description_template: str = "class_description"
    parallelism: int = Field(default=4, ge=1)
    requests_per_second: float = Field(default=5.0, gt=0.0)
    max_summary_words: int = 20
    temperature: float = 0.0
    mock_table: Optional[str] = None


@dataclass(frozen=True)
class PromptTemplate:
    """Plantilla versionada con huecos (Jinja2) para el mensaje de usuario"""

    name: str
    version: str
    system: str
    user: str
    slots: tuple = ()


@dataclass(frozen=True)
class CompletionRequest:
    """Petición ya renderizada; `payload` es la entrada sin formatear"""

    messages: List[Dict[str, str]]
    payload: str
    template: str = ""
    metadata: Dict[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class CaptionResult:
    text: str
    original: str
    uncleaned: bool = False
    error: str = ""
