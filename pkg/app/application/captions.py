"""
Post-procesado de captions con un modelo de lenguaje: limpieza de captions
fuertes, resumen en un caption débil y descripciones de clase.

Las llamadas fallidas no abortan los lotes: el texto original se conserva y
se marca como `uncleaned`.
"""

import logging
import re
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple, TypeVar

import yaml
from jinja2 import Environment, StrictUndefined, TemplateError, meta

from app.domain.annotations import AnnotatedClip, Region
from app.domain.captions import CaptionConfig, CaptionResult, CompletionRequest, PromptTemplate
from app.domain.exceptions import CompletionError, ConfigError, EmptyInputError, ValidationError
from app.domain.repositories import CompletionClient
from app.infrastructure.error_handlers import ErrorHandler, ErrorType

logger = logging.getLogger(__name__)

DEFAULT_PROMPTS_DIR = Path(__file__).resolve().parents[1] / "data" / "prompts"

_env = Environment(undefined=StrictUndefined, autoescape=False, keep_trailing_newline=False)

T = TypeVar("T")
R = TypeVar("R")


def load_template(name: str, prompts_dir: Optional[Path] = None) -> PromptTemplate:
    path = Path(prompts_dir or DEFAULT_PROMPTS_DIR) / f"{name}.yaml"
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = yaml.safe_load(f)
    except (OSError, yaml.YAMLError) as e:
        raise ConfigError(f"No se pudo leer la plantilla {path}: {e}") from e
    if not isinstance(data, dict) or "user" not in data:
        raise ConfigError(f"La plantilla {path} necesita al menos el campo 'user'")

    system, user = str(data.get("system", "")), str(data["user"])
    slots = set()
    for source in (system, user):
        slots |= meta.find_undeclared_variables(_env.parse(source))
    return PromptTemplate(name=str(data.get("name", name)), version=str(data.get("version", "0")),
                          system=system, user=user, slots=tuple(sorted(slots)))


def render_request(template: PromptTemplate, payload: str, **slots) -> CompletionRequest:
    """Rellena la plantilla; un hueco sin valor es un error antes de enviar nada"""
    missing = [slot for slot in template.slots if slot not in slots]
    if missing:
        raise ValidationError(f"huecos sin valor en la plantilla {template.name}: {missing}",
                              field="slots", value=missing)
    try:
        messages = []
        if template.system:
            messages.append({"role": "system", "content": _env.from_string(template.system).render(**slots)})
        messages.append({"role": "user", "content": _env.from_string(template.user).render(**slots)})
    except TemplateError as e:
        raise ValidationError(f"plantilla {template.name} no renderizable: {e}", field="template") from e
    return CompletionRequest(messages=messages, payload=payload, template=template.name,
                             metadata={"version": template.version})


def _single_line(text: str) -> str:
    return re.sub(r"\s+", " ", text).strip().strip('"').strip()


def _complete(client: CompletionClient, request: CompletionRequest, original: str,
              error_handler: Optional[ErrorHandler]) -> CaptionResult:
    try:
        text = _single_line(client.complete(request))
    except CompletionError as e:
        (error_handler or ErrorHandler(logger)).handle_error(e, ErrorType.NETWORK_ERROR, request.template,
                                                            data=original)
        return CaptionResult(text=original, original=original, uncleaned=True, error=str(e))
    if not text:
        logger.warning("⚠️ Respuesta vacía para %r, se conserva el original", original)
        return CaptionResult(text=original, original=original, uncleaned=True, error="respuesta vacía")
    logger.info("✅ [%s] %r → %r", request.template, original, text)
    return CaptionResult(text=text, original=original)


def clean_caption(client: CompletionClient, template: PromptTemplate, caption: str,
                  error_handler: Optional[ErrorHandler] = None) -> CaptionResult:
    if not caption or not caption.strip():
        raise EmptyInputError("caption vacío")
    request = render_request(template, caption, caption=caption)
    return _complete(client, request, caption, error_handler)


def weak_caption_payload(regions: Sequence[Region]) -> str:
    """Captions de las regiones en orden de onset, unidos por espacios"""
    ordered = sorted(regions, key=lambda r: (r.onset, r.offset))
    return " ".join(r.text.strip() for r in ordered)


def summarize_weak(client: CompletionClient, template: PromptTemplate, regions: Sequence[Region],
                   max_words: int = 20, error_handler: Optional[ErrorHandler] = None) -> CaptionResult:
    if not regions:
        raise EmptyInputError("summarize_weak requiere al menos una región")
    ordered = sorted(regions, key=lambda r: (r.onset, r.offset))
    payload = weak_caption_payload(ordered)
    request = render_request(
        template, payload,
        regions=[{"onset": r.onset, "offset": r.offset, "text": r.text} for r in ordered],
        max_words=max_words,
    )
    result = _complete(client, request, payload, error_handler)
    if not result.uncleaned and len(result.text.split()) > 2 * max_words:
        logger.warning("⚠️ Resumen de %s palabras (objetivo ~%s): %r",
                       len(result.text.split()), max_words, result.text)
    return result


def class_description(client: CompletionClient, template: PromptTemplate, class_name: str,
                      error_handler: Optional[ErrorHandler] = None) -> CaptionResult:
    if not class_name or not class_name.strip():
        raise EmptyInputError("nombre de clase vacío")
    request = render_request(template, class_name, class_name=class_name)
    return _complete(client, request, class_name, error_handler)


def run_batch(func: Callable[[T], R], items: Sequence[T], parallelism: int = 4) -> List[R]:
    """Ejecuta `func` con concurrencia acotada; el resultado sigue el orden de entrada"""
    if parallelism <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    results: List[Optional[R]] = [None] * len(items)
    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        futures = {pool.submit(func, item): index for index, item in enumerate(items)}
        for future, index in futures.items():
            results[index] = future.result()
    return results


def describe_classes(client: CompletionClient, class_names: Sequence[str],
                     cfg: CaptionConfig = CaptionConfig(),
                     template: Optional[PromptTemplate] = None) -> List[Tuple[str, CaptionResult]]:
    """Una descripción por clase, en el orden recibido"""
    template = template or load_template(cfg.description_template, cfg.prompts_dir)
    handler = ErrorHandler(logger)
    results = run_batch(lambda name: class_description(client, template, name, handler),
                        list(class_names), cfg.parallelism)
    return list(zip(class_names, results))


def clean_manifest(client: CompletionClient, clips: Sequence[AnnotatedClip],
                   cfg: CaptionConfig = CaptionConfig()) -> List[AnnotatedClip]:
    """
    Limpia todos los captions de región y genera el caption débil de cada clip
    a partir de las regiones limpias. Ningún caption se pierde: los fallidos
    se conservan con `uncleaned=True`.
    """
    clean_template = load_template(cfg.clean_template, cfg.prompts_dir)
    summary_template = load_template(cfg.summary_template, cfg.prompts_dir)
    handler = ErrorHandler(logger)

    flat = [(i, k, region) for i, clip in enumerate(clips) for k, region in enumerate(clip.regions)]
    cleaned = run_batch(lambda item: clean_caption(client, clean_template, item[2].text, handler),
                        flat, cfg.parallelism)

    new_regions: List[List[Region]] = [[] for _ in clips]
    for (i, _, region), result in zip(flat, cleaned):
        new_regions[i].append(region.model_copy(update={
            "text": result.text,
            "original_text": region.original_text or region.text,
            "uncleaned": result.uncleaned,
        }))

    with_regions = [i for i, regions in enumerate(new_regions) if regions]
    summaries = run_batch(
        lambda i: summarize_weak(client, summary_template, new_regions[i], cfg.max_summary_words, handler),
        with_regions, cfg.parallelism,
    )
    weak = dict(zip(with_regions, summaries))

    output = []
    for i, clip in enumerate(clips):
        update = {"regions": tuple(new_regions[i])}
        if i in weak:
            update["weak_caption"] = weak[i].text
        output.append(clip.model_copy(update=update))

    flagged = sum(r.uncleaned for r in cleaned)
    if flagged:
        logger.warning("⚠️ %s de %s captions quedaron sin limpiar: %s", flagged, len(cleaned),
                       handler.get_error_summary())
    logger.info("✅ Manifiesto limpiado: %s clips, %s regiones", len(output), len(cleaned))
    return output
