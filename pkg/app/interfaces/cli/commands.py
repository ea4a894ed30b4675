"""
CLI de strongcap.

Todos los subcomandos aceptan `--seed`, `--config`, `--out` y `--threads`.
Precedencia: flags > archivo de configuración > valores por defecto.
Códigos de salida: 0 éxito, 1 error de validación o de datos, 2 uso incorrecto.
"""

import json
import logging
from contextlib import contextmanager
from enum import Enum
from pathlib import Path
from typing import Dict, Iterator, List, Optional

import typer
from threadpoolctl import threadpool_limits

from app.application.audio_pipeline import preprocess_clip
from app.application.captions import clean_manifest, describe_classes
from app.application.dataset_service import dataset_stats, shift_regions, stratified_split, validate_against_ontology
from app.application.detection import evaluate_detection, evaluate_retrieval
from app.application.encoders import init_params
from app.application.features import load_mels, training_examples
from app.application.synth import synth_generate
from app.application.training import temperature_sweep, train as run_training
from app.config.logging_config import setup_logging
from app.config.settings import AppSettings, RunConfig, load_run_config
from app.domain.annotations import AnnotatedClip
from app.domain.detection import MetricReport
from app.domain.exceptions import ManifestValidationError, StrongCapError, ValidationError
from app.domain.repositories import CompletionClient
from app.domain.training import LossKind
from app.infrastructure.audio_io import read_wav, write_wav
from app.infrastructure.error_handlers import SafeOperations
from app.infrastructure.event_io import CsvMetricLog, read_class_descriptions, read_events, write_class_descriptions
from app.infrastructure.external_services.completion_client import (
    HttpCompletionClient,
    MockCompletionClient,
    RateLimitedClient,
    RateLimiter,
)
from app.infrastructure.report_writer import metric_table, retrieval_rows, stats_table, write_report
from app.infrastructure.repositories_impl.checkpoint_store import CheckpointStore, RunCheckpoints
from app.infrastructure.repositories_impl.manifest_repository import (
    JsonlManifestRepository,
    load_ontology,
    load_split,
    save_split,
)

logger = logging.getLogger(__name__)

app = typer.Typer(name="strongcap", help="Alineación audio-texto temporalmente fuerte.",
                  no_args_is_help=True, add_completion=False)

SEED = typer.Option(None, "--seed", help="Semilla; pisa la de cada sección de la configuración")
CONFIG = typer.Option(None, "--config", exists=True, dir_okay=False, help="Archivo YAML de configuración")
THREADS = typer.Option(None, "--threads", min=1, help="Hilos BLAS; 1 fuerza el modo determinista")


class LossChoice(str, Enum):
    global_ = "global"
    frame_wise = "frame_wise"


@app.callback()
def main(log_level: Optional[str] = typer.Option(None, "--log-level", help="Nivel de log (INFO, DEBUG...)")):
    settings = AppSettings()
    setup_logging(log_level or settings.LOG_LEVEL, settings.LOG_DIR)


@contextmanager
def _command(name: str, threads: Optional[int]) -> Iterator[None]:
    """Límite de hilos y traducción de errores del dominio a exit 1"""
    limit = threads or AppSettings().THREADS
    try:
        with threadpool_limits(limits=limit):
            yield
    except ManifestValidationError as e:
        for issue in e.issues:
            logger.error("❌ %s", issue)
        logger.error("❌ %s: %s", name, e)
        raise typer.Exit(code=1)
    except (StrongCapError, OSError, ValueError) as e:
        logger.error("❌ %s: %s", name, e)
        raise typer.Exit(code=1)
    logger.info("✅ %s completado", name)


def _config(config: Optional[Path], seed: Optional[int], **sections: Dict) -> RunConfig:
    overrides = {}
    for key, values in sections.items():
        present = {name: value for name, value in (values or {}).items() if value is not None}
        if present:
            overrides[key] = present
    if seed is not None:
        for section in ("model", "train", "synth"):
            overrides.setdefault(section, {})["seed"] = seed
    return load_run_config(config, overrides)


def _select(clips: List[AnnotatedClip], split: Optional[Path], part: str) -> List[AnnotatedClip]:
    if split is None:
        return clips
    ids = getattr(load_split(split), f"{part}_ids")
    return [clip for clip in clips if clip.clip_id in ids]


def _audio_root(manifest: Path, audio_root: Optional[Path]) -> Path:
    return audio_root or manifest.parent


MANIFEST = typer.Argument(..., exists=True, dir_okay=False, help="Manifiesto JSONL")
AUDIO_ROOT = typer.Option(None, "--audio-root", exists=True, file_okay=False,
                          help="Raíz de las rutas de audio (por defecto, la carpeta del manifiesto)")
SPLIT = typer.Option(None, "--split", exists=True, dir_okay=False, help="Archivo de split JSON")


@app.command()
def preprocess(manifest: Path = MANIFEST,
               audio_root: Optional[Path] = AUDIO_ROOT,
               out: Path = typer.Option(..., "--out", help="Carpeta de salida"),
               seed: Optional[int] = SEED,
               config: Optional[Path] = CONFIG,
               threads: Optional[int] = THREADS):
    """Normaliza, recorta, remuestrea y segmenta los clips de un manifiesto crudo."""
    with _command("preprocess", threads):
        cfg = _config(config, seed)
        base_seed = seed if seed is not None else cfg.train.seed
        root = _audio_root(manifest, audio_root)
        clips = JsonlManifestRepository().load(manifest, processed=False)
        kept, discarded = [], []
        for index, clip in enumerate(clips):
            if not clip.audio_path:
                raise ValidationError("el clip no tiene audio_path", field="audio_path", record_index=index,
                                      clip_id=clip.clip_id)
            outcome = preprocess_clip(read_wav(root / clip.audio_path), cfg.audio, rng_seed=base_seed + index)
            if not outcome.kept:
                logger.warning("⚠️ Clip %s descartado: %s", clip.clip_id, outcome.reason)
                discarded.append({"clip_id": clip.clip_id, "reason": outcome.reason})
                continue
            audio_path = f"audio/{clip.clip_id}.wav"
            write_wav(out / audio_path, outcome.waveform)
            duration = outcome.waveform.duration
            kept.append(clip.model_copy(update={
                "duration": duration, "audio_path": audio_path,
                "regions": tuple(shift_regions(clip.regions, outcome.start_s, duration)),
            }))
        JsonlManifestRepository().save(out / "manifest.jsonl", kept)
        if not SafeOperations.safe_file_write(str(out / "discarded.json"), discarded, logger=logger):
            raise OSError(f"no se pudo escribir {out / 'discarded.json'}")
        typer.echo(f"{len(kept)} clips conservados, {len(discarded)} descartados")


@app.command()
def stats(manifest: Path = MANIFEST,
          out: Optional[Path] = typer.Option(None, "--out", help="Carpeta para stats.json y stats.txt"),
          raw: bool = typer.Option(False, "--raw", help="Manifiesto sin preprocesar (duraciones hasta 300 s)"),
          seed: Optional[int] = SEED,
          config: Optional[Path] = CONFIG,
          threads: Optional[int] = THREADS):
    """Estadísticas del corpus: regiones, cobertura, longitud de captions, vocabulario."""
    with _command("stats", threads):
        _config(config, seed)
        report = dataset_stats(JsonlManifestRepository().load(manifest, processed=not raw))
        table = stats_table(report)
        if out is not None:
            write_report(out, "stats", report, table)
        typer.echo(table)


@app.command()
def split(manifest: Path = MANIFEST,
          test_fraction: float = typer.Option(2000 / 12358, "--test-fraction", min=0.0, max=1.0),
          ontology: Optional[Path] = typer.Option(None, "--ontology", exists=True, dir_okay=False),
          out: Path = typer.Option(..., "--out", help="Carpeta de salida (split.json)"),
          seed: Optional[int] = SEED,
          config: Optional[Path] = CONFIG,
          threads: Optional[int] = THREADS):
    """Split train/test estratificado por subclase."""
    with _command("split", threads):
        cfg = _config(config, seed)
        clips = JsonlManifestRepository().load(manifest)
        tree = load_ontology(ontology) if ontology else None
        if tree is not None:
            issues = validate_against_ontology(clips, tree)
            if issues:
                raise ManifestValidationError(issues)
        result = stratified_split(clips, test_fraction, seed if seed is not None else cfg.train.seed, tree)
        save_split(out / "split.json", result)
        typer.echo(f"{len(result.train_ids)} train / {len(result.test_ids)} test")


@app.command()
def train(manifest: Path = MANIFEST,
          audio_root: Optional[Path] = AUDIO_ROOT,
          split_file: Optional[Path] = SPLIT,
          loss: Optional[LossChoice] = typer.Option(None, "--loss", help="global o frame_wise"),
          tau: Optional[float] = typer.Option(None, "--tau", min=0.0, help="Temperatura"),
          epochs: Optional[int] = typer.Option(None, "--epochs", min=1),
          batch_size: Optional[int] = typer.Option(None, "--batch-size", min=2),
          lr: Optional[float] = typer.Option(None, "--lr", help="Learning rate pico"),
          init: Optional[Path] = typer.Option(None, "--init", exists=True, dir_okay=False,
                                              help="Checkpoint inicial para fine-tuning"),
          sweep_tau: bool = typer.Option(False, "--sweep-tau", help="Barrido de temperatura"),
          out: Path = typer.Option(..., "--out", help="Carpeta de checkpoints y logs"),
          seed: Optional[int] = SEED,
          config: Optional[Path] = CONFIG,
          threads: Optional[int] = THREADS):
    """Entrena los codificadores con la pérdida global o frame-wise."""
    with _command("train", threads):
        train_overrides = {"loss_kind": loss.value if loss else None, "temperature": tau, "epochs": epochs,
                           "batch_size": batch_size, "peak_lr": lr}
        cfg = _config(config, seed, train=train_overrides)
        clips = _select(JsonlManifestRepository().load(manifest), split_file, "train")
        mels = load_mels(clips, _audio_root(manifest, audio_root), cfg.audio)
        examples = training_examples(clips, mels, cfg.train.loss_kind)

        store = CheckpointStore()
        initial = store.load(init)[0] if init else None
        model_cfg = initial.config if initial else cfg.model.model_copy(update={"mel_bins": cfg.audio.mel_bins,
                                                                               "hop_s": cfg.audio.hop_s})
        if sweep_tau:
            best_tau, results = temperature_sweep(examples, cfg.train, model_cfg, init=initial)
            result = results[best_tau]
            SafeOperations.safe_file_write(str(out / "sweep.json"), {
                str(t): r.best_val_loss for t, r in results.items()
            } | {"best_tau": best_tau}, logger=logger)
            store.save(out / "checkpoints" / "best.ckpt", result.best_params,
                       {"temperature": str(best_tau), "loss_kind": LossKind(cfg.train.loss_kind).value})
        else:
            result = run_training(
                examples, cfg.train, model_cfg, init=initial,
                checkpoints=RunCheckpoints(out / "checkpoints", store, {"seed": str(cfg.train.seed)}),
                metric_sink=CsvMetricLog(out / "metrics.csv"),
            )
        SafeOperations.safe_file_write(str(out / "history.json"), [
            {"epoch": h.epoch, "train_loss": h.train_loss, "val_loss": h.val_loss, "skipped_steps": h.skipped_steps}
            for h in result.history
        ], logger=logger)
        typer.echo(f"mejor época {result.best_epoch}, pérdida de validación {result.best_val_loss:.5f}")


def _params(checkpoint: Optional[Path], cfg: RunConfig):
    if checkpoint is not None:
        return CheckpointStore().load(checkpoint)[0]
    logger.warning("⚠️ Sin checkpoint: se evalúa el modelo sin entrenar (semilla %s)", cfg.model.seed)
    return init_params(cfg.model.model_copy(update={"mel_bins": cfg.audio.mel_bins, "hop_s": cfg.audio.hop_s}))


CHECKPOINT = typer.Option(None, "--checkpoint", exists=True, dir_okay=False,
                          help="Checkpoint a evaluar; sin él se evalúa el modelo sin entrenar")


@app.command()
def evaluate(manifest: Path = MANIFEST,
             events: Path = typer.Option(..., "--events", exists=True, dir_okay=False,
                                         help="Eventos de referencia (TSV)"),
             classes: Path = typer.Option(..., "--classes", exists=True, dir_okay=False,
                                          help="Descripciones de clase (TSV)"),
             checkpoint: Optional[Path] = CHECKPOINT,
             audio_root: Optional[Path] = AUDIO_ROOT,
             split_file: Optional[Path] = SPLIT,
             keywords: bool = typer.Option(False, "--keywords", help="Usar el nombre de clase como consulta"),
             out: Path = typer.Option(..., "--out", help="Carpeta para report.json y report.txt"),
             seed: Optional[int] = SEED,
             config: Optional[Path] = CONFIG,
             threads: Optional[int] = THREADS):
    """Detección basada en texto: pAUROC por segmentos, PSDS1 y recuperación."""
    with _command("evaluate", threads):
        cfg = _config(config, seed)
        clips = _select(JsonlManifestRepository().load(manifest), split_file, "test")
        mels = load_mels(clips, _audio_root(manifest, audio_root), cfg.audio)
        descriptions = read_class_descriptions(classes)
        queries = {label: label.replace("_", " ") if keywords else text for label, text in descriptions.items()}
        params = _params(checkpoint, cfg)

        report = evaluate_detection(params, mels, read_events(events), queries, cfg.eval,
                                    audio_durations={c.clip_id: c.duration for c in clips})
        captions = {c.clip_id: c.weak_caption for c in clips if c.weak_caption}
        if captions:
            report = report.model_copy(update={"retrieval": evaluate_retrieval(params, mels, captions)})
        table = metric_table(report)
        write_report(out, "report", report, table)
        typer.echo(table)


@app.command()
def retrieve(manifest: Path = MANIFEST,
             checkpoint: Optional[Path] = CHECKPOINT,
             audio_root: Optional[Path] = AUDIO_ROOT,
             split_file: Optional[Path] = SPLIT,
             out: Path = typer.Option(..., "--out", help="Carpeta para retrieval.json y retrieval.txt"),
             seed: Optional[int] = SEED,
             config: Optional[Path] = CONFIG,
             threads: Optional[int] = THREADS):
    """Recuperación texto → audio con los captions débiles (mAP@10, R@1/5/10)."""
    with _command("retrieve", threads):
        cfg = _config(config, seed)
        clips = _select(JsonlManifestRepository().load(manifest), split_file, "test")
        mels = load_mels(clips, _audio_root(manifest, audio_root), cfg.audio)
        result = evaluate_retrieval(_params(checkpoint, cfg), mels,
                                    {c.clip_id: c.weak_caption for c in clips if c.weak_caption})
        report = MetricReport(retrieval=result, clip_count=len(clips))
        table = metric_table(report)
        write_report(out, "retrieval", report, table)
        typer.echo("\n".join(f"{name}: {value}" for name, value in retrieval_rows(result)))


def _completion_client(mock_table: Optional[Path], cfg: RunConfig) -> CompletionClient:
    table = mock_table or (Path(cfg.captions.mock_table) if cfg.captions.mock_table else None)
    inner = MockCompletionClient.from_file(table) if table else HttpCompletionClient(
        temperature=cfg.captions.temperature)
    return RateLimitedClient(inner, RateLimiter(cfg.captions.requests_per_second))


MOCK_TABLE = typer.Option(None, "--mock-table", exists=True, dir_okay=False,
                          help="Tabla de respuestas (YAML/JSON) para el cliente determinista")


@app.command("clean-captions")
def clean_captions(manifest: Path = MANIFEST,
                   mock_table: Optional[Path] = MOCK_TABLE,
                   out: Path = typer.Option(..., "--out", help="Carpeta de salida (manifest.jsonl)"),
                   seed: Optional[int] = SEED,
                   config: Optional[Path] = CONFIG,
                   threads: Optional[int] = THREADS):
    """Limpia los captions de región y genera un caption débil por clip."""
    with _command("clean-captions", threads):
        cfg = _config(config, seed)
        clips = JsonlManifestRepository().load(manifest, processed=False)
        cleaned = clean_manifest(_completion_client(mock_table, cfg), clips, cfg.captions)
        JsonlManifestRepository().save(out / "manifest.jsonl", cleaned)
        flagged = sum(r.uncleaned for c in cleaned for r in c.regions)
        typer.echo(f"{len(cleaned)} clips, {flagged} captions sin limpiar")


@app.command("describe-classes")
def describe_classes_command(classes: Path = typer.Argument(..., exists=True, dir_okay=False,
                                                            help="Un nombre de clase por línea"),
                             mock_table: Optional[Path] = MOCK_TABLE,
                             out: Path = typer.Option(..., "--out", help="Carpeta de salida (classes.tsv)"),
                             seed: Optional[int] = SEED,
                             config: Optional[Path] = CONFIG,
                             threads: Optional[int] = THREADS):
    """Genera una descripción de una frase por clase."""
    with _command("describe-classes", threads):
        cfg = _config(config, seed)
        with open(classes, "r", encoding="utf-8") as f:
            names = [line.strip() for line in f if line.strip()]
        results = describe_classes(_completion_client(mock_table, cfg), names, cfg.captions)
        write_class_descriptions(out / "classes.tsv", {name: r.text for name, r in results})
        typer.echo(f"{len(results)} descripciones")


@app.command()
def synth(out: Path = typer.Option(..., "--out", help="Carpeta del corpus sintético"),
          classes: Optional[int] = typer.Option(None, "--classes", min=1, max=5),
          clips_per_class: Optional[int] = typer.Option(None, "--clips-per-class", min=1),
          seed: Optional[int] = SEED,
          config: Optional[Path] = CONFIG,
          threads: Optional[int] = THREADS):
    """Genera el corpus sintético de referencia (audio, manifiesto, eventos, clases)."""
    with _command("synth", threads):
        cfg = _config(config, seed, synth={"class_count": classes, "clips_per_class": clips_per_class})
        corpus = synth_generate(cfg.synth, out)
        typer.echo(json.dumps({"clips": len(corpus.clips), "events": len(corpus.truth),
                               "classes": list(corpus.descriptions)}, ensure_ascii=False))
