"""
Bucle de optimización: Adam con corrección de sesgo, calentamiento lineal y
recocido coseno, selección del mejor checkpoint por pérdida de validación.

En modo de un solo hilo el entrenamiento es reproducible bit a bit para una
misma semilla, configuración y orden de datos.
"""

import logging
import math
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.application.dataset_service import stratified_split
from app.application.encoders import init_params
from app.application.objectives import loss_and_gradient
from app.domain.annotations import AnnotatedClip
from app.domain.embeddings import EncoderParams, Gradient, ModelConfig, TensorBundle
from app.domain.exceptions import NonFiniteGradientError, TrainingError
from app.domain.repositories import CheckpointSeries, MetricSink
from app.domain.training import (
    TEMPERATURE_GRID,
    EpochRecord,
    LossKind,
    OptimizerState,
    TrainConfig,
    TrainingExample,
    TrainResult,
)
from app.infrastructure.error_handlers import ErrorHandler, ErrorType

logger = logging.getLogger(__name__)


def warmup_steps(total_steps: int, cfg: TrainConfig) -> int:
    return int(round(cfg.warmup_epochs * total_steps / cfg.epochs))


def lr_at(step: int, total_steps: int, cfg: TrainConfig) -> float:
    """Rampa lineal 0 → peak_lr durante el calentamiento y coseno peak_lr → final_lr después"""
    if not 0 <= step <= total_steps:
        raise ValueError(f"step {step} fuera de [0, {total_steps}]")
    warmup = min(warmup_steps(total_steps, cfg), total_steps)
    if warmup > 0 and step <= warmup:
        return cfg.peak_lr * step / warmup
    if total_steps == warmup:
        return cfg.peak_lr
    progress = (step - warmup) / (total_steps - warmup)
    return cfg.final_lr + (cfg.peak_lr - cfg.final_lr) * 0.5 * (1.0 + math.cos(math.pi * progress))


def adam_step(params: EncoderParams, grads: Gradient, state: OptimizerState, lr: float,
              cfg: TrainConfig = TrainConfig(),
              error_handler: Optional[ErrorHandler] = None) -> Tuple[EncoderParams, OptimizerState]:
    """
    Paso de Adam (β₁, β₂, ε de `cfg`) con corrección de sesgo.

    Un gradiente no finito no se aplica: se registra el incidente y se
    devuelven parámetros y estado sin cambios.
    """
    if lr < 0:
        raise ValueError(f"lr negativo: {lr}")
    if grads.shapes() != params.weights.shapes():
        raise ValueError("gradiente y parámetros con formas distintas")
    if not grads.is_finite():
        (error_handler or ErrorHandler(logger)).handle_error(
            NonFiniteGradientError(f"paso {state.step + 1}"), ErrorType.NUMERICAL_ERROR,
            "adam_step: paso omitido",
        )
        return params, state

    step = state.step + 1
    first_correction = 1.0 - cfg.beta1 ** step
    second_correction = 1.0 - cfg.beta2 ** step
    new_weights, new_m, new_v = {}, {}, {}
    for name, weight in params.weights.items():
        g = grads[name]
        m = cfg.beta1 * state.first_moment[name] + (1.0 - cfg.beta1) * g
        v = cfg.beta2 * state.second_moment[name] + (1.0 - cfg.beta2) * g * g
        m_hat = m / first_correction
        v_hat = v / second_correction
        new_weights[name] = weight - lr * m_hat / (np.sqrt(v_hat) + cfg.eps)
        new_m[name], new_v[name] = m, v
    return (
        params.with_weights(TensorBundle(new_weights)),
        OptimizerState(TensorBundle(new_m), TensorBundle(new_v), step),
    )


def _split_validation(examples: Sequence[TrainingExample],
                      cfg: TrainConfig) -> Tuple[List[TrainingExample], List[TrainingExample]]:
    if all(ex.subclass for ex in examples) and len(examples) >= 4:
        proxies = [AnnotatedClip(clip_id=ex.clip_id, duration=max(ex.mel.num_frames * ex.mel.hop, 1e-3),
                                 subclass=ex.subclass) for ex in examples]
        split = stratified_split(proxies, cfg.val_fraction, cfg.seed)
        return ([ex for ex in examples if ex.clip_id in split.train_ids],
                [ex for ex in examples if ex.clip_id in split.test_ids])
    held = int(math.floor(len(examples) * cfg.val_fraction))
    return list(examples[:len(examples) - held]), list(examples[len(examples) - held:])


def validation_loss(params: EncoderParams, examples: Sequence[TrainingExample],
                    cfg: TrainConfig) -> Optional[float]:
    """Pérdida media por lote sobre el conjunto de validación (None si hay < 2 clips)"""
    if len(examples) < 2:
        return None
    chunks = [list(examples[i:i + cfg.batch_size]) for i in range(0, len(examples), cfg.batch_size)]
    if len(chunks) > 1 and len(chunks[-1]) < 2:
        chunks[-2].extend(chunks.pop())
    losses = [loss_and_gradient(params, chunk, cfg.loss_kind, cfg.temperature)[0] for chunk in chunks]
    return float(np.mean(losses))


def train(examples: Sequence[TrainingExample],
          cfg: TrainConfig,
          model_cfg: ModelConfig = ModelConfig(),
          val_examples: Optional[Sequence[TrainingExample]] = None,
          init: Optional[EncoderParams] = None,
          checkpoints: Optional[CheckpointSeries] = None,
          metric_sink: Optional[MetricSink] = None) -> TrainResult:
    if not examples:
        raise TrainingError("no hay clips para entrenar")

    if val_examples is None:
        train_set, val_set = _split_validation(examples, cfg)
    else:
        train_set, val_set = list(examples), list(val_examples)

    batches_per_epoch = len(train_set) // cfg.batch_size
    if batches_per_epoch == 0:
        raise TrainingError(
            f"{len(train_set)} clips de entrenamiento no llenan un lote de {cfg.batch_size}"
        )
    total_steps = batches_per_epoch * cfg.epochs

    params = init if init is not None else init_params(model_cfg)
    state = OptimizerState.zeros(params)
    rng = np.random.default_rng(cfg.seed)
    error_handler = ErrorHandler(logger)
    loss_kind = LossKind(cfg.loss_kind)

    logger.info("🚀 Entrenando (%s, τ=%s): %s clips, %s lotes/época, %s épocas",
                loss_kind.value, cfg.temperature, len(train_set), batches_per_epoch, cfg.epochs)

    history: List[EpochRecord] = []
    best_params, best_loss, best_epoch = params, math.inf, 0
    step = 0
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(train_set))
        epoch_losses, skipped = [], 0
        for b in range(batches_per_epoch):
            batch = [train_set[i] for i in order[b * cfg.batch_size:(b + 1) * cfg.batch_size]]
            loss, grads = loss_and_gradient(params, batch, loss_kind, cfg.temperature)
            step += 1
            lr = lr_at(step, total_steps, cfg)
            previous_step = state.step
            params, state = adam_step(params, grads, state, lr, cfg, error_handler)
            skipped += int(state.step == previous_step)
            epoch_losses.append(loss)
            if metric_sink is not None:
                metric_sink.append(step=step, epoch=epoch, lr=lr, loss=loss)

        train_loss = float(np.mean(epoch_losses))
        val_loss = validation_loss(params, val_set, cfg)
        if val_loss is None:
            val_loss = train_loss
        history.append(EpochRecord(epoch, train_loss, val_loss, skipped))
        logger.info("📉 Época %s/%s: train=%.5f val=%.5f", epoch, cfg.epochs, train_loss, val_loss)

        if checkpoints is not None:
            checkpoints.save_epoch(epoch, params, {"loss_kind": loss_kind.value,
                                                   "temperature": str(cfg.temperature)})
        if val_loss < best_loss:
            best_params, best_loss, best_epoch = params, val_loss, epoch
            if checkpoints is not None:
                checkpoints.save_best(params, {"epoch": str(epoch), "val_loss": repr(val_loss)})

    if error_handler.total_errors():
        logger.warning("⚠️ Pasos omitidos por gradiente no finito: %s", error_handler.get_error_summary())
    return TrainResult(final_params=params, best_params=best_params, best_epoch=best_epoch,
                       history=history, temperature=cfg.temperature)


def temperature_sweep(examples: Sequence[TrainingExample],
                      cfg: TrainConfig,
                      model_cfg: ModelConfig = ModelConfig(),
                      grid: Sequence[float] = TEMPERATURE_GRID,
                      val_examples: Optional[Sequence[TrainingExample]] = None,
                      init: Optional[EncoderParams] = None) -> Tuple[float, Dict[float, TrainResult]]:
    """Entrena una vez por τ y elige el de menor pérdida de validación"""
    results: Dict[float, TrainResult] = {}
    for tau in grid:
        run_cfg = cfg.model_copy(update={"temperature": float(tau)})
        results[float(tau)] = train(examples, run_cfg, model_cfg, val_examples=val_examples, init=init)
    best_tau = min(results, key=lambda tau: results[tau].best_val_loss)
    logger.info("✅ Mejor temperatura: τ=%s", best_tau)
    return best_tau, results
