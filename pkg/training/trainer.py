"""
Цикл обучения: мини-батчи Adam, периодическая валидация, лучший чекпойнт
Training loop with validation-EM checkpoint selection and a divergence dump
"""
import logging
import time
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from models import DatasetRecord
from schemas import TrainConfig
from rewritenet.model import RewriteModel, batch_loss, save_model
from tasks.dataset_io import write_records
from tensorcore import adam_step, backward, clip_grad_norm
from training.evaluation import EmptyDatasetError, check_vocabulary, evaluate_records

logger = logging.getLogger(__name__)

METRICS_FILE = 'metrics.log'
BEST_CHECKPOINT = 'best.ckpt'


class TrainingDivergedError(RuntimeError):
    """Во время шага появились NaN/Inf"""


class TrainResult:
    """Итог обучения"""

    def __init__(self, best_em: float, best_step: int, final_loss: float, checkpoint_path: Path,
                 metrics_path: Path, history: List[tuple]):
        self.best_em = best_em
        self.best_step = best_step
        self.final_loss = final_loss
        self.checkpoint_path = checkpoint_path
        self.metrics_path = metrics_path
        self.history = history  # (step, loss, valid_em)


def train(
    cfg: TrainConfig,
    train_records: Sequence[DatasetRecord],
    valid_records: Sequence[DatasetRecord],
    model: Optional[RewriteModel] = None,
) -> TrainResult:
    """
    Обучить модель и сохранить чекпойнт с лучшим EM на валидации

    Журнал метрик: строки `step loss valid_em wall_ms`; wall_ms равно 0,
    если cfg.log_wall_time выключен.

    Args:
        cfg: Конфигурация обучения
        train_records: Обучающая выборка
        valid_records: Валидационная выборка
        model: Готовая модель вместо случайной инициализации

    Returns:
        TrainResult
    """
    if not train_records:
        raise EmptyDatasetError('training set is empty')
    if not valid_records:
        raise EmptyDatasetError('validation set is empty')

    run_dir = Path(cfg.checkpoint_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(cfg.seed)
    if model is None:
        model = RewriteModel.initialize(cfg.model, rng)
    check_vocabulary(model, list(train_records) + list(valid_records))
    registry = model.registry()
    pairs = [(model.encode_source(record.src), model.target_ids(record.tgt)) for record in train_records]

    logger.info("=" * 60)
    logger.info(f'Training {cfg.task}: {cfg.steps} steps, batch {cfg.batch_size}, '
                f'{len(model.banks)} layers, d={cfg.model.d}, {len(pairs)} train examples')
    logger.info("=" * 60)

    metrics_path = run_dir / METRICS_FILE
    checkpoint_path = run_dir / BEST_CHECKPOINT
    best_em, best_step = -1.0, 0
    history: List[tuple] = []
    elapsed = 0.0
    loss_value = float('nan')

    with open(metrics_path, 'w', encoding='utf-8') as metrics:
        for step in range(1, cfg.steps + 1):
            started = time.perf_counter()
            batch = rng.integers(0, len(pairs), size=cfg.batch_size)
            registry.zero_grad()
            try:
                loss = batch_loss(
                    model, [pairs[index] for index in batch], training=True, rng=rng,
                    structure_weight=cfg.structure_weight,
                )
                backward(loss)
                clip_grad_norm(registry, cfg.grad_clip)
                adam_step(registry, cfg.adam)
            except FloatingPointError as exc:
                dump_path = run_dir / f'nan_batch_step{step}.tsv'
                write_records([train_records[index] for index in batch], dump_path)
                logger.error(f'Non-finite values at step {step}; offending batch written to {dump_path}')
                raise TrainingDivergedError(f'training diverged at step {step}: {exc}') from exc
            loss_value = loss.item()
            elapsed += time.perf_counter() - started

            if step % cfg.eval_every == 0 or step == cfg.steps:
                em = evaluate_records(model, valid_records)
                wall_ms = int(elapsed * 1000) if cfg.log_wall_time else 0
                metrics.write(f'{step} {loss_value:.6f} {em:.6f} {wall_ms}\n')
                metrics.flush()
                history.append((step, loss_value, em))
                logger.info(f'step {step}: loss {loss_value:.4f}, valid EM {em:.4f}')
                if em > best_em:
                    best_em, best_step = em, step
                    save_model(model, checkpoint_path)
                    logger.debug(f'New best checkpoint at step {step}')

    logger.info(f'Best valid EM {best_em:.4f} at step {best_step}; checkpoint {checkpoint_path}')
    return TrainResult(best_em, best_step, loss_value, checkpoint_path, metrics_path, history)
