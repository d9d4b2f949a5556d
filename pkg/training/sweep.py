"""
Абляции по числу правил, числу слоёв и остаточным связям
Ablation sweeps: one budgeted training run per cell, aligned table plus JSON lines
"""
import json
import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

from models import DatasetRecord, SweepRow
from schemas import RunConfigFile
from rewritenet.model import load_model
from training.evaluation import evaluate_records
from training.presets import preset_for, resize_per_layer, resolve_train_config
from training.trainer import train
from config import Config

logger = logging.getLogger(__name__)

AXES: Dict[str, List] = {
    'rules': [4, 16, 32, 64],
    'layers': [1, 2, 4, 8],
    'residuals': [True, False],
}


def cell_config(base: RunConfigFile, axis: str, value) -> RunConfigFile:
    """Копия базовой конфигурации с изменённым значением оси"""
    if axis == 'rules':
        return base.model_copy(update={'rules': [int(value)]})
    if axis == 'residuals':
        return base.model_copy(update={'residual': bool(value)})
    if axis == 'layers':
        preset = preset_for(base.task)
        layers = int(value)
        return base.model_copy(update={
            'layers': layers,
            'rules': resize_per_layer(base.rules or [Config.RULES], layers),
            'pattern_len': resize_per_layer(base.pattern_len or preset['pattern_len'], layers),
            'replacement_len': resize_per_layer(base.replacement_len or preset['replacement_len'], layers),
        })
    raise ValueError(f'Unknown ablation axis {axis!r}; expected one of {tuple(AXES)}')


def _label(value) -> str:
    if isinstance(value, bool):
        return 'on' if value else 'off'
    return str(value)


def render_table(rows: Sequence[SweepRow]) -> str:
    header = ['axis', 'value', 'valid_em', 'test_em', 'final_loss', 'steps']
    body = [
        [row.axis, _label(row.value), f'{row.valid_em:.4f}', f'{row.test_em:.4f}', f'{row.final_loss:.4f}', str(row.steps)]
        for row in rows
    ]
    widths = [max(len(line[column]) for line in [header] + body) for column in range(len(header))]
    return ''.join('  '.join(cell.ljust(width) for cell, width in zip(line, widths)).rstrip() + '\n'
                   for line in [header] + body)


def write_sweep_outputs(rows: Sequence[SweepRow], axis: str, out_dir: Union[str, Path]):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / f'ablation_{axis}.txt').write_text(render_table(rows), encoding='utf-8')
    with open(out_dir / f'ablation_{axis}.jsonl', 'w', encoding='utf-8') as handle:
        for row in rows:
            handle.write(json.dumps(row.to_dict()) + '\n')


def ablation_sweep(
    base: RunConfigFile,
    axis: str,
    train_records: Sequence[DatasetRecord],
    valid_records: Sequence[DatasetRecord],
    out_dir: Union[str, Path],
    test_records: Optional[Sequence[DatasetRecord]] = None,
    steps: Optional[int] = None,
    values: Optional[Sequence] = None,
    scale: str = 'desk',
) -> List[SweepRow]:
    """
    Обучить по одной модели на ячейку оси

    Args:
        base: Базовая конфигурация запуска
        axis: 'rules', 'layers' или 'residuals'
        train_records, valid_records: Данные обучения и отбора чекпойнта
        out_dir: Каталог, где создаются подкаталоги ячеек и таблицы
        test_records: Данные для итогового EM; None = EM на валидации
        steps: Бюджет шагов на ячейку
        values: Значения оси вместо стандартных

    Returns:
        Строки таблицы в порядке values
    """
    if axis not in AXES:
        raise ValueError(f'Unknown ablation axis {axis!r}; expected one of {tuple(AXES)}')
    values = list(values) if values is not None else AXES[axis]
    out_dir = Path(out_dir)
    rows: List[SweepRow] = []

    logger.info("=" * 60)
    logger.info(f'Ablation over {axis}: {", ".join(_label(value) for value in values)}')
    logger.info("=" * 60)
    for value in values:
        cell = cell_config(base, axis, value)
        if steps is not None:
            cell = cell.model_copy(update={'steps': steps})
        train_cfg = resolve_train_config(cell, out_dir / f'{axis}_{_label(value)}', scale)
        result = train(train_cfg, train_records, valid_records)
        test_em = result.best_em
        if test_records:
            test_em = evaluate_records(load_model(result.checkpoint_path), test_records)
        rows.append(SweepRow(axis, value, result.best_em, test_em, result.final_loss, train_cfg.steps))
        logger.info(f'[OK] {axis}={_label(value)}: valid EM {result.best_em:.4f}, test EM {test_em:.4f}')

    write_sweep_outputs(rows, axis, out_dir)
    return rows
