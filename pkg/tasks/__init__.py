"""
Модуль генераторов задач
Provides a unified interface over the reversal, SCAN and compression generators
"""
import logging
from typing import Dict, List, Tuple

from models import DatasetRecord
from schemas import SplitSpec
from tasks.compression import compression_vocabulary, gen_compression
from tasks.dataset_io import DatasetFormatError, read_records, write_predictions, write_records
from tasks.metrics import EOS, PAD, corpus_em, exact_match
from tasks.reversal import gen_reversal, reversal_vocabulary
from tasks.scan import gen_scan, interpret, scan_vocabulary

logger = logging.getLogger(__name__)

TASKS = ('reversal', 'scan', 'compression')

# границы длины входа по умолчанию
DEFAULT_LENGTHS: Dict[str, Tuple[int, int]] = {
    'reversal': (10, 30),
    'compression': (5, 20),
}


def task_vocabulary(task: str, vocab_size: int = 64) -> List[str]:
    """
    Закрытый словарь задачи: PAD, EOS и все токены входов и выходов

    Args:
        task: Имя задачи
        vocab_size: Размер словаря чисел для reversal
    """
    if task == 'reversal':
        tokens = reversal_vocabulary(vocab_size)
    elif task == 'scan':
        tokens = scan_vocabulary()
    elif task == 'compression':
        tokens = compression_vocabulary()
    else:
        raise ValueError(f'Unknown task {task!r}; expected one of {TASKS}')
    return [PAD, EOS] + tokens


def generate_split(task: str, spec: SplitSpec) -> List[DatasetRecord]:
    """
    Сгенерировать одну выборку задачи

    Args:
        task: 'reversal', 'scan' или 'compression'
        spec: Параметры выборки

    Returns:
        Список DatasetRecord
    """
    logger.info(f'Generating {task}/{spec.name}: {spec.size} samples, seed {spec.rng_seed}')
    if task == 'scan':
        return gen_scan(spec)

    default_min, default_max = DEFAULT_LENGTHS.get(task, (1, 1))
    min_len = spec.min_len if spec.min_len is not None else default_min
    max_len = spec.max_len if spec.max_len is not None else default_max
    if task == 'reversal':
        return gen_reversal(spec.size, spec.rng_seed, min_len=min_len, max_len=max_len, vocab_size=spec.vocab_size)
    if task == 'compression':
        return gen_compression(
            spec.size, spec.rng_seed, min_len=min_len, max_len=max_len,
            include_cascading=spec.include_cascading,
        )
    raise ValueError(f'Unknown task {task!r}; expected one of {TASKS}')
