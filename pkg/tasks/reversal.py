"""
Разворот списка уникальных целых чисел
List reversal: src is a run of distinct integers, tgt is the same run reversed
"""
import logging
from typing import List

import numpy as np

from models import DatasetRecord

logger = logging.getLogger(__name__)


def reversal_vocabulary(vocab_size: int = 64) -> List[str]:
    return [str(value) for value in range(vocab_size)]


def gen_reversal(
    n_samples: int,
    seed: int,
    min_len: int = 10,
    max_len: int = 30,
    vocab_size: int = 64,
) -> List[DatasetRecord]:
    """
    Сгенерировать примеры разворота

    Args:
        n_samples: Число примеров
        seed: Зерно генератора
        min_len, max_len: Границы длины (включительно)
        vocab_size: Числа берутся из 0..vocab_size-1 без повторов

    Returns:
        Список DatasetRecord
    """
    if min_len < 1 or min_len > max_len:
        raise ValueError(f'invalid length range [{min_len}, {max_len}]')
    if vocab_size < max_len:
        raise ValueError(f'vocab_size={vocab_size} cannot hold {max_len} distinct integers')
    rng = np.random.default_rng(seed)
    records = []
    for _ in range(n_samples):
        length = int(rng.integers(min_len, max_len + 1))
        src = [str(int(value)) for value in rng.choice(vocab_size, size=length, replace=False)]
        records.append(DatasetRecord(src, src[::-1]))
    return records
