"""
Сжатие строк: удаление всех вхождений ABC за один проход
String compression over {A, B, C}: every non-overlapping ABC is removed in one pass
"""
import logging
from typing import List

import numpy as np

from models import DatasetRecord, DiscreteRule
from discrete.rewriting import iterated_rewrite, rewrite_pass

logger = logging.getLogger(__name__)

ALPHABET = ['A', 'B', 'C']
COMPRESSION_RULES = [DiscreteRule(['A', 'B', 'C'], [])]


def compression_vocabulary() -> List[str]:
    return list(ALPHABET)


def is_cascade_free(target: List[str]) -> bool:
    """После удаления не появилось нового ABC"""
    return rewrite_pass(target, COMPRESSION_RULES) == target


def gen_compression(
    n_samples: int,
    seed: int,
    min_len: int = 5,
    max_len: int = 20,
    include_cascading: bool = False,
) -> List[DatasetRecord]:
    """
    Сгенерировать примеры сжатия

    Args:
        n_samples: Число примеров
        seed: Зерно генератора
        min_len, max_len: Границы длины входа
        include_cascading: Оставить каскадные строки; их цель - неподвижная точка многократных проходов

    Returns:
        Список DatasetRecord с отметкой cascade_free
    """
    if min_len < 1 or min_len > max_len:
        raise ValueError(f'invalid length range [{min_len}, {max_len}]')
    rng = np.random.default_rng(seed)
    records: List[DatasetRecord] = []
    rejected = 0
    while len(records) < n_samples:
        length = int(rng.integers(min_len, max_len + 1))
        src = [ALPHABET[index] for index in rng.integers(0, len(ALPHABET), size=length)]
        tgt = rewrite_pass(src, COMPRESSION_RULES)
        cascade_free = is_cascade_free(tgt)
        if not cascade_free:
            if not include_cascading:
                rejected += 1
                continue
            tgt = iterated_rewrite(src, COMPRESSION_RULES, max_passes=len(src))
        records.append(DatasetRecord(src, tgt, cascade_free=cascade_free))
    if rejected:
        logger.debug(f'compression: {rejected} cascading strings filtered out')
    return records
