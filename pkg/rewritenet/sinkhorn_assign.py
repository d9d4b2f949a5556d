"""
Conflict resolution between rules: Gumbel noise, log-space Sinkhorn normalisation,
greedy non-overlapping decoding and the straight-through gate.

Column 0 of every score matrix is the copy pseudo-rule; rule r lives in column r + 1.
"""
import logging
import math
from typing import List, Optional, Sequence, Tuple

import numpy as np

from schemas import AssignmentConfig
from tensorcore import (
    Tensor,
    as_tensor,
    custom_op,
    exp,
    log_softmax_rows,
    logsumexp,
    matmul,
    relu,
    reshape,
    scale,
    segment_logsumexp,
    sub,
    take,
)

logger = logging.getLogger(__name__)

COPY = -1

Applied = List[Tuple[int, int]]


class AssignmentResult:
    """
    Результат разрешения конфликтов для одного прохода слоя

    Attributes:
        scores: S, строки = позиции окон, колонки = [copy, rule 0 .. rule R-1]
        perturbed: S' после шума Гумбеля
        soft: M̃ после нормализации Синхорна
        hard: M, ровно одна единица в строке
        applied: Остановки указателя (позиция, правило или COPY) по всей последовательности
    """

    def __init__(self, scores: Tensor, perturbed: Tensor, soft: Tensor, hard: np.ndarray, applied: Applied):
        self.scores = scores
        self.perturbed = perturbed
        self.soft = soft
        self.hard = hard
        self.applied = applied

    @property
    def fires(self) -> Applied:
        return [(position, rule) for position, rule in self.applied if rule != COPY]


def sample_gumbel(shape: Tuple[int, ...], rng: np.random.Generator) -> np.ndarray:
    """G = -log(-log(U)), U ~ Uniform(0, 1)"""
    uniform = np.clip(rng.random(shape), np.finfo(np.float64).tiny, 1.0)
    return -np.log(-np.log(uniform))


def gumbel_perturb(scores, cfg: AssignmentConfig, rng: Optional[np.random.Generator] = None) -> Tensor:
    """
    Добавить шум Гумбеля к оценкам

    Args:
        scores: Матрица S
        cfg: Параметры назначения; при gumbel_enabled=False вход возвращается без изменений
        rng: Генератор; по умолчанию создаётся из cfg.rng_seed
    """
    scores = as_tensor(scores)
    if not cfg.gumbel_enabled:
        return scores
    if rng is None:
        rng = np.random.default_rng(cfg.rng_seed)
    return scores + Tensor(sample_gumbel(scores.shape, rng))


def sinkhorn_normalize(
    perturbed,
    temperature: float,
    iters: int,
    col_capacity: Optional[Sequence] = None,
    blocks: Optional[Sequence[int]] = None,
) -> Tensor:
    """
    Чередовать нормализацию строк и столбцов exp(S'/τ) в лог-пространстве

    Строки батча сгруппированы в блоки (по одному на пример); массы столбцов
    считаются внутри блока, так что примеры не влияют друг на друга.

    Args:
        perturbed: Матрица S'
        temperature: τ > 0
        iters: Число пар (строки, столбцы)
        col_capacity: Предельная масса столбцов, форма (C,) или (число блоков, C);
            None = сбалансированный вариант (масса 1)
        blocks: Число строк в каждом блоке; None = вся матрица один блок

    Returns:
        M̃ с суммами строк ровно 1
    """
    if temperature <= 0:
        raise ValueError(f'temperature must be positive, got {temperature}')
    if iters < 1:
        raise ValueError(f'sinkhorn iterations must be >= 1, got {iters}')
    log_alpha = scale(as_tensor(perturbed), 1.0 / temperature)
    counts = [log_alpha.shape[0]] if blocks is None else [int(count) for count in blocks]
    owner = np.repeat(np.arange(len(counts)), counts)
    log_capacity = None
    if col_capacity is not None:
        capacity = np.asarray(col_capacity, dtype=np.float64)
        capacity = np.broadcast_to(capacity, (len(counts), capacity.shape[-1])) if capacity.ndim == 1 else capacity
        if capacity.shape != (len(counts), log_alpha.shape[1]) or np.any(capacity <= 0):
            raise ValueError(f'column capacities {capacity.tolist()} do not fit shape {log_alpha.shape}')
        log_capacity = Tensor(np.log(capacity)[owner])

    for _ in range(iters):
        log_alpha = sub(log_alpha, logsumexp(log_alpha, axis=1, keepdims=True))
        column_mass = segment_logsumexp(log_alpha, counts)
        if log_capacity is None:
            log_alpha = sub(log_alpha, column_mass)
        else:
            log_alpha = sub(log_alpha, relu(sub(column_mass, log_capacity)))
    log_alpha = sub(log_alpha, logsumexp(log_alpha, axis=1, keepdims=True))
    return exp(log_alpha)


def rule_capacities(rows: int, rules: int, pattern_len: int) -> List[float]:
    """Копирование может занять все строки, правило - не больше ceil(rows / Lp) непересекающихся срабатываний"""
    return [float(rows)] + [float(math.ceil(rows / pattern_len))] * rules


def hard_decode(soft, pattern_len: int, n_positions: Optional[int] = None) -> Tuple[np.ndarray, Applied]:
    """
    Жадное декодирование слева направо без перекрытий

    Args:
        soft: M̃, строки соответствуют окнам длины pattern_len
        pattern_len: Lp
        n_positions: Длина входа; по умолчанию rows + Lp - 1

    Returns:
        (M, applied); покрытые правилом строки принудительно копируются
    """
    probs = as_tensor(soft).data
    rows = probs.shape[0]
    if n_positions is None:
        n_positions = rows + pattern_len - 1
    hard = np.zeros_like(probs)
    applied: Applied = []
    position = 0
    while position < n_positions:
        if position >= rows:
            applied.append((position, COPY))
            position += 1
            continue
        column = int(np.argmax(probs[position]))
        hard[position, column] = 1.0
        if column == 0:
            applied.append((position, COPY))
            position += 1
            continue
        applied.append((position, column - 1))
        for covered in range(position + 1, min(position + pattern_len, rows)):
            hard[covered, 0] = 1.0
        position += pattern_len
    return hard, applied


def hard_from_applied(applied: Applied, rows: int, columns: int, pattern_len: int) -> np.ndarray:
    """Восстановить M по зафиксированному списку срабатываний"""
    hard = np.zeros((rows, columns))
    hard[:, 0] = 1.0
    for position, rule in applied:
        if rule == COPY or position >= rows:
            continue
        hard[position, 0] = 0.0
        hard[position, rule + 1] = 1.0
    return hard


def straight_through_gate(hard: np.ndarray, soft: Tensor) -> Tensor:
    """Прямой проход возвращает ровно M, обратный передаёт градиент в M̃"""
    hard = np.asarray(hard, dtype=np.float64)
    if hard.shape != soft.shape:
        raise ValueError(f'straight_through_gate: shapes {hard.shape} and {soft.shape} differ')
    return custom_op(hard.copy(), (soft,), 'straight_through', lambda g: (g,))


class AssignmentBatch:
    """
    Назначение для нескольких примеров сразу

    Attributes:
        scores, perturbed, soft: Упакованные матрицы, строки примеров идут подряд
        hard: Упакованная M
        applied: Остановки указателя для каждого примера
        blocks: Число строк окон у каждого примера
    """

    def __init__(self, scores: Tensor, perturbed: Tensor, soft: Tensor, hard: np.ndarray,
                 applied: List[Applied], blocks: List[int]):
        self.scores = scores
        self.perturbed = perturbed
        self.soft = soft
        self.hard = hard
        self.applied = applied
        self.blocks = blocks


def assign_batch(
    scores: Tensor,
    cfg: AssignmentConfig,
    pattern_len: int,
    blocks: Sequence[int],
    n_positions: Sequence[int],
    training: bool = False,
    rng: Optional[np.random.Generator] = None,
    col_capacity: Optional[Sequence] = None,
    frozen: Optional[Sequence[Optional[Applied]]] = None,
    gate_mode: str = 'straight_through',
) -> Tuple[Tensor, AssignmentBatch]:
    """
    Полный конвейер назначения правил для упакованного батча

    Args:
        scores: S с колонкой копирования в позиции 0, строки всех примеров подряд
        cfg: Параметры назначения
        pattern_len: Lp
        blocks: Число строк окон у каждого примера
        n_positions: Длина входа каждого примера
        training: Шум добавляется только при обучении
        rng: Генератор шума
        col_capacity: Ёмкости столбцов, форма (C,) или (число примеров, C)
        frozen: Готовые структуры срабатываний по примерам вместо декодирования
        gate_mode: 'straight_through' (значение = M) или 'soft' (значение = M̃)

    Returns:
        (gate, AssignmentBatch)
    """
    if gate_mode not in ('straight_through', 'soft'):
        raise ValueError(f'Unknown gate mode {gate_mode!r}')
    perturbed = gumbel_perturb(scores, cfg, rng) if training else scores
    soft = sinkhorn_normalize(perturbed, cfg.temperature, cfg.sinkhorn_iters, col_capacity, blocks)
    hard = np.zeros(soft.shape)
    applied: List[Applied] = []
    start = 0
    for index, rows in enumerate(blocks):
        fixed = frozen[index] if frozen is not None else None
        if fixed is None:
            block_hard, block_applied = hard_decode(soft.data[start:start + rows], pattern_len, n_positions[index])
        else:
            block_applied = list(fixed)
            block_hard = hard_from_applied(block_applied, rows, soft.shape[1], pattern_len)
        hard[start:start + rows] = block_hard
        applied.append(block_applied)
        start += rows
    gate = soft if gate_mode == 'soft' else straight_through_gate(hard, soft)
    return gate, AssignmentBatch(scores, perturbed, soft, hard, applied, list(blocks))


def assign(
    scores: Tensor,
    cfg: AssignmentConfig,
    pattern_len: int,
    n_positions: int,
    training: bool = False,
    rng: Optional[np.random.Generator] = None,
    col_capacity: Optional[Sequence[float]] = None,
    frozen_applied: Optional[Applied] = None,
    gate_mode: str = 'straight_through',
) -> Tuple[Tensor, AssignmentResult]:
    """Назначение для одной последовательности, см. assign_batch"""
    gate, batch = assign_batch(
        scores, cfg, pattern_len, [scores.shape[0]], [n_positions],
        training=training,
        rng=rng,
        col_capacity=col_capacity,
        frozen=[frozen_applied] if frozen_applied is not None else None,
        gate_mode=gate_mode,
    )
    return gate, AssignmentResult(batch.scores, batch.perturbed, batch.soft, batch.hard, batch.applied[0])


def structure_log_prob(scores: Tensor, blocks: Sequence[int], applied: Sequence[Applied]) -> Tensor:
    """
    Лог-вероятность выбранной структуры для каждого примера

    Суммирует log softmax(S)[i, выбор] по строкам, где указатель принимал решение;
    покрытые правилом и хвостовые позиции не считаются. Без упора в ёмкости
    argmax(S + G) распределён именно как softmax(S).

    Returns:
        Матрица (число примеров, 1)
    """
    rows: List[int] = []
    columns: List[int] = []
    owners: List[int] = []
    start = 0
    for index, (count, stops) in enumerate(zip(blocks, applied)):
        for position, rule in stops:
            if position < count:
                rows.append(start + position)
                columns.append(0 if rule == COPY else rule + 1)
                owners.append(index)
        start += count
    if not rows:
        return Tensor(np.zeros((len(blocks), 1)))
    membership = np.zeros((len(blocks), len(rows)))
    membership[owners, np.arange(len(rows))] = 1.0
    chosen = reshape(take(log_softmax_rows(scores), rows, columns), (len(rows), 1))
    return matmul(Tensor(membership), chosen)
