"""
Один слой переписывания: сопоставление шаблонов, назначение правил и сборка выхода
One rewrite layer: pattern matching, rule assignment and variable-length output assembly
"""
import logging
import math
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from schemas import LayerConfig
from rewritenet.sinkhorn_assign import (
    COPY,
    Applied,
    AssignmentBatch,
    AssignmentResult,
    assign_batch,
    rule_capacities,
    structure_log_prob,
)
from tensorcore import (
    Tensor,
    concat_cols,
    concat_rows,
    conv1d_valid,
    dropout,
    gather_rows,
    layer_norm,
    matmul,
    mul,
    reshape,
    scale,
    sub,
    sum as tsum,
    take,
)

logger = logging.getLogger(__name__)


class RuleBank:
    """
    Обучаемые правила слоя

    Attributes:
        patterns: P, форма (R, Lp, d)
        replacements: Q, форма (R, Lq, d); Lq = 0 означает удаление
        copy_bias: Смещение колонки копирования, форма (1,)
        ln_gain, ln_bias: Аффинные параметры нормализации перед сопоставлением
    """

    def __init__(self, patterns: Tensor, replacements: Tensor, copy_bias: Tensor, ln_gain: Tensor, ln_bias: Tensor):
        if patterns.ndim != 3 or replacements.ndim != 3:
            raise ValueError(f'Rule tensors must be 3-D, got {patterns.shape} and {replacements.shape}')
        if patterns.shape[0] < 1 or patterns.shape[1] < 1:
            raise ValueError(f'Rule bank needs R >= 1 and Lp >= 1, got patterns {patterns.shape}')
        if replacements.shape[0] != patterns.shape[0] or replacements.shape[2] != patterns.shape[2]:
            raise ValueError(f'Patterns {patterns.shape} and replacements {replacements.shape} disagree')
        self.patterns = patterns
        self.replacements = replacements
        self.copy_bias = copy_bias
        self.ln_gain = ln_gain
        self.ln_bias = ln_bias

    @property
    def rules(self) -> int:
        return self.patterns.shape[0]

    @property
    def pattern_len(self) -> int:
        return self.patterns.shape[1]

    @property
    def replacement_len(self) -> int:
        return self.replacements.shape[1]

    @property
    def dim(self) -> int:
        return self.patterns.shape[2]

    @classmethod
    def initialize(cls, cfg: LayerConfig, rng: np.random.Generator) -> 'RuleBank':
        """Нормальная инициализация со стандартным отклонением 1/√d"""
        std = 1.0 / math.sqrt(cfg.d)
        return cls(
            patterns=Tensor(rng.normal(0.0, std, (cfg.rules, cfg.pattern_len, cfg.d)), requires_grad=True),
            replacements=Tensor(rng.normal(0.0, std, (cfg.rules, cfg.replacement_len, cfg.d)), requires_grad=True),
            copy_bias=Tensor(np.full(1, cfg.copy_bias_init), requires_grad=True),
            ln_gain=Tensor(np.ones(cfg.d), requires_grad=True),
            ln_bias=Tensor(np.zeros(cfg.d), requires_grad=True),
        )

    def parameters(self) -> Dict[str, Tensor]:
        return {
            'patterns': self.patterns,
            'replacements': self.replacements,
            'copy_bias': self.copy_bias,
            'ln_gain': self.ln_gain,
            'ln_bias': self.ln_bias,
        }


class Segment:
    """Отрезок карты выравнивания: входы [in_start, in_end) дали выходы [out_start, out_end)"""

    def __init__(self, in_start: int, in_end: int, out_start: int, out_end: int, rule: int):
        self.in_start = in_start
        self.in_end = in_end
        self.out_start = out_start
        self.out_end = out_end
        self.rule = rule

    def __eq__(self, other):
        if not isinstance(other, Segment):
            return NotImplemented
        return (self.in_start, self.in_end, self.out_start, self.out_end, self.rule) == (
            other.in_start, other.in_end, other.out_start, other.out_end, other.rule
        )

    def __repr__(self):
        return f'<Segment in[{self.in_start},{self.in_end}) out[{self.out_start},{self.out_end}) rule={self.rule}>'


class LayerTrace:
    """Что произошло в слое за один проход"""

    def __init__(self, n_in: int, n_out: int, applied: Applied, segments: List[Segment],
                 assignment: Optional[AssignmentResult] = None):
        self.n_in = n_in
        self.n_out = n_out
        self.applied = applied
        self.segments = segments
        self.assignment = assignment

    @property
    def fires(self) -> Applied:
        return [(position, rule) for position, rule in self.applied if rule != COPY]


class LayerBatch:
    """
    Выход слоя для упакованного батча

    Attributes:
        y: Строки выходов всех примеров подряд
        lengths: Длина выхода каждого примера
        traces: LayerTrace каждого примера
        log_prob: Лог-вероятность выбранной структуры, форма (B, 1), если запрошена
        assignment: AssignmentBatch примеров, у которых были окна
    """

    def __init__(self, y: Tensor, lengths: List[int], traces: List[LayerTrace],
                 log_prob: Optional[Tensor] = None, assignment: Optional[AssignmentBatch] = None):
        self.y = y
        self.lengths = lengths
        self.traces = traces
        self.log_prob = log_prob
        self.assignment = assignment


def match_scores(x: Tensor, bank: RuleBank) -> Tensor:
    """S[i, r] = Σ_k <X[i+k], P[r, k]> / √d, форма (n - Lp + 1, R)"""
    n = x.shape[0]
    if n < bank.pattern_len:
        raise ValueError(f'Sequence of length {n} is shorter than pattern length {bank.pattern_len}')
    return scale(conv1d_valid(x, bank.patterns), 1.0 / math.sqrt(bank.dim))


def _offsets(lengths: Sequence[int]) -> List[int]:
    return [int(value) for value in np.concatenate([[0], np.cumsum(lengths)[:-1]])] if lengths else []


def apply_rewrites_batch(
    x: Tensor,
    lengths: Sequence[int],
    applied: Sequence[Applied],
    bank: RuleBank,
    gate: Optional[Tensor],
    gate_starts: Sequence[int],
    gate_rows: Sequence[int],
    copy_source: Optional[Tensor] = None,
    window_source: Optional[Tensor] = None,
    dropout_p: float = 0.0,
    training: bool = False,
    rng: Optional[np.random.Generator] = None,
) -> Tuple[Tensor, List[int], List[List[Segment]]]:
    """
    Собрать выходы всех примеров батча за один набор операций

    Позиции примера b без строки затвора (хвост короче Lp) копируются с затвором 1.

    Args:
        x: Упакованный вход (N, d)
        lengths: Длина каждого примера
        applied: Остановки указателя каждого примера
        bank: Банк правил
        gate: Упакованная матрица затворов или None, если окон нет ни у одного примера
        gate_starts: Первая строка затвора каждого примера
        gate_rows: Число строк затвора каждого примера

    Returns:
        (Y, длины выходов, карты выравнивания)
    """
    copy_source = x if copy_source is None else copy_source
    window_source = x if window_source is None else window_source
    d = x.shape[1]
    lp, lq = bank.pattern_len, bank.replacement_len
    columns = 1 + bank.rules
    spare = 0 if gate is None else gate.shape[0]

    copy_rows: List[int] = []
    copy_gate_rows: List[int] = []
    fire_gate_rows: List[int] = []
    fire_cols: List[int] = []
    fire_rules: List[int] = []
    window_rows: List[int] = []
    layout: List[Tuple[bool, int]] = []  # (копия?, номер)
    out_lengths: List[int] = []
    segments: List[List[Segment]] = []
    for offset, stops, start, rows in zip(_offsets(lengths), applied, gate_starts, gate_rows):
        out = 0
        example_segments: List[Segment] = []
        for position, rule in stops:
            if rule == COPY:
                layout.append((True, len(copy_rows)))
                copy_rows.append(offset + position)
                copy_gate_rows.append(start + position if position < rows else spare)
                example_segments.append(Segment(position, position + 1, out, out + 1, COPY))
                out += 1
            else:
                layout.append((False, len(fire_rules)))
                fire_gate_rows.append(start + position)
                fire_cols.append(rule + 1)
                fire_rules.append(rule)
                window_rows.extend(offset + position + k for k in range(lp))
                example_segments.append(Segment(position, position + lp, out, out + lq, rule))
                out += lq
        out_lengths.append(out)
        segments.append(example_segments)

    if sum(out_lengths) == 0:
        return Tensor(np.zeros((0, d))), out_lengths, segments

    ones = Tensor(np.ones((1, columns)))
    padded_gate = ones if gate is None else concat_rows([gate, ones])
    pieces: List[Tensor] = []
    if copy_rows:
        copy_gate = reshape(take(padded_gate, copy_gate_rows, [0] * len(copy_rows)), (len(copy_rows), 1))
        pieces.append(mul(gather_rows(copy_source, copy_rows), copy_gate))
    if fire_rules and lq > 0:
        fires = len(fire_rules)
        fire_gate = reshape(take(padded_gate, fire_gate_rows, fire_cols), (fires, 1))
        windows = reshape(gather_rows(window_source, window_rows), (fires, lp, d))
        window_mean = scale(tsum(windows, axis=1), 1.0 / lp)
        per_row = np.repeat(np.arange(fires), lq)
        q_rows = gather_rows(
            reshape(bank.replacements, (bank.rules * lq, d)),
            [rule * lq + k for rule in fire_rules for k in range(lq)],
        )
        row_gate = gather_rows(fire_gate, per_row)
        blended = mul(row_gate, q_rows) + mul(sub(1.0, row_gate), gather_rows(window_mean, per_row))
        pieces.append(dropout(blended, dropout_p, rng, training))
    pool = pieces[0] if len(pieces) == 1 else concat_rows(pieces)

    n_copies = len(copy_rows)
    order: List[int] = []
    for is_copy, k in layout:
        if is_copy:
            order.append(k)
        else:
            order.extend(n_copies + k * lq + j for j in range(lq))
    return gather_rows(pool, order), out_lengths, segments


def apply_rewrites(
    x: Tensor,
    applied: Applied,
    bank: RuleBank,
    gate: Tensor,
    copy_source: Optional[Tensor] = None,
    window_source: Optional[Tensor] = None,
    dropout_p: float = 0.0,
    training: bool = False,
    rng: Optional[np.random.Generator] = None,
) -> Tuple[Tensor, List[Segment]]:
    """
    Собрать выход одной последовательности слева направо по остановкам указателя

    Копирование выдаёт gate[i, copy] · copy_source[i]; правило r в позиции i выдаёт Lq строк
    gate[i, r] · Q[r] + (1 - gate[i, r]) · mean(window_source[i : i + Lp]).

    Args:
        x: Вход (n, d)
        applied: Остановки указателя (позиция, правило или COPY)
        bank: Банк правил
        gate: Матрица затворов (строки окон, 1 + R)
        copy_source: Строки для копирования (по умолчанию x)
        window_source: Строки для усреднения заменяемого окна (по умолчанию x)
        dropout_p: Dropout на переписанных строках

    Returns:
        (Y, карта выравнивания)
    """
    y, _, segments = apply_rewrites_batch(
        x, [x.shape[0]], [applied], bank, gate, [0], [gate.shape[0]],
        copy_source=copy_source,
        window_source=window_source,
        dropout_p=dropout_p,
        training=training,
        rng=rng,
    )
    return y, segments[0]


def layer_forward_batch(
    x: Tensor,
    lengths: Sequence[int],
    cfg: LayerConfig,
    bank: RuleBank,
    training: bool = False,
    rng: Optional[np.random.Generator] = None,
    frozen: Optional[Sequence[Optional[Applied]]] = None,
    gate_mode: str = 'straight_through',
    with_log_prob: bool = False,
) -> LayerBatch:
    """
    Pre-norm, сопоставление, назначение и переписывание для упакованного батча

    Копируемые строки несут вход X (с остаточной связью) или нормализованный вход (без неё);
    переписанные строки остаточной связи не получают. Окна не пересекают границы примеров,
    Sinkhorn нормирует столбцы внутри каждого примера.

    Args:
        x: Строки всех примеров подряд
        lengths: Длина каждого примера
        frozen: Зафиксированные списки срабатываний по примерам
        with_log_prob: Посчитать лог-вероятность выбранной структуры

    Returns:
        LayerBatch
    """
    lengths = [int(n) for n in lengths]
    if x.shape[0] != sum(lengths):
        raise ValueError(f'Packed input has {x.shape[0]} rows, lengths sum to {sum(lengths)}')
    lp = bank.pattern_len
    applied: List[Applied] = [[(position, COPY) for position in range(n)] for n in lengths]
    if x.shape[0] == 0:
        traces = [LayerTrace(0, 0, [], []) for _ in lengths]
        return LayerBatch(x, lengths, traces, Tensor(np.zeros((len(lengths), 1))) if with_log_prob else None)

    normed = layer_norm(x, bank.ln_gain, bank.ln_bias)
    copy_source = x if cfg.residual_enabled else normed
    offsets = _offsets(lengths)
    rows = [max(0, n - lp + 1) for n in lengths]
    active = [index for index, count in enumerate(rows) if count > 0]
    gate_starts = [0] * len(lengths)
    gate_rows = [0] * len(lengths)

    gate: Optional[Tensor] = None
    batch: Optional[AssignmentBatch] = None
    log_prob: Optional[Tensor] = None
    if active:
        rule_scores = match_scores(normed, bank)
        starts = [offsets[index] + i for index in active for i in range(rows[index])]
        if len(starts) != rule_scores.shape[0]:
            rule_scores = gather_rows(rule_scores, starts)
        total = len(starts)
        copy_column = mul(Tensor(np.ones((total, 1))), bank.copy_bias)
        scores = concat_cols([copy_column, rule_scores])
        blocks = [rows[index] for index in active]
        capacity = np.array([rule_capacities(count, bank.rules, lp) for count in blocks])
        gate, batch = assign_batch(
            scores,
            cfg.assignment,
            lp,
            blocks,
            [lengths[index] for index in active],
            training=training,
            rng=rng,
            col_capacity=capacity,
            frozen=[frozen[index] for index in active] if frozen is not None else None,
            gate_mode=gate_mode,
        )
        cursor = 0
        for k, index in enumerate(active):
            applied[index] = batch.applied[k]
            gate_starts[index] = cursor
            gate_rows[index] = blocks[k]
            cursor += blocks[k]
        if with_log_prob:
            log_prob = structure_log_prob(scores, blocks, batch.applied)
            if len(active) != len(lengths):
                spread = np.zeros((len(lengths), len(active)))
                spread[active, np.arange(len(active))] = 1.0
                log_prob = matmul(Tensor(spread), log_prob)
    elif with_log_prob:
        log_prob = Tensor(np.zeros((len(lengths), 1)))

    y, out_lengths, segments = apply_rewrites_batch(
        x,
        lengths,
        applied,
        bank,
        gate,
        gate_starts,
        gate_rows,
        copy_source=copy_source,
        window_source=normed,
        dropout_p=cfg.dropout,
        training=training,
        rng=rng,
    )
    traces = [
        LayerTrace(n, m, stops, example_segments)
        for n, m, stops, example_segments in zip(lengths, out_lengths, applied, segments)
    ]
    return LayerBatch(y, out_lengths, traces, log_prob, batch)


def layer_forward(
    x: Tensor,
    cfg: LayerConfig,
    bank: RuleBank,
    training: bool = False,
    rng: Optional[np.random.Generator] = None,
    frozen_applied: Optional[Applied] = None,
    gate_mode: str = 'straight_through',
) -> Tuple[Tensor, LayerTrace]:
    """
    Слой для одной последовательности, см. layer_forward_batch

    Returns:
        (Y, LayerTrace)
    """
    out = layer_forward_batch(
        x, [x.shape[0]], cfg, bank,
        training=training,
        rng=rng,
        frozen=[frozen_applied] if frozen_applied is not None else None,
        gate_mode=gate_mode,
    )
    trace = out.traces[0]
    if out.assignment is not None:
        batch = out.assignment
        trace.assignment = AssignmentResult(batch.scores, batch.perturbed, batch.soft, batch.hard, batch.applied[0])
    return out.y, trace
