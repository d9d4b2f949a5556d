"""
Стек слоёв переписывания с общим словарём и связанными эмбеддингами
Stacked rewrite layers over a shared vocabulary with tied-embedding decoding
"""
import logging
import math
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from schemas import ModelConfig
from rewritenet.rewrite_layer import LayerTrace, RuleBank, layer_forward_batch
from rewritenet.sinkhorn_assign import Applied
from tensorcore import (
    ParameterRegistry,
    Tensor,
    add,
    concat_rows,
    cross_entropy,
    detach,
    gather_rows,
    load_checkpoint,
    log_softmax_rows,
    matmul,
    no_grad,
    reshape,
    save_checkpoint,
    scale,
    sub,
    transpose,
)
from utils.kv_config import model_config_from_text, model_config_to_text

logger = logging.getLogger(__name__)

# логит PAD на позициях за концом выхода модели
PAD_LOGIT = 10.0

PathLike = Union[str, Path]


class RewriteModel:
    """
    Эмбеддинги, банки правил и служебные преобразования токенов

    Args:
        config: Конфигурация модели
        embedding: Матрица (V, d)
        banks: По одному банку правил на слой
    """

    def __init__(self, config: ModelConfig, embedding: Tensor, banks: List[RuleBank]):
        if embedding.shape != (len(config.vocab), config.d):
            raise ValueError(f'Embedding shape {embedding.shape} does not match vocab/d of the config')
        if len(banks) != len(config.layers):
            raise ValueError(f'{len(banks)} rule banks for {len(config.layers)} configured layers')
        self.config = config
        self.embedding = embedding
        self.banks = banks
        self.token_ids = {token: index for index, token in enumerate(config.vocab)}
        self.pad_id = self.token_ids[config.pad_token]
        self.eos_id = self.token_ids[config.eos_token]
        self._registry = ParameterRegistry()
        self._registry.register('embedding', embedding)
        for k, bank in enumerate(banks):
            for name, tensor in bank.parameters().items():
                self._registry.register(f'layer{k}.{name}', tensor)

    @classmethod
    def initialize(cls, config: ModelConfig, rng: np.random.Generator) -> 'RewriteModel':
        std = 1.0 / math.sqrt(config.d)
        embedding = Tensor(rng.normal(0.0, std, (len(config.vocab), config.d)), requires_grad=True)
        banks = [RuleBank.initialize(layer, rng) for layer in config.layers]
        return cls(config, embedding, banks)

    @property
    def vocab(self) -> List[str]:
        return self.config.vocab

    def registry(self) -> ParameterRegistry:
        return self._registry

    def encode(self, tokens: Sequence[str]) -> List[int]:
        unknown = [token for token in tokens if token not in self.token_ids]
        if unknown:
            raise ValueError(f'Tokens outside the model vocabulary: {" ".join(sorted(set(unknown)))}')
        return [self.token_ids[token] for token in tokens]

    def encode_source(self, tokens: Sequence[str]) -> List[int]:
        return self.encode(tokens) + [self.eos_id]

    def target_ids(self, tokens: Sequence[str]) -> List[int]:
        """tgt + EOS, дополненные PAD (или обрезанные) до max_output_len"""
        ids = (self.encode(tokens) + [self.eos_id])[: self.config.max_output_len]
        return ids + [self.pad_id] * (self.config.max_output_len - len(ids))

    def decode(self, ids: Sequence[int]) -> List[str]:
        """Токены до первого EOS, без PAD"""
        tokens: List[str] = []
        for index in ids:
            if index == self.eos_id:
                break
            if index != self.pad_id:
                tokens.append(self.vocab[index])
        return tokens


class ModelOutput:
    """Логиты (max_output_len, V), предсказанные id и трассы слоёв"""

    def __init__(self, logits: Tensor, predicted: List[int], truncated: bool, traces: List[LayerTrace]):
        self.logits = logits
        self.predicted = predicted
        self.truncated = truncated
        self.traces = traces


class BatchOutput:
    """
    Выход модели для батча

    Attributes:
        logits: Упакованные логиты (B · max_output_len, V)
        predicted: Предсказанные id каждого примера
        truncated: Флаг обрезки каждого примера
        traces: Трассы слоёв каждого примера
        log_prob: Сумма лог-вероятностей выбранных структур по слоям, форма (B, 1)
    """

    def __init__(self, logits: Tensor, predicted: List[List[int]], truncated: List[bool],
                 traces: List[List[LayerTrace]], log_prob: Optional[Tensor] = None):
        self.logits = logits
        self.predicted = predicted
        self.truncated = truncated
        self.traces = traces
        self.log_prob = log_prob


def forward_batch(
    model: RewriteModel,
    batch_ids: Sequence[Sequence[int]],
    training: bool = False,
    rng: Optional[np.random.Generator] = None,
    frozen: Optional[Sequence[Sequence[Applied]]] = None,
    gate_mode: str = 'straight_through',
    with_log_prob: bool = False,
) -> BatchOutput:
    """
    Эмбеддинг, K слоёв и декодирование для нескольких входов сразу

    Args:
        model: Модель
        batch_ids: Индексы токенов каждого входа
        training: Режим обучения (шум Гумбеля и dropout)
        rng: Генератор случайных чисел запуска
        frozen: Для каждого примера зафиксированные списки срабатываний по слоям
        gate_mode: Режим затвора, см. sinkhorn_assign.assign_batch
        with_log_prob: Посчитать лог-вероятность выбранной структуры

    Returns:
        BatchOutput; выход длиннее max_output_len обрезается с флагом truncated
    """
    sequences = [list(ids) for ids in batch_ids]
    if not sequences:
        raise ValueError('Empty batch')
    vocab_size = len(model.vocab)
    for ids in sequences:
        if ids and (min(ids) < 0 or max(ids) >= vocab_size):
            raise ValueError(f'Token id outside [0, {vocab_size})')

    lengths = [len(ids) for ids in sequences]
    x = gather_rows(model.embedding, [index for ids in sequences for index in ids])
    traces: List[List[LayerTrace]] = [[] for _ in sequences]
    log_prob: Optional[Tensor] = None
    for k, (layer_cfg, bank) in enumerate(zip(model.config.layers, model.banks)):
        layer = layer_forward_batch(
            x,
            lengths,
            layer_cfg,
            bank,
            training=training,
            rng=rng,
            frozen=[structure[k] for structure in frozen] if frozen is not None else None,
            gate_mode=gate_mode,
            with_log_prob=with_log_prob,
        )
        x, lengths = layer.y, layer.lengths
        for example, trace in zip(traces, layer.traces):
            example.append(trace)
        if layer.log_prob is not None:
            log_prob = layer.log_prob if log_prob is None else add(log_prob, layer.log_prob)

    length = model.config.max_output_len
    padding = np.zeros((1, vocab_size))
    padding[0, model.pad_id] = PAD_LOGIT
    pool = concat_rows([matmul(x, transpose(model.embedding)), Tensor(padding)])
    pad_row = pool.shape[0] - 1
    index: List[int] = []
    offset = 0
    for produced in lengths:
        index.extend(offset + position if position < produced else pad_row for position in range(length))
        offset += produced
    logits = gather_rows(pool, index)
    predicted = np.argmax(logits.data, axis=1).reshape(len(sequences), length)
    return BatchOutput(
        logits,
        [[int(value) for value in row] for row in predicted],
        [produced > length for produced in lengths],
        traces,
        log_prob,
    )


def model_forward(
    model: RewriteModel,
    ids: Sequence[int],
    training: bool = False,
    rng: Optional[np.random.Generator] = None,
    frozen: Optional[Sequence[Applied]] = None,
    gate_mode: str = 'straight_through',
) -> ModelOutput:
    """
    Прямой проход для одного входа

    Args:
        model: Модель
        ids: Индексы токенов входа
        training: Режим обучения (шум Гумбеля и dropout)
        rng: Генератор случайных чисел запуска
        frozen: Зафиксированные списки срабатываний по слоям
        gate_mode: Режим затвора, см. sinkhorn_assign.assign

    Returns:
        ModelOutput; выход длиннее max_output_len обрезается с флагом truncated
    """
    out = forward_batch(
        model, [ids], training=training, rng=rng,
        frozen=[frozen] if frozen is not None else None,
        gate_mode=gate_mode,
    )
    return ModelOutput(out.logits, out.predicted[0], out.truncated[0], out.traces[0])


def sequence_nll(logits: np.ndarray, targets: np.ndarray, mask: np.ndarray, batch: int) -> np.ndarray:
    """Средняя по незамаскированным позициям потеря каждого примера, форма (B,)"""
    log_probs = log_softmax_rows(Tensor(logits)).data
    picked = -log_probs[np.arange(targets.shape[0]), targets] * mask
    counts = mask.reshape(batch, -1).sum(axis=1)
    return picked.reshape(batch, -1).sum(axis=1) / np.maximum(counts, 1)


def batch_loss(
    model: RewriteModel,
    pairs: Sequence[Tuple[Sequence[int], Sequence[int]]],
    training: bool = False,
    rng: Optional[np.random.Generator] = None,
    frozen: Optional[Sequence[Sequence[Applied]]] = None,
    gate_mode: str = 'straight_through',
    structure_weight: float = 0.0,
) -> Tensor:
    """
    Средняя кросс-энтропия по позициям цели, отличным от PAD

    При обучении с structure_weight > 0 к градиенту добавляется самокритичный член:
    структура, выбранная с шумом, сравнивается с жадной структурой той же модели, и
    лог-вероятность выбора растёт, если выбор дал потерю меньше жадной, и падает иначе.
    Значение потери этот член не меняет.

    Args:
        pairs: (id входа с EOS, id цели после target_ids) для каждого примера
        structure_weight: Вес самокритичного члена
    """
    sources = [src for src, _ in pairs]
    targets = np.asarray([index for _, tgt in pairs for index in tgt], dtype=np.int64)
    mask = targets != model.pad_id
    self_critical = training and structure_weight > 0 and frozen is None
    out = forward_batch(
        model, sources, training=training, rng=rng, frozen=frozen, gate_mode=gate_mode,
        with_log_prob=self_critical,
    )
    loss = cross_entropy(out.logits, targets, mask)
    if not self_critical or out.log_prob is None or not out.log_prob.requires_grad:
        return loss

    with no_grad():
        greedy = forward_batch(model, sources)
    advantage = (
        sequence_nll(out.logits.data, targets, mask, len(pairs))
        - sequence_nll(greedy.logits.data, targets, mask, len(pairs))
    )
    surrogate = reshape(matmul(Tensor(advantage[None, :] / len(pairs)), out.log_prob), ())
    return loss + scale(sub(surrogate, detach(surrogate)), structure_weight)


def model_config_path(path: PathLike) -> Path:
    return Path(path).with_suffix('.model.cfg')


def save_model(model: RewriteModel, path: PathLike):
    """Чекпойнт параметров, состояние Adam и конфигурация модели рядом"""
    save_checkpoint(path, model.registry())
    model_config_path(path).write_text(model_config_to_text(model.config), encoding='utf-8')


def load_model(path: PathLike, with_adam: bool = False) -> RewriteModel:
    config_path = model_config_path(path)
    if not config_path.exists():
        raise FileNotFoundError(f'Model config {config_path} not found next to checkpoint {path}')
    config = model_config_from_text(config_path.read_text(encoding='utf-8'))
    model = RewriteModel.initialize(config, np.random.default_rng(0))
    load_checkpoint(path, model.registry(), with_adam=with_adam)
    logger.info(f'Loaded model with {len(config.layers)} layers and {len(config.vocab)} tokens from {path}')
    return model
