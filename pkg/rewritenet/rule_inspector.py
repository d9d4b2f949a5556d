"""
Human-readable view of learned rules: nearest vocabulary token per pattern and replacement row
"""
import logging
from typing import List, Sequence

import numpy as np

from models import DatasetRecord, RuleDecoding
from rewritenet.model import RewriteModel, forward_batch
from tensorcore import no_grad
from rewritenet.rewrite_layer import RuleBank

logger = logging.getLogger(__name__)


def _nearest(rows: np.ndarray, embedding: np.ndarray, vocab: Sequence[str]):
    """Косинусная близость; нулевая норма даёт близость 0, ничьи решаются меньшим id"""
    if rows.shape[0] == 0:
        return []
    row_norms = np.linalg.norm(rows, axis=1, keepdims=True)
    emb_norms = np.linalg.norm(embedding, axis=1, keepdims=True)
    safe_rows = np.divide(rows, row_norms, out=np.zeros_like(rows), where=row_norms > 0)
    safe_emb = np.divide(embedding, emb_norms, out=np.zeros_like(embedding), where=emb_norms > 0)
    similarity = safe_rows @ safe_emb.T
    best = np.argmax(similarity, axis=1)
    return [(vocab[index], float(similarity[row, index])) for row, index in enumerate(best)]


def inspect_rules(bank: RuleBank, embedding: np.ndarray, vocab: Sequence[str], layer: int = 0) -> List[RuleDecoding]:
    """
    Расшифровать каждое правило банка

    Args:
        bank: Банк правил
        embedding: Матрица эмбеддингов (V, d)
        vocab: Токены в порядке строк embedding
        layer: Номер слоя для отчёта
    """
    decodings = []
    for rule in range(bank.rules):
        decodings.append(RuleDecoding(
            layer=layer,
            rule=rule,
            pattern=_nearest(bank.patterns.data[rule], embedding, vocab),
            replacement=_nearest(bank.replacements.data[rule], embedding, vocab),
        ))
    return decodings


def count_rule_fires(model: RewriteModel, records: Sequence[DatasetRecord], batch_size: int = 256) -> np.ndarray:
    """Матрица (K, R) числа срабатываний правил на входах records в режиме оценки"""
    counts = np.zeros((len(model.banks), max((bank.rules for bank in model.banks), default=0)), dtype=np.int64)
    with no_grad():
        for start in range(0, len(records), batch_size):
            chunk = [model.encode_source(record.src) for record in records[start:start + batch_size]]
            for traces in forward_batch(model, chunk).traces:
                for k, trace in enumerate(traces):
                    for _, rule in trace.fires:
                        counts[k, rule] += 1
    return counts


def inspect_model(model: RewriteModel, records: Sequence[DatasetRecord] = ()) -> List[RuleDecoding]:
    """Расшифровки всех слоёв с числом срабатываний на records"""
    counts = count_rule_fires(model, records)
    decodings: List[RuleDecoding] = []
    for k, bank in enumerate(model.banks):
        for decoding in inspect_rules(bank, model.embedding.data, model.vocab, layer=k):
            decoding.fires = int(counts[k, decoding.rule])
            decodings.append(decoding)
    return decodings
