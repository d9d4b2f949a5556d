"""
Оценка моделей по точному совпадению
Exact-match evaluation of a model or a checkpoint on a dataset
"""
import logging
from pathlib import Path
from typing import List, Optional, Sequence, Union

from models import DatasetRecord
from config import Config
from rewritenet.model import RewriteModel, forward_batch, load_model
from tensorcore import no_grad
from tasks.dataset_io import read_records, write_predictions
from tasks.metrics import corpus_em

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


class VocabMismatchError(ValueError):
    """Данные содержат токены вне словаря модели"""


class EmptyDatasetError(ValueError):
    """Нет ни одного примера"""


class EvaluationResult:
    """EM по корпусу и построчные предсказания"""

    def __init__(self, em: float, rows: List[tuple]):
        self.em = em
        self.rows = rows

    @property
    def count(self) -> int:
        return len(self.rows)


def check_vocabulary(model: RewriteModel, records: Sequence[DatasetRecord]):
    known = set(model.vocab)
    unknown = sorted({token for record in records for token in record.src + record.tgt if token not in known})
    if unknown:
        preview = ' '.join(unknown[:10])
        raise VocabMismatchError(f'{len(unknown)} dataset tokens are not in the model vocabulary: {preview}')


def predict_batch(model: RewriteModel, sources: Sequence[Sequence[str]],
                  batch_size: int = Config.EVAL_BATCH_SIZE) -> List[List[str]]:
    """Предсказания без шума и dropout, по batch_size входов за проход"""
    predictions: List[List[str]] = []
    with no_grad():
        for start in range(0, len(sources), batch_size):
            chunk = [model.encode_source(src) for src in sources[start:start + batch_size]]
            out = forward_batch(model, chunk)
            predictions.extend(model.decode(ids) for ids in out.predicted)
    return predictions


def predict(model: RewriteModel, src: Sequence[str]) -> List[str]:
    return predict_batch(model, [src])[0]


def evaluate_model(model: RewriteModel, records: Sequence[DatasetRecord]) -> EvaluationResult:
    if not records:
        raise EmptyDatasetError('cannot evaluate on an empty dataset')
    check_vocabulary(model, records)
    predictions = predict_batch(model, [record.src for record in records])
    rows = [(record.src, pred, record.tgt) for record, pred in zip(records, predictions)]
    em = corpus_em([pred for _, pred, _ in rows], [tgt for _, _, tgt in rows],
                   pad=model.config.pad_token, eos=model.config.eos_token)
    return EvaluationResult(em, rows)


def evaluate_records(model: RewriteModel, records: Sequence[DatasetRecord]) -> float:
    return evaluate_model(model, records).em


def evaluate(checkpoint: PathLike, dataset: PathLike, predictions_path: Optional[PathLike] = None) -> EvaluationResult:
    """
    Оценить чекпойнт на файле данных

    Args:
        checkpoint: Путь к .ckpt (рядом лежит .model.cfg)
        dataset: Файл `src TAB tgt`
        predictions_path: Куда записать `src TAB pred TAB tgt`; None = не писать

    Returns:
        EvaluationResult
    """
    model = load_model(checkpoint)
    records = read_records(dataset)
    result = evaluate_model(model, records)
    if predictions_path is not None:
        write_predictions(result.rows, predictions_path)
        logger.info(f'Predictions written to {predictions_path}')
    logger.info(f'EM on {dataset}: {result.em:.4f} over {result.count} examples')
    return result
