"""
Dataset files: one record per line, `src tokens TAB tgt tokens`, UTF-8
"""
import logging
from pathlib import Path
from typing import List, Sequence, Union

from models import DatasetRecord

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


class DatasetFormatError(ValueError):
    """Некорректная строка файла данных"""

    def __init__(self, path: str, line_number: int, message: str):
        super().__init__(f'{path}: line {line_number}: {message}')
        self.path = path
        self.line_number = line_number


def format_record(record: DatasetRecord) -> str:
    return ' '.join(record.src) + '\t' + ' '.join(record.tgt)


def parse_record(line: str, path: str = '<text>', line_number: int = 1) -> DatasetRecord:
    fields = line.split('\t')
    if len(fields) != 2:
        raise DatasetFormatError(path, line_number, f'expected exactly one TAB, found {len(fields) - 1}')
    return DatasetRecord(fields[0].split(), fields[1].split())


def write_records(records: Sequence[DatasetRecord], path: PathLike):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8', newline='\n') as handle:
        for record in records:
            handle.write(format_record(record) + '\n')


def read_records(path: PathLike) -> List[DatasetRecord]:
    records: List[DatasetRecord] = []
    with open(path, 'r', encoding='utf-8') as handle:
        for number, raw in enumerate(handle, start=1):
            line = raw.rstrip('\n')
            if not line.strip():
                continue
            records.append(parse_record(line, str(path), number))
    return records


def write_predictions(rows: Sequence[tuple], path: PathLike):
    """Строки `src TAB pred TAB tgt`"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8', newline='\n') as handle:
        for src, pred, tgt in rows:
            handle.write(' '.join(src) + '\t' + ' '.join(pred) + '\t' + ' '.join(tgt) + '\n')
