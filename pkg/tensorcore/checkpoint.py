"""
Checkpoint files: a text header followed by raw little-endian float64 arrays

Layout:
    REWRITENET-CHECKPOINT 1
    <name> float64 [<e0>,<e1>,...] <byte offset into payload>
    ...
    END
    <payload>
"""
import logging
from pathlib import Path
from typing import Dict, Union

import numpy as np

from tensorcore.optim import ParameterRegistry

logger = logging.getLogger(__name__)

MAGIC = 'REWRITENET-CHECKPOINT 1'
END = 'END'
DTYPE = np.dtype('<f8')

PathLike = Union[str, Path]


def adam_path(path: PathLike) -> Path:
    """Путь файла состояния Adam рядом с чекпойнтом"""
    return Path(path).with_suffix('.adam')


def save_arrays(path: PathLike, arrays: Dict[str, np.ndarray]):
    lines = [MAGIC]
    offset = 0
    for name, array in arrays.items():
        if not name or any(ch.isspace() for ch in name):
            raise ValueError(f'Invalid array name {name!r}')
        shape = ','.join(str(extent) for extent in np.shape(array))
        lines.append(f'{name} float64 [{shape}] {offset}')
        offset += int(np.size(array)) * DTYPE.itemsize
    lines.append(END)

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'wb') as handle:
        handle.write(('\n'.join(lines) + '\n').encode('utf-8'))
        for array in arrays.values():
            handle.write(np.ascontiguousarray(array, dtype=DTYPE).tobytes())


def load_arrays(path: PathLike) -> Dict[str, np.ndarray]:
    raw = Path(path).read_bytes()
    marker = ('\n' + END + '\n').encode('utf-8')
    cut = raw.find(marker)
    if cut < 0:
        raise ValueError(f'{path}: checkpoint header is not terminated by {END}')
    header = raw[:cut].decode('utf-8').split('\n')
    payload = raw[cut + len(marker):]
    if not header or header[0] != MAGIC:
        raise ValueError(f'{path}: not a checkpoint file')

    arrays: Dict[str, np.ndarray] = {}
    for number, line in enumerate(header[1:], start=2):
        parts = line.split()
        if len(parts) != 4 or parts[1] != 'float64':
            raise ValueError(f'{path}: malformed header line {number}: {line!r}')
        name, _, shape_text, offset_text = parts
        shape_body = shape_text.strip('[]')
        shape = tuple(int(extent) for extent in shape_body.split(',')) if shape_body else ()
        offset = int(offset_text)
        count = int(np.prod(shape)) if shape else 1
        end = offset + count * DTYPE.itemsize
        if end > len(payload):
            raise ValueError(f'{path}: array {name!r} runs past the end of the file')
        arrays[name] = np.frombuffer(payload[offset:end], dtype=DTYPE).reshape(shape).astype(np.float64)
    return arrays


def save_checkpoint(path: PathLike, registry: ParameterRegistry):
    """Сохранить параметры и (в соседний файл .adam) состояние оптимизатора"""
    save_arrays(path, registry.arrays())
    save_arrays(adam_path(path), registry.adam_arrays())
    logger.debug(f'Checkpoint written to {path}')


def load_checkpoint(path: PathLike, registry: ParameterRegistry, with_adam: bool = True):
    registry.load_arrays(load_arrays(path))
    state_path = adam_path(path)
    if with_adam and state_path.exists():
        registry.load_adam_arrays(load_arrays(state_path))
