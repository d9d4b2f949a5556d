"""
SCAN-подобная грамматика команд и её композиционный интерпретатор
SCAN-like commands with a length split on the action-sequence length

Interpretation: the action token comes first and is followed by its direction;
"turn" contributes only the direction; "opposite" doubles the direction; "around"
repeats (action, direction) four times; "twice"/"thrice" repeat a phrase;
"x and y" keeps clause order, "x after y" swaps it.
"""
import logging
from typing import Iterator, List, Sequence

import numpy as np

from models import DatasetRecord
from schemas import SplitSpec

logger = logging.getLogger(__name__)

ACTIONS = {'walk': 'WALK', 'run': 'RUN', 'jump': 'JUMP', 'look': 'LOOK'}
DIRECTIONS = {'left': 'LEFT', 'right': 'RIGHT'}
REPEATS = {'twice': 2, 'thrice': 3}
CONJUNCTIONS = ('and', 'after')

# число команд полной грамматики
GRAMMAR_SIZE = 20910


def scan_vocabulary() -> List[str]:
    words = list(ACTIONS) + ['turn'] + list(DIRECTIONS) + ['opposite', 'around'] + list(REPEATS) + list(CONJUNCTIONS)
    outputs = list(ACTIONS.values()) + list(DIRECTIONS.values())
    return words + outputs


def _interpret_verb(words: Sequence[str]) -> List[str]:
    if len(words) == 1 and words[0] in ACTIONS:
        return [ACTIONS[words[0]]]
    if not words or (words[0] not in ACTIONS and words[0] != 'turn'):
        raise ValueError(f'not a verb phrase: {" ".join(words)!r}')
    action = [ACTIONS[words[0]]] if words[0] in ACTIONS else []
    if len(words) == 2 and words[1] in DIRECTIONS:
        return action + [DIRECTIONS[words[1]]]
    if len(words) == 3 and words[2] in DIRECTIONS:
        direction = DIRECTIONS[words[2]]
        if words[1] == 'opposite':
            return action + [direction, direction]
        if words[1] == 'around':
            return (action + [direction]) * 4
    raise ValueError(f'not a verb phrase: {" ".join(words)!r}')


def _interpret_phrase(words: Sequence[str]) -> List[str]:
    if words and words[-1] in REPEATS:
        return _interpret_verb(words[:-1]) * REPEATS[words[-1]]
    return _interpret_verb(words)


def interpret(command: Sequence[str]) -> List[str]:
    """
    Перевести команду в последовательность действий

    Example:
        "jump left twice" -> JUMP LEFT JUMP LEFT
    """
    words = list(command)
    for conjunction in CONJUNCTIONS:
        if conjunction in words:
            cut = words.index(conjunction)
            first, second = _interpret_phrase(words[:cut]), _interpret_phrase(words[cut + 1:])
            return first + second if conjunction == 'and' else second + first
    return _interpret_phrase(words)


def _verb_phrases() -> Iterator[List[str]]:
    for action in ACTIONS:
        yield [action]
    for head in list(ACTIONS) + ['turn']:
        for direction in DIRECTIONS:
            yield [head, direction]
            yield [head, 'opposite', direction]
            yield [head, 'around', direction]


def _phrases() -> List[List[str]]:
    phrases = []
    for verb in _verb_phrases():
        phrases.append(verb)
        for repeat in REPEATS:
            phrases.append(verb + [repeat])
    return phrases


def enumerate_commands() -> Iterator[List[str]]:
    """Все команды грамматики в фиксированном порядке"""
    phrases = _phrases()
    for phrase in phrases:
        yield phrase
    for first in phrases:
        for second in phrases:
            for conjunction in CONJUNCTIONS:
                yield first + [conjunction] + second


def gen_scan(split: SplitSpec) -> List[DatasetRecord]:
    """
    Выборка length split

    train и valid берутся из команд с длиной действий <= max_train_action_len
    (train - с начала перестановки, valid - с конца, поэтому они не пересекаются,
    пока их суммарный размер не превышает пул); test - из более длинных.
    """
    threshold = split.max_train_action_len
    short, long = [], []
    for command in enumerate_commands():
        actions = interpret(command)
        (short if len(actions) <= threshold else long).append(DatasetRecord(command, actions))

    pool = long if split.name == 'test' else short
    rng = np.random.default_rng(split.rng_seed)
    order = rng.permutation(len(pool))
    if split.name == 'valid':
        order = order[::-1]
    if split.size > len(pool):
        logger.warning(f'SCAN {split.name}: requested {split.size} samples, pool holds {len(pool)}')
    chosen = [pool[index] for index in order[:split.size]]
    logger.debug(f'SCAN {split.name}: {len(chosen)} of {len(pool)} commands (threshold {threshold})')
    return chosen
