"""
Deterministic finite-state transducers

Text format:
    states <k> init <s0>
    <s> <a> <s'> <b>      one line per transition
"""
import logging
from pathlib import Path
from typing import Dict, List, Sequence, Tuple, Union

logger = logging.getLogger(__name__)


class FstError(ValueError):
    """Ошибка описания или выполнения преобразователя"""


class Fst:
    """Детерминированный FST: не более одного перехода на пару (состояние, символ)"""

    def __init__(self, initial: str, states: Sequence[str] = ()):
        self.initial = initial
        self.states: List[str] = [initial] + [state for state in states if state != initial]
        self.transitions: Dict[Tuple[str, str], Tuple[str, str]] = {}

    def add_transition(self, state: str, symbol: str, target: str, output: str):
        key = (state, symbol)
        if key in self.transitions:
            raise FstError(f'duplicate transition from state {state!r} on symbol {symbol!r}')
        self.transitions[key] = (target, output)
        for name in (state, target):
            if name not in self.states:
                self.states.append(name)

    @property
    def input_alphabet(self) -> List[str]:
        return sorted({symbol for _, symbol in self.transitions})

    @property
    def output_alphabet(self) -> List[str]:
        return sorted({output for _, output in self.transitions.values()})

    def step(self, state: str, symbol: str) -> Tuple[str, str]:
        try:
            return self.transitions[(state, symbol)]
        except KeyError:
            raise FstError(f'no transition from state {state!r} on symbol {symbol!r}') from None


def fst_transduce(fst: Fst, tokens: Sequence[str]) -> List[str]:
    """Стандартный прогон: по одному выходному символу на входной"""
    state = fst.initial
    out: List[str] = []
    for symbol in tokens:
        state, emitted = fst.step(state, symbol)
        out.append(emitted)
    return out


def parse_fst(text: str, source: str = '<text>') -> Fst:
    lines = [
        (number, line.split())
        for number, line in enumerate(text.splitlines(), start=1)
        if line.strip() and not line.strip().startswith('#')
    ]
    if not lines:
        raise FstError(f'{source}: empty FST description')
    number, header = lines[0]
    if len(header) != 4 or header[0] != 'states' or header[2] != 'init':
        raise FstError(f'{source}: line {number}: expected "states <k> init <s0>"')
    try:
        declared = int(header[1])
    except ValueError:
        raise FstError(f'{source}: line {number}: state count {header[1]!r} is not an integer') from None

    fst = Fst(header[3])
    for number, words in lines[1:]:
        if len(words) != 4:
            raise FstError(f'{source}: line {number}: expected "s a s\' b", got {" ".join(words)!r}')
        try:
            fst.add_transition(*words)
        except FstError as exc:
            raise FstError(f'{source}: line {number}: {exc}') from None
    if len(fst.states) > declared:
        raise FstError(f'{source}: {len(fst.states)} states used but {declared} declared')
    return fst


def read_fst(path: Union[str, Path]) -> Fst:
    return parse_fst(Path(path).read_text(encoding='utf-8'), source=str(path))


def format_fst(fst: Fst) -> str:
    lines = [f'states {len(fst.states)} init {fst.initial}']
    for (state, symbol), (target, output) in fst.transitions.items():
        lines.append(f'{state} {symbol} {target} {output}')
    return '\n'.join(lines) + '\n'
