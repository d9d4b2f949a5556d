"""
Дискретное параллельное переписывание
Exact left-to-right rewriting over token lists: the oracle for rewrite layers
"""
import logging
from pathlib import Path
from typing import List, Sequence, Tuple, Union

from models import DiscreteRule

logger = logging.getLogger(__name__)

COPY = -1
ARROW = '->'


def plan_rewrites(tokens: Sequence[str], rules: Sequence[DiscreteRule]) -> List[Tuple[int, int]]:
    """
    Остановки указателя одного прохода

    Returns:
        Список (позиция, индекс правила или COPY)
    """
    tokens = list(tokens)
    plan: List[Tuple[int, int]] = []
    position = 0
    while position < len(tokens):
        for index, rule in enumerate(rules):
            if tokens[position:position + rule.pattern_len] == rule.pattern:
                plan.append((position, index))
                position += rule.pattern_len
                break
        else:
            plan.append((position, COPY))
            position += 1
    return plan


def apply_plan(tokens: Sequence[str], plan: Sequence[Tuple[int, int]], rules: Sequence[DiscreteRule]) -> List[str]:
    out: List[str] = []
    for position, index in plan:
        if index == COPY:
            out.append(tokens[position])
        else:
            out.extend(rules[index].replacement)
    return out


def rewrite_pass(tokens: Sequence[str], rules: Sequence[DiscreteRule]) -> List[str]:
    """Один проход без каскадов: первое (младшее) подходящее правило срабатывает, указатель прыгает на Lp"""
    return apply_plan(tokens, plan_rewrites(tokens, rules), rules)


def iterated_rewrite(tokens: Sequence[str], rules: Sequence[DiscreteRule], max_passes: int) -> List[str]:
    """Повторять rewrite_pass до неподвижной точки или max_passes проходов"""
    if max_passes < 1:
        raise ValueError(f'max_passes must be >= 1, got {max_passes}')
    current = list(tokens)
    for _ in range(max_passes):
        following = rewrite_pass(current, rules)
        if following == current:
            break
        current = following
    return current


def parse_rule_line(line: str) -> DiscreteRule:
    if ARROW not in line.split():
        raise ValueError(f'rule line lacks "{ARROW}": {line!r}')
    words = line.split()
    cut = words.index(ARROW)
    return DiscreteRule(words[:cut], words[cut + 1:])


def read_rules(path: Union[str, Path]) -> List[DiscreteRule]:
    """Файл правил: одна строка `pattern... -> replacement...`, '#' - комментарий"""
    rules: List[DiscreteRule] = []
    for number, raw in enumerate(Path(path).read_text(encoding='utf-8').splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith('#'):
            continue
        try:
            rules.append(parse_rule_line(line))
        except ValueError as exc:
            raise ValueError(f'{path}: line {number}: {exc}') from None
    return rules


def format_rule(rule: DiscreteRule) -> str:
    return ' '.join(rule.pattern + [ARROW] + rule.replacement)


def write_rules(rules: Sequence[DiscreteRule], path: Union[str, Path]):
    Path(path).write_text(''.join(format_rule(rule) + '\n' for rule in rules), encoding='utf-8')
