"""
Модели данных RewriteNet
Plain records passed between the task, discrete and training packages
"""
from typing import Dict, List, Optional, Sequence, Tuple


class DatasetRecord:
    """Пара (вход, выход) одной задачи"""

    def __init__(self, src: Sequence[str], tgt: Sequence[str], cascade_free: Optional[bool] = None):
        self.src = list(src)
        self.tgt = list(tgt)
        self.cascade_free = cascade_free  # только для compression

    def __eq__(self, other):
        if not isinstance(other, DatasetRecord):
            return NotImplemented
        return self.src == other.src and self.tgt == other.tgt

    def __repr__(self):
        return f"<DatasetRecord {' '.join(self.src)!r} -> {' '.join(self.tgt)!r}>"


class DiscreteRule:
    """Символьное правило: шаблон -> замена"""

    def __init__(self, pattern: Sequence[str], replacement: Sequence[str]):
        if len(pattern) == 0:
            raise ValueError('Шаблон правила не может быть пустым')
        self.pattern = list(pattern)
        self.replacement = list(replacement)

    @property
    def pattern_len(self) -> int:
        return len(self.pattern)

    @property
    def replacement_len(self) -> int:
        return len(self.replacement)

    def __eq__(self, other):
        if not isinstance(other, DiscreteRule):
            return NotImplemented
        return self.pattern == other.pattern and self.replacement == other.replacement

    def __repr__(self):
        return f"<DiscreteRule {' '.join(self.pattern)} -> {' '.join(self.replacement)}>"


class FlopReport:
    """Аналитическая оценка FLOP одного прямого прохода по батчу"""

    def __init__(
        self,
        kind: str,
        n: int,
        d: int,
        batch: int,
        flops: float,
        breakdown: Dict[str, float],
        rules: Optional[int] = None,
        pattern_len: Optional[int] = None,
        layers: Optional[int] = None,
    ):
        if flops <= 0:
            raise ValueError(f'Оценка FLOP должна быть положительной, получено {flops}')
        self.kind = kind
        self.n = n
        self.d = d
        self.batch = batch
        self.flops = flops
        self.breakdown = breakdown
        self.rules = rules
        self.pattern_len = pattern_len
        self.layers = layers

    @property
    def gflops(self) -> float:
        return self.flops / 1e9

    def __repr__(self):
        return f"<FlopReport {self.kind} n={self.n} d={self.d} batch={self.batch} {self.gflops:.3f}G>"


class SweepRow:
    """Одна ячейка абляции"""

    def __init__(self, axis: str, value, valid_em: float, test_em: float, final_loss: float, steps: int):
        self.axis = axis
        self.value = value
        self.valid_em = valid_em
        self.test_em = test_em
        self.final_loss = final_loss
        self.steps = steps

    def to_dict(self) -> dict:
        return {
            'axis': self.axis,
            'value': self.value,
            'valid_em': self.valid_em,
            'test_em': self.test_em,
            'final_loss': self.final_loss,
            'steps': self.steps,
        }


class RuleDecoding:
    """Расшифровка одного правила через ближайшие токены словаря"""

    def __init__(
        self,
        layer: int,
        rule: int,
        pattern: List[Tuple[str, float]],
        replacement: List[Tuple[str, float]],
        fires: int = 0,
    ):
        self.layer = layer
        self.rule = rule
        self.pattern = pattern
        self.replacement = replacement
        self.fires = fires

    @property
    def pattern_tokens(self) -> List[str]:
        return [token for token, _ in self.pattern]

    @property
    def replacement_tokens(self) -> List[str]:
        return [token for token, _ in self.replacement]

    def render(self) -> str:
        left = ' '.join(f'{token}({sim:.2f})' for token, sim in self.pattern)
        right = ' '.join(f'{token}({sim:.2f})' for token, sim in self.replacement) or 'ε'
        return f'layer {self.layer} rule {self.rule:>3}: {left} -> {right}  fires={self.fires}'
