"""
Тесты для слоя переписывания
Tests for pattern matching, output assembly and the full layer forward pass
"""
import math

import numpy as np
import pytest

from schemas import AssignmentConfig, LayerConfig
from rewritenet.rewrite_layer import (
    RuleBank,
    Segment,
    apply_rewrites,
    layer_forward,
    layer_forward_batch,
    match_scores,
)
from discrete import plan_rewrites, rewrite_pass
from models import DiscreteRule
from rewritenet.sinkhorn_assign import COPY, hard_from_applied
from tensorcore import Tensor, backward, finite_diff_check, layer_norm, mul, sum as tsum


def make_bank(patterns, replacements, copy_bias=0.0):
    patterns = np.asarray(patterns, dtype=np.float64)
    d = patterns.shape[2]
    return RuleBank(
        patterns=Tensor(patterns, requires_grad=True),
        replacements=Tensor(np.asarray(replacements, dtype=np.float64), requires_grad=True),
        copy_bias=Tensor(np.array([copy_bias]), requires_grad=True),
        ln_gain=Tensor(np.ones(d), requires_grad=True),
        ln_bias=Tensor(np.zeros(d), requires_grad=True),
    )


def layer_cfg(d, rules=1, pattern_len=2, replacement_len=2, **kwargs):
    kwargs.setdefault('dropout', 0.0)
    kwargs.setdefault('assignment', AssignmentConfig(gumbel_enabled=False))
    return LayerConfig(d=d, rules=rules, pattern_len=pattern_len, replacement_len=replacement_len, **kwargs)


X4 = np.array([[1.0, 0.0], [0.0, 1.0], [2.0, 0.0], [0.0, 3.0]])


class TestБанкПравил:
    """Тесты для RuleBank"""

    def test_инициализация(self):
        """Тест форм и масштаба инициализации"""
        cfg = LayerConfig(d=64, rules=8, pattern_len=2, replacement_len=3, copy_bias_init=0.5)
        bank = RuleBank.initialize(cfg, np.random.default_rng(0))
        assert bank.patterns.shape == (8, 2, 64)
        assert bank.replacements.shape == (8, 3, 64)
        assert bank.copy_bias.data[0] == 0.5
        assert bank.patterns.data.std() == pytest.approx(1 / math.sqrt(64), rel=0.1)
        assert set(bank.parameters()) == {'patterns', 'replacements', 'copy_bias', 'ln_gain', 'ln_bias'}

    def test_удаляющий_банк(self):
        """Тест Lq = 0"""
        bank = RuleBank.initialize(LayerConfig(d=4, rules=2, replacement_len=0), np.random.default_rng(0))
        assert bank.replacement_len == 0

    def test_несогласованные_формы(self):
        """Тест отказа при разных R или d у шаблонов и замен"""
        with pytest.raises(ValueError):
            make_bank(np.zeros((2, 2, 3)), np.zeros((1, 1, 3)))


class TestСопоставление:
    """Тесты для match_scores"""

    def test_значения_свёртки(self):
        """Тест S[i, r] = Σ_k <X[i+k], P[r, k]> / √d"""
        rng = np.random.default_rng(1)
        x = rng.normal(size=(5, 4))
        bank = make_bank(rng.normal(size=(3, 2, 4)), np.zeros((3, 2, 4)))
        scores = match_scores(Tensor(x), bank)
        assert scores.shape == (4, 3)
        expected = x[1] @ bank.patterns.data[2, 0] + x[2] @ bank.patterns.data[2, 1]
        assert scores.data[1, 2] == pytest.approx(expected / 2.0)

    def test_короткая_последовательность(self):
        """Тест отказа при n < Lp"""
        bank = make_bank(np.zeros((1, 3, 2)), np.zeros((1, 1, 2)))
        with pytest.raises(ValueError):
            match_scores(Tensor(np.zeros((2, 2))), bank)


class TestСборкаВыхода:
    """Тесты для apply_rewrites"""

    def test_копирование_и_замена(self):
        """Тест: копии переносят строки, срабатывание вставляет Q"""
        bank = make_bank(np.zeros((1, 2, 2)), [[[5.0, 5.0]]])
        applied = [(0, COPY), (1, 0), (3, COPY)]
        gate = Tensor(hard_from_applied(applied, 3, 2, 2))
        y, segments = apply_rewrites(Tensor(X4), applied, bank, gate)
        np.testing.assert_array_equal(y.data, [[1.0, 0.0], [5.0, 5.0], [0.0, 3.0]])
        assert segments == [
            Segment(0, 1, 0, 1, COPY),
            Segment(1, 3, 1, 2, 0),
            Segment(3, 4, 2, 3, COPY),
        ]

    def test_дробный_затвор_смешивает_с_окном(self):
        """Тест: g·Q + (1 - g)·mean(окна)"""
        bank = make_bank(np.zeros((1, 2, 2)), [[[5.0, 5.0]]])
        applied = [(0, COPY), (1, 0), (3, COPY)]
        gate = np.array([[1.0, 0.0], [0.5, 0.5], [1.0, 0.0]])
        y, _ = apply_rewrites(Tensor(X4), applied, bank, Tensor(gate))
        np.testing.assert_allclose(y.data[1], [3.0, 2.75])

    def test_удаление(self):
        """Тест: правило с Lq = 0 удаляет окно"""
        bank = make_bank(np.zeros((1, 2, 2)), np.zeros((1, 0, 2)))
        applied = [(0, 0), (2, COPY), (3, COPY)]
        y, segments = apply_rewrites(Tensor(X4), applied, bank, Tensor(hard_from_applied(applied, 3, 2, 2)))
        np.testing.assert_array_equal(y.data, X4[2:])
        assert segments[0] == Segment(0, 2, 0, 0, 0)

    def test_пустой_выход(self):
        """Тест: всё удалено, выход имеет форму (0, d)"""
        bank = make_bank(np.zeros((1, 2, 2)), np.zeros((1, 0, 2)))
        y, _ = apply_rewrites(Tensor(X4[:2]), [(0, 0)], bank, Tensor(np.array([[0.0, 1.0]])))
        assert y.shape == (0, 2)

    def test_длина_выхода(self):
        """Тест: |Y| = копии + Lq · срабатывания"""
        bank = make_bank(np.zeros((2, 1, 2)), np.ones((2, 3, 2)))
        applied = [(0, 1), (1, COPY), (2, 0), (3, COPY)]
        y, _ = apply_rewrites(Tensor(X4), applied, bank, Tensor(hard_from_applied(applied, 4, 3, 1)))
        assert y.shape == (2 + 3 * 2, 2)


class TestПрямойПроходСлоя:
    """Тесты для layer_forward"""

    def test_большое_смещение_копирования(self):
        """Тест: при доминирующей колонке копирования слой тождественен"""
        rng = np.random.default_rng(2)
        cfg = layer_cfg(4, rules=3, copy_bias_init=100.0)
        bank = RuleBank.initialize(cfg, rng)
        x = Tensor(rng.normal(size=(6, 4)))
        y, trace = layer_forward(x, cfg, bank)
        np.testing.assert_array_equal(y.data, x.data)
        assert trace.fires == []
        assert trace.n_in == trace.n_out == 6

    def test_без_остаточной_связи(self):
        """Тест: без residual копируется нормализованный вход"""
        rng = np.random.default_rng(3)
        cfg = layer_cfg(4, rules=3, copy_bias_init=100.0, residual_enabled=False)
        bank = RuleBank.initialize(cfg, rng)
        x = Tensor(rng.normal(size=(5, 4)))
        y, _ = layer_forward(x, cfg, bank)
        np.testing.assert_allclose(y.data, layer_norm(x).data)

    def test_короткий_вход_копируется(self):
        """Тест: n < Lp и n = 0 дают копию"""
        cfg = layer_cfg(2, pattern_len=3)
        bank = RuleBank.initialize(cfg, np.random.default_rng(0))
        y, trace = layer_forward(Tensor(X4[:2]), cfg, bank)
        np.testing.assert_array_equal(y.data, X4[:2])
        assert trace.applied == [(0, COPY), (1, COPY)]
        empty, _ = layer_forward(Tensor(np.zeros((0, 2))), cfg, bank)
        assert empty.shape == (0, 2)

    def test_правило_срабатывает_на_своём_окне(self):
        """Тест: шаблон (e1, e2) заменяется на Q внутри последовательности e0 e1 e2 e3"""
        x = Tensor(np.eye(4))
        normed = layer_norm(x).data
        replacement = np.array([[9.0, 0.0, 0.0, 0.0], [0.0, 0.0, 0.0, 9.0]])
        bank = make_bank(10.0 * normed[[1, 2]][None], replacement[None])
        cfg = layer_cfg(4)
        y, trace = layer_forward(x, cfg, bank)
        assert trace.applied == [(0, COPY), (1, 0), (3, COPY)]
        np.testing.assert_array_equal(y.data, np.stack([np.eye(4)[0], replacement[0], replacement[1], np.eye(4)[3]]))

    def test_сквозной_градиент_доходит_до_шаблонов(self):
        """Тест: при жёстком затворе градиент попадает в P и смещение копирования"""
        rng = np.random.default_rng(4)
        cfg = layer_cfg(4, rules=2)
        bank = RuleBank.initialize(cfg, rng)
        x = Tensor(rng.normal(size=(5, 4)))
        y, _ = layer_forward(x, cfg, bank, training=True, rng=rng)
        backward(tsum(mul(y, Tensor(rng.normal(size=y.shape)))))
        assert np.any(bank.patterns.grad != 0)
        assert np.any(bank.copy_bias.grad != 0)

    def test_мягкий_затвор_проходит_проверку_градиента(self):
        """Тест конечных разностей по всем параметрам при зафиксированной структуре"""
        rng = np.random.default_rng(5)
        cfg = layer_cfg(4, rules=2, copy_bias_init=0.0, assignment=AssignmentConfig(gumbel_enabled=False, sinkhorn_iters=3))
        bank = RuleBank.initialize(cfg, rng)
        x = Tensor(rng.normal(size=(5, 4)), requires_grad=True)
        _, trace = layer_forward(x, cfg, bank, gate_mode='soft')
        weights = Tensor(rng.normal(size=(5, 4)))

        def f():
            y, _ = layer_forward(x, cfg, bank, frozen_applied=trace.applied, gate_mode='soft')
            return tsum(mul(y, weights))

        params = [x, bank.patterns, bank.replacements, bank.copy_bias, bank.ln_gain]
        assert finite_diff_check(f, params) < 1e-4

    def test_перестановка_правил(self):
        """Тест: перестановка правил в банке не меняет выход, номера правил переставляются"""
        rng = np.random.default_rng(6)
        cfg = layer_cfg(6, rules=4, copy_bias_init=-1.0)
        bank = RuleBank.initialize(cfg, rng)
        order = np.array([2, 0, 3, 1])
        permuted = make_bank(bank.patterns.data[order], bank.replacements.data[order], bank.copy_bias.data[0])
        position_of = {int(old): new for new, old in enumerate(order)}
        for _ in range(10):
            x = Tensor(rng.normal(size=(7, 6)))
            y, trace = layer_forward(x, cfg, bank)
            y_permuted, trace_permuted = layer_forward(x, cfg, permuted)
            np.testing.assert_allclose(y_permuted.data, y.data, atol=1e-10)
            assert trace_permuted.applied == [
                (position, rule if rule == COPY else position_of[rule]) for position, rule in trace.applied
            ]

    def test_пакет_совпадает_с_отдельными_входами(self):
        """Тест: упакованные последовательности обрабатываются независимо"""
        rng = np.random.default_rng(7)
        cfg = layer_cfg(4, rules=3, replacement_len=1, copy_bias_init=-0.5)
        bank = RuleBank.initialize(cfg, rng)
        parts = [rng.normal(size=(length, 4)) for length in (5, 1, 3)]
        out = layer_forward_batch(Tensor(np.vstack(parts)), [5, 1, 3], cfg, bank)
        offset = 0
        for part, produced, trace in zip(parts, out.lengths, out.traces):
            y, alone = layer_forward(Tensor(part), cfg, bank)
            assert produced == y.shape[0]
            assert trace.applied == alone.applied
            np.testing.assert_allclose(out.y.data[offset:offset + produced], y.data, atol=1e-12)
            offset += produced
        assert out.y.shape[0] == sum(out.lengths)


class TestСоответствиеДискретномуПереписыванию:
    """Тесты apply_rewrites на one-hot векторах против rewrite_pass"""

    def test_случайные_случаи(self):
        """Тест: 1000 случайных строк и правил, ни одного расхождения"""
        alphabet = ['a', 'b', 'c']
        eye = np.eye(len(alphabet))
        rng = np.random.default_rng(7)
        for _ in range(1000):
            lp = int(rng.integers(1, 4))
            lq = int(rng.integers(0, 4))
            rules = [
                DiscreteRule([str(t) for t in rng.choice(alphabet, lp)], [str(t) for t in rng.choice(alphabet, lq)])
                for _ in range(int(rng.integers(1, 3)))
            ]
            tokens = [str(t) for t in rng.choice(alphabet, int(rng.integers(lp, 21)))]
            ids = [[alphabet.index(token) for token in rule.replacement] for rule in rules]
            replacements = np.stack([eye[row].reshape(lq, len(alphabet)) for row in ids])
            bank = make_bank(np.zeros((len(rules), lp, len(alphabet))), replacements)
            x = Tensor(eye[[alphabet.index(token) for token in tokens]])
            gate = Tensor(np.ones((len(tokens) - lp + 1, 1 + len(rules))))

            y, _ = apply_rewrites(x, plan_rewrites(tokens, rules), bank, gate)

            decoded = [alphabet[index] for index in y.data.argmax(axis=1)] if y.shape[0] else []
            assert decoded == rewrite_pass(tokens, rules)


if __name__ == '__main__':
    pytest.main([__file__, '-v'])
