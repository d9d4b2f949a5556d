"""
Тесты для стека слоёв и расшифровки правил
Tests for RewriteModel, tied decoding, checkpoints and rule inspection
"""
import numpy as np
import pytest

from models import DatasetRecord
from schemas import AssignmentConfig, LayerConfig, ModelConfig
from rewritenet.model import (
    PAD_LOGIT,
    RewriteModel,
    batch_loss,
    forward_batch,
    load_model,
    model_config_path,
    model_forward,
    save_model,
)
from rewritenet.rewrite_layer import RuleBank
from rewritenet.rule_inspector import count_rule_fires, inspect_model, inspect_rules
from tensorcore import Tensor, backward, finite_diff_check

VOCAB = ['<pad>', '<eos>', 'a', 'b', 'c']


def copy_model(max_output_len=6, layers=2, copy_bias=100.0):
    """Модель с one-hot эмбеддингами, в которой побеждает копирование"""
    layer = LayerConfig(
        d=5, rules=2, pattern_len=2, replacement_len=2, dropout=0.0, copy_bias_init=copy_bias,
        assignment=AssignmentConfig(gumbel_enabled=False),
    )
    config = ModelConfig(vocab=VOCAB, d=5, max_output_len=max_output_len, layers=[layer] * layers)
    rng = np.random.default_rng(0)
    banks = [RuleBank.initialize(layer, rng) for _ in range(layers)]
    return RewriteModel(config, Tensor(np.eye(5), requires_grad=True), banks)


class TestСловарь:
    """Тесты кодирования и декодирования токенов"""

    def test_исходная_последовательность_с_eos(self):
        """Тест encode_source"""
        model = copy_model()
        assert model.encode_source(['a', 'c']) == [2, 4, 1]

    def test_неизвестный_токен(self):
        """Тест отказа для токена вне словаря"""
        with pytest.raises(ValueError):
            copy_model().encode(['a', 'z'])

    def test_цель_дополняется_pad(self):
        """Тест target_ids: EOS, затем PAD до max_output_len"""
        model = copy_model(max_output_len=5)
        assert model.target_ids(['b']) == [3, 1, 0, 0, 0]
        assert model.target_ids(['a', 'b', 'c', 'a', 'b', 'c']) == [2, 3, 4, 2, 3]

    def test_декодирование_до_eos(self):
        """Тест decode: останов на EOS, PAD пропускается"""
        model = copy_model()
        assert model.decode([2, 0, 3, 1, 4]) == ['a', 'b']

    def test_форма_эмбеддинга(self):
        """Тест отказа при несовпадении формы эмбеддингов"""
        model = copy_model()
        with pytest.raises(ValueError):
            RewriteModel(model.config, Tensor(np.eye(4), requires_grad=True), model.banks)


class TestПрямойПроход:
    """Тесты для model_forward и batch_loss"""

    def test_копирующая_модель_восстанавливает_вход(self):
        """Тест: тождественная модель предсказывает вход, затем EOS и PAD"""
        model = copy_model()
        out = model_forward(model, model.encode_source(['a', 'b', 'c']))
        assert out.logits.shape == (6, 5)
        assert out.predicted == [2, 3, 4, 1, 0, 0]
        assert not out.truncated
        assert model.decode(out.predicted) == ['a', 'b', 'c']
        assert out.logits.data[5, 0] == PAD_LOGIT
        assert len(out.traces) == 2

    def test_обрезка_длинного_выхода(self):
        """Тест: выход длиннее max_output_len обрезается с флагом"""
        model = copy_model(max_output_len=2)
        out = model_forward(model, model.encode_source(['a', 'b', 'c']))
        assert out.truncated
        assert out.logits.shape == (2, 5)

    def test_недопустимый_id(self):
        """Тест отказа для id вне словаря"""
        with pytest.raises(ValueError):
            model_forward(copy_model(), [7])

    def test_потеря_и_градиент(self):
        """Тест: средняя кросс-энтропия конечна и даёт градиент эмбеддингов"""
        model = copy_model(copy_bias=0.0)
        pairs = [
            (model.encode_source(['a', 'b']), model.target_ids(['b', 'a'])),
            (model.encode_source(['c']), model.target_ids(['c'])),
        ]
        loss = batch_loss(model, pairs, training=True, rng=np.random.default_rng(1))
        assert np.isfinite(loss.item()) and loss.item() > 0
        backward(loss)
        assert np.any(model.embedding.grad != 0)

    def test_реестр_параметров(self):
        """Тест имён параметров модели"""
        names = [name for name, _ in copy_model(layers=2).registry().items()]
        assert names[0] == 'embedding'
        assert 'layer1.patterns' in names and 'layer0.copy_bias' in names
        assert len(names) == 1 + 2 * 5


class TestПакетныйПроход:
    """Тесты для forward_batch"""

    def test_совпадает_с_поодиночным(self):
        """Тест: логиты и предсказания батча равны проходам по одному входу"""
        vocab = ['<pad>', '<eos>'] + [f't{k}' for k in range(6)]
        layer = LayerConfig(d=8, rules=3, pattern_len=2, replacement_len=1, dropout=0.0, copy_bias_init=-0.5,
                            assignment=AssignmentConfig(gumbel_enabled=False))
        config = ModelConfig(vocab=vocab, d=8, max_output_len=7, layers=[layer, layer])
        model = RewriteModel.initialize(config, np.random.default_rng(2))
        rng = np.random.default_rng(3)
        sources = [[int(index) for index in rng.integers(2, 8, length)] + [model.eos_id] for length in (0, 1, 3, 6)]
        out = forward_batch(model, sources)
        assert out.logits.shape == (4 * 7, 8)
        for index, ids in enumerate(sources):
            alone = model_forward(model, ids)
            assert out.predicted[index] == alone.predicted
            assert out.truncated[index] == alone.truncated
            np.testing.assert_allclose(out.logits.data[7 * index:7 * (index + 1)], alone.logits.data, atol=1e-12)
            assert [trace.applied for trace in out.traces[index]] == [trace.applied for trace in alone.traces]

    def test_пустой_батч(self):
        """Тест отказа для пустого батча"""
        with pytest.raises(ValueError):
            forward_batch(copy_model(), [])


def deletion_model(seed=0):
    """Один удаляющий слой (Lq = 0) со случайными правилами"""
    layer = LayerConfig(d=8, rules=2, pattern_len=2, replacement_len=0, dropout=0.0, copy_bias_init=0.0)
    config = ModelConfig(vocab=VOCAB, d=8, max_output_len=6, layers=[layer])
    return RewriteModel.initialize(config, np.random.default_rng(seed))


class TestСамокритичныйЧлен:
    """Тесты градиента по структуре срабатываний"""

    PAIRS = [
        (['a', 'b', 'c', 'a'], ['a']),
        (['b', 'a', 'b', 'c'], ['b']),
        (['c', 'c', 'a', 'b'], ['c', 'c', 'a', 'b']),
        (['a', 'b', 'c'], []),
    ]

    def _run(self, weight, seed):
        model = deletion_model()
        pairs = [(model.encode_source(src), model.target_ids(tgt)) for src, tgt in self.PAIRS]
        loss = batch_loss(model, pairs, training=True, rng=np.random.default_rng(seed), structure_weight=weight)
        backward(loss)
        return loss.item(), model

    def test_значение_потери_не_меняется(self):
        """Тест: член меняет только градиент"""
        for seed in range(3):
            plain, _ = self._run(0.0, seed)
            critic, _ = self._run(1.0, seed)
            assert critic == pytest.approx(plain, abs=1e-12)

    def test_градиент_удаляющего_слоя(self):
        """Тест: при выборе, отличном от жадного, шаблоны и смещение копирования получают добавку"""
        changed = []
        for seed in range(5):
            _, plain = self._run(0.0, seed)
            _, critic = self._run(1.0, seed)
            bank, base = critic.banks[0], plain.banks[0]
            assert bank.patterns.grad is not None and np.all(np.isfinite(bank.patterns.grad))
            base_grad = base.patterns.grad if base.patterns.grad is not None else np.zeros_like(bank.patterns.grad)
            changed.append(not np.allclose(bank.patterns.grad, base_grad))
        assert any(changed)

    def test_без_шума_член_выключен(self):
        """Тест: в режиме оценки лог-вероятность не считается"""
        model = deletion_model()
        pairs = [(model.encode_source(src), model.target_ids(tgt)) for src, tgt in self.PAIRS]
        out = forward_batch(model, [src for src, _ in pairs], with_log_prob=False)
        assert out.log_prob is None
        loss = batch_loss(model, pairs, structure_weight=1.0)
        assert np.isfinite(loss.item())


class TestСохранение:
    """Тесты save_model / load_model"""

    def test_сохранение_и_загрузка(self, tmp_path):
        """Тест: загруженная модель совпадает с сохранённой"""
        model = copy_model(copy_bias=0.3)
        path = tmp_path / 'best.ckpt'
        save_model(model, path)
        assert model_config_path(path).exists()

        restored = load_model(path)
        assert restored.vocab == VOCAB
        assert restored.config == model.config
        np.testing.assert_array_equal(restored.embedding.data, model.embedding.data)
        np.testing.assert_array_equal(restored.banks[1].patterns.data, model.banks[1].patterns.data)
        ids = model.encode_source(['c', 'a'])
        assert model_forward(restored, ids).predicted == model_forward(model, ids).predicted

    def test_нет_конфигурации_модели(self, tmp_path):
        """Тест отказа без файла .model.cfg"""
        with pytest.raises(FileNotFoundError):
            load_model(tmp_path / 'missing.ckpt')


class TestРасшифровкаПравил:
    """Тесты для rule_inspector"""

    def test_ближайшие_токены(self):
        """Тест: строки шаблона, равные эмбеддингам, расшифровываются точно"""
        embedding = np.eye(5)
        bank = RuleBank(
            patterns=Tensor(np.stack([embedding[[2, 3]], embedding[[4, 4]]]), requires_grad=True),
            replacements=Tensor(np.stack([2.0 * embedding[[3]], np.zeros((1, 5))]), requires_grad=True),
            copy_bias=Tensor(np.zeros(1), requires_grad=True),
            ln_gain=Tensor(np.ones(5), requires_grad=True),
            ln_bias=Tensor(np.zeros(5), requires_grad=True),
        )
        decodings = inspect_rules(bank, embedding, VOCAB, layer=3)
        assert decodings[0].pattern_tokens == ['a', 'b']
        assert decodings[0].replacement == [('b', 1.0)]
        assert decodings[1].pattern_tokens == ['c', 'c']
        # нулевая строка: близость 0, выбирается меньший id
        assert decodings[1].replacement == [('<pad>', 0.0)]
        assert decodings[0].render().startswith('layer 3 rule   0: a(1.00) b(1.00) -> b(1.00)')

    def test_удаляющее_правило(self):
        """Тест отображения пустой замены"""
        bank = RuleBank.initialize(LayerConfig(d=5, rules=1, replacement_len=0), np.random.default_rng(0))
        decoding = inspect_rules(bank, np.eye(5), VOCAB)[0]
        assert decoding.replacement == []
        assert '-> ε' in decoding.render()

    def test_счётчики_срабатываний(self):
        """Тест: копирующая модель не применяет ни одного правила"""
        model = copy_model()
        records = [DatasetRecord(['a', 'b'], ['a', 'b']), DatasetRecord(['c'], ['c'])]
        counts = count_rule_fires(model, records)
        assert counts.shape == (2, 2)
        assert counts.sum() == 0
        decodings = inspect_model(model, records)
        assert len(decodings) == 4
        assert all(decoding.fires == 0 for decoding in decodings)


class TestГрадиентМодели:
    """Тест мягкого пути всей модели при зафиксированной структуре"""

    def test_конечные_разности(self):
        """Тест: d=8, R=4, K=2, n=6, относительная ошибка меньше 1e-3"""
        vocab = ['<pad>', '<eos>'] + [f't{k}' for k in range(8)]
        layer = LayerConfig(
            d=8, rules=4, pattern_len=2, replacement_len=2, dropout=0.0, copy_bias_init=0.0,
            assignment=AssignmentConfig(gumbel_enabled=False, sinkhorn_iters=5),
        )
        config = ModelConfig(vocab=vocab, d=8, max_output_len=8, layers=[layer, layer])
        for seed in range(5):
            rng = np.random.default_rng(seed)
            model = RewriteModel.initialize(config, rng)
            src = [int(index) for index in rng.integers(2, 10, 5)] + [model.eos_id]
            tgt = model.target_ids([vocab[index] for index in rng.integers(2, 10, 4)])
            structure = [trace.applied for trace in model_forward(model, src).traces]

            def f():
                return batch_loss(model, [(src, tgt)], frozen=[structure], gate_mode='soft')

            params = [tensor for _, tensor in model.registry().items()]
            assert finite_diff_check(f, params) < 1e-3


if __name__ == '__main__':
    pytest.main([__file__, '-v'])
