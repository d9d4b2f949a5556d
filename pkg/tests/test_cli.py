"""
Тесты для командной строки
Tests for the rewritenet command-line entry point and its exit codes
"""
from pathlib import Path
from unittest.mock import patch

import pytest

import run
from config import Config
from discrete.fst_compiler import FstCheckReport
from training import TrainingDivergedError
from tasks import gen_reversal, read_records, write_records
from utils.kv_config import load_run_config

ROOT = Path(__file__).resolve().parent.parent


@pytest.fixture(autouse=True)
def isolated_workdir(tmp_path, monkeypatch):
    """Журнал и каталоги запусков внутри временного каталога"""
    monkeypatch.chdir(tmp_path)
    monkeypatch.setattr(Config, 'LOG_FILE', str(tmp_path / 'logs' / 'test.log'))
    monkeypatch.setattr(Config, 'RUN_ROOT', str(tmp_path / 'runs'))
    return tmp_path


@pytest.fixture
def run_config(tmp_path):
    """Файл запуска маленькой задачи reversal с готовыми данными"""
    paths = {}
    for name, seed, size in (('train', 0, 20), ('valid', 1, 5), ('test', 2, 5)):
        paths[name] = tmp_path / f'reversal.{name}.tsv'
        write_records(gen_reversal(size, seed=seed, min_len=2, max_len=4, vocab_size=8), paths[name])
    path = tmp_path / 'tiny.cfg'
    path.write_text(
        '# tiny reversal run\n'
        'task = reversal\n'
        'vocab_size = 8\n'
        'd = 16\n'
        'layers = 1\n'
        'rules = 4\n'
        'steps = 2\n'
        'eval_every = 1\n'
        'batch_size = 4\n'
        'max_output_len = 6\n'
        f'train_data = {paths["train"]}\n'
        f'valid_data = {paths["valid"]}\n'
        f'test_data = {paths["test"]}\n',
        encoding='utf-8',
    )
    return path


class TestКомандыБезОбучения:
    """Тесты gen-data, flops и fst-check"""

    def test_генерация_данных(self, tmp_path, capsys):
        """Тест: три файла выборок заданного размера"""
        assert run.main(['gen-data', '--task', 'compression', '--out', str(tmp_path / 'd'), '--size', '5']) == 0
        for name in ('train', 'valid', 'test'):
            assert len(read_records(tmp_path / 'd' / f'compression.{name}.tsv')) == 5
        assert 'compression.test.tsv' in capsys.readouterr().out

    def test_одна_выборка(self, tmp_path):
        """Тест --split"""
        assert run.main(['gen-data', '--task', 'scan', '--split', 'test', '--out', str(tmp_path), '--size', '3']) == 0
        assert [path.name for path in tmp_path.glob('scan.*.tsv')] == ['scan.test.tsv']

    def test_flops(self, capsys):
        """Тест отчёта FLOP"""
        assert run.main(['flops', '--model', 'transformer', '--n', '20', '--d', '128', '--batch', '64']) == 0
        assert capsys.readouterr().out.startswith('transformer: 2.4379 GFLOPs')

    def test_flops_слои_эталона(self, capsys):
        """Тест --encoder-layers и --decoder-layers"""
        assert run.main(['flops', '--model', 'transformer', '--n', '20', '--d', '128', '--batch', '64',
                         '--encoder-layers', '1', '--decoder-layers', '1']) == 0
        assert capsys.readouterr().out.startswith('transformer: 1.2242 GFLOPs')

    def test_fst_check(self, capsys):
        """Тест успешной проверки FST"""
        assert run.main(['fst-check', '--fst', str(ROOT / 'data' / 'parity.fst'), '--max-len', '4']) == 0
        assert capsys.readouterr().out.startswith('PASS 31 inputs')

    def test_fst_check_делимость(self, capsys):
        """Тест проверки div3.fst"""
        code = run.main(['fst-check', '--fst', str(ROOT / 'data' / 'div3.fst'), '--max-len', '5'])
        assert code == 0
        assert capsys.readouterr().out.strip() == 'PASS 63 inputs, 0 mismatches (max_len=5)'


class TestОбучениеИОценка:
    """Тесты train, eval и inspect-rules"""

    def test_полный_цикл(self, tmp_path, run_config, capsys):
        """Тест: обучение, оценка, расшифровка правил"""
        out_dir = tmp_path / 'out'
        assert run.main(['train', '--config', str(run_config), '--out', str(out_dir)]) == 0
        printed = capsys.readouterr().out
        assert 'best_valid_em' in printed and 'test_em' in printed

        resolved, _ = load_run_config(out_dir / 'run.cfg')
        assert resolved.rules == [4]
        assert resolved.pattern_len == [1]
        assert (out_dir / 'best.ckpt').exists()
        assert (out_dir / 'test_predictions.tsv').exists()

        checkpoint = str(out_dir / 'best.ckpt')
        assert run.main(['eval', '--checkpoint', checkpoint, '--data', str(tmp_path / 'reversal.valid.tsv')]) == 0
        assert capsys.readouterr().out.startswith('EM ')

        assert run.main(['inspect-rules', '--checkpoint', checkpoint,
                         '--data', str(tmp_path / 'reversal.valid.tsv')]) == 0
        lines = capsys.readouterr().out.splitlines()
        assert len(lines) == 4
        assert all(line.startswith('layer 0 rule') for line in lines)

    def test_переопределение_шагов(self, tmp_path, run_config):
        """Тест --steps и каталога по умолчанию"""
        assert run.main(['train', '--config', str(run_config), '--steps', '1']) == 0
        resolved, _ = load_run_config(tmp_path / 'runs' / 'reversal-seed0' / 'run.cfg')
        assert resolved.steps == 1

    def test_абляция(self, tmp_path, run_config, capsys):
        """Тест подкоманды sweep"""
        code = run.main(['sweep', '--axis', 'rules', '--config', str(run_config), '--steps', '1',
                         '--values', '2,4', '--out', str(tmp_path / 'sweep')])
        assert code == 0
        assert (tmp_path / 'sweep' / 'ablation_rules.jsonl').exists()
        assert capsys.readouterr().out.startswith('axis')


class TestКодыВыхода:
    """Тесты кодов выхода при ошибках"""

    def test_ошибка_использования(self):
        """Тест: неизвестная подкоманда завершает процесс с кодом 1"""
        with pytest.raises(SystemExit) as excinfo:
            run.main(['compile'])
        assert excinfo.value.code == 1

    def test_неизвестный_ключ_конфигурации(self, tmp_path):
        """Тест: неизвестный ключ даёт код 2"""
        path = tmp_path / 'bad.cfg'
        path.write_text('task = reversal\nwidth = 3\n', encoding='utf-8')
        assert run.main(['train', '--config', str(path)]) == 2

    def test_нет_данных_обучения(self, tmp_path):
        """Тест: запуск без train_data даёт код 2"""
        path = tmp_path / 'nodata.cfg'
        path.write_text('task = reversal\n', encoding='utf-8')
        assert run.main(['train', '--config', str(path)]) == 2

    def test_нет_файла(self, tmp_path):
        """Тест: отсутствующий файл FST даёт код 2"""
        assert run.main(['fst-check', '--fst', str(tmp_path / 'missing.fst')]) == 2

    def test_расхождение_обучения(self, run_config):
        """Тест: TrainingDivergedError даёт код 3"""
        with patch('run.train', side_effect=TrainingDivergedError('training diverged at step 1')):
            assert run.main(['train', '--config', str(run_config)]) == 3

    def test_словарь_оценки_не_совпадает(self, tmp_path, run_config, capsys):
        """Тест: токены вне словаря модели при eval дают код 2"""
        out_dir = tmp_path / 'out'
        assert run.main(['train', '--config', str(run_config), '--out', str(out_dir)]) == 0
        foreign = tmp_path / 'foreign.tsv'
        foreign.write_text('zzz yyy\tyyy zzz\n', encoding='utf-8')
        capsys.readouterr()
        assert run.main(['eval', '--checkpoint', str(out_dir / 'best.ckpt'), '--data', str(foreign)]) == 2
        assert capsys.readouterr().out == ''

    def test_провал_проверки_fst(self, capsys):
        """Тест: несовпадение симуляции даёт код 3"""
        failed = FstCheckReport(2, 7, 0, [(['1'], ['1'], ['0'])])
        with patch('run.verify_fst_simulation', return_value=failed):
            assert run.main(['fst-check', '--fst', str(ROOT / 'data' / 'parity.fst')]) == 3
        assert 'FAIL' in capsys.readouterr().out


if __name__ == '__main__':
    pytest.main([__file__, '-v'])
