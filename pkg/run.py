"""
Командная строка RewriteNet
Entry point binding data generation, training, evaluation and verification tools

Exit codes: 0 success, 1 usage error, 2 data/config error, 3 runtime failure
"""
import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from pydantic import ValidationError

from config import Config
from discrete import read_fst, verify_fst_simulation
from rewritenet import inspect_model, load_model
from tasks import TASKS, generate_split, read_records, write_records
from training import (
    AXES,
    KINDS,
    TrainingDivergedError,
    ablation_sweep,
    evaluate,
    flops_estimate,
    format_report,
    resolve_train_config,
    resolved_run_config,
    split_spec,
    train,
)
from utils.kv_config import load_run_config, run_config_to_text

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_RUNTIME = 3

RUN_CONFIG_FILE = 'run.cfg'

logger = logging.getLogger('rewritenet')


class CliParser(argparse.ArgumentParser):
    """argparse с кодом 1 для ошибок использования"""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f'{self.prog}: error: {message}\n')


def setup_logging(log_file: Optional[str] = None, level: Optional[str] = None) -> logging.Logger:
    """
    Настроить логирование: консоль (stderr) и файл

    Args:
        log_file: Путь к файлу журнала; по умолчанию Config.LOG_FILE
        level: Уровень; по умолчанию Config.LOG_LEVEL
    """
    log_file = Path(log_file or Config.LOG_FILE)
    log_file.parent.mkdir(parents=True, exist_ok=True)

    log_format = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    date_format = '%Y-%m-%d %H:%M:%S'

    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setFormatter(logging.Formatter(log_format, datefmt=date_format))
    file_handler = logging.FileHandler(log_file, encoding='utf-8')
    file_handler.setFormatter(logging.Formatter(log_format, datefmt=date_format))

    logging.basicConfig(
        level=getattr(logging, (level or Config.LOG_LEVEL).upper(), logging.INFO),
        handlers=[file_handler, console_handler],
        force=True,
    )
    return logger


# =====================================================================
# Подкоманды
# =====================================================================

def cmd_gen_data(args) -> int:
    run = load_run_config(args.config)[0] if args.config else None
    splits = ['train', 'valid', 'test'] if args.split == 'all' else [args.split]
    out_dir = Path(args.out)
    for name in splits:
        spec = split_spec(args.task, name, seed=args.seed, size=args.size, run=run)
        records = generate_split(args.task, spec)
        path = out_dir / f'{args.task}.{name}.tsv'
        write_records(records, path)
        logger.info(f'[OK] {args.task}/{name}: {len(records)} records -> {path}')
        print(path)
    return EXIT_OK


def _require(path: Optional[str], key: str) -> Path:
    if not path:
        raise ValueError(f'run config must set {key}')
    return Path(path)


def cmd_train(args) -> int:
    run, _ = load_run_config(args.config)
    if args.steps is not None:
        run = run.model_copy(update={'steps': args.steps})
    scale = 'paper' if args.paper_scale else 'desk'
    out_dir = Path(args.out) if args.out else Path(Config.RUN_ROOT) / f'{run.task}-seed{run.seed}'

    train_records = read_records(_require(run.train_data, 'train_data'))
    valid_records = read_records(_require(run.valid_data, 'valid_data'))
    train_cfg = resolve_train_config(run, out_dir, scale)

    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / RUN_CONFIG_FILE).write_text(run_config_to_text(resolved_run_config(run, scale)), encoding='utf-8')

    result = train(train_cfg, train_records, valid_records)
    print(f'best_valid_em {result.best_em:.6f} step {result.best_step}')
    print(f'checkpoint {result.checkpoint_path}')

    if run.test_data:
        test = evaluate(result.checkpoint_path, run.test_data, out_dir / 'test_predictions.tsv')
        print(f'test_em {test.em:.6f}')
    return EXIT_OK


def cmd_eval(args) -> int:
    result = evaluate(args.checkpoint, args.data, args.out)
    print(f'EM {result.em:.6f} ({result.count} examples)')
    return EXIT_OK


def cmd_inspect_rules(args) -> int:
    model = load_model(args.checkpoint)
    records = read_records(args.data) if args.data else []
    for decoding in inspect_model(model, records):
        if args.fired_only and decoding.fires == 0:
            continue
        print(decoding.render())
    return EXIT_OK


def cmd_flops(args) -> int:
    report = flops_estimate(
        args.model, args.n, args.d, args.batch,
        rules=args.rules, pattern_len=args.pattern_len, layers=args.layers, vocab=args.vocab,
        encoder_layers=args.encoder_layers, decoder_layers=args.decoder_layers,
    )
    print(format_report(report))
    return EXIT_OK


def cmd_fst_check(args) -> int:
    fst = read_fst(args.fst)
    report = verify_fst_simulation(fst, max_len=args.max_len)
    for symbols, expected, got in report.mismatches[:10]:
        print(f'mismatch: {" ".join(symbols)!r} expected {" ".join(expected)!r} got {" ".join(got)!r}')
    verdict = 'PASS' if report.passed else 'FAIL'
    print(f'{verdict} {report.checked} inputs, {len(report.mismatches)} mismatches (max_len={report.max_len})')
    return EXIT_OK if report.passed else EXIT_RUNTIME


def cmd_sweep(args) -> int:
    run, _ = load_run_config(args.config)
    train_records = read_records(_require(run.train_data, 'train_data'))
    valid_records = read_records(_require(run.valid_data, 'valid_data'))
    test_records = read_records(run.test_data) if run.test_data else None
    out_dir = Path(args.out) if args.out else Path(Config.RUN_ROOT) / f'ablation-{run.task}-{args.axis}'
    values = None
    if args.values:
        values = [item == 'on' if args.axis == 'residuals' else int(item) for item in args.values.split(',')]
    rows = ablation_sweep(
        run, args.axis, train_records, valid_records, out_dir,
        test_records=test_records, steps=args.steps, values=values,
    )
    print((out_dir / f'ablation_{args.axis}.txt').read_text(encoding='utf-8'), end='')
    logger.info(f'{len(rows)} ablation cells written to {out_dir}')
    return EXIT_OK


def build_parser() -> CliParser:
    parser = CliParser(prog='rewritenet', description='Differentiable parallel string rewriting')
    commands = parser.add_subparsers(dest='command', required=True)

    gen = commands.add_parser('gen-data', help='generate task datasets')
    gen.add_argument('--task', choices=TASKS, required=True)
    gen.add_argument('--split', choices=['train', 'valid', 'test', 'all'], default='all')
    gen.add_argument('--out', default=Config.DATA_ROOT)
    gen.add_argument('--seed', type=int, default=0)
    gen.add_argument('--size', type=int, default=None)
    gen.add_argument('--config', default=None, help='run config supplying split parameters')
    gen.set_defaults(handler=cmd_gen_data)

    trn = commands.add_parser('train', help='train a model from a run config')
    trn.add_argument('--config', required=True)
    trn.add_argument('--out', default=None)
    trn.add_argument('--steps', type=int, default=None)
    trn.add_argument('--paper-scale', action='store_true')
    trn.set_defaults(handler=cmd_train)

    ev = commands.add_parser('eval', help='exact-match evaluation of a checkpoint')
    ev.add_argument('--checkpoint', required=True)
    ev.add_argument('--data', required=True)
    ev.add_argument('--out', default=None, help='predictions file')
    ev.set_defaults(handler=cmd_eval)

    ins = commands.add_parser('inspect-rules', help='decode learned rules to vocabulary tokens')
    ins.add_argument('--checkpoint', required=True)
    ins.add_argument('--data', default=None)
    ins.add_argument('--fired-only', action='store_true')
    ins.set_defaults(handler=cmd_inspect_rules)

    fl = commands.add_parser('flops', help='analytic FLOP estimate')
    fl.add_argument('--model', choices=KINDS, required=True)
    fl.add_argument('--n', type=int, required=True)
    fl.add_argument('--d', type=int, required=True)
    fl.add_argument('--batch', type=int, required=True)
    fl.add_argument('--rules', type=int, default=Config.RULES)
    fl.add_argument('--pattern-len', type=int, default=2)
    fl.add_argument('--layers', type=int, default=Config.LAYERS)
    fl.add_argument('--vocab', type=int, default=32)
    fl.add_argument('--encoder-layers', type=int, default=2)
    fl.add_argument('--decoder-layers', type=int, default=2)
    fl.set_defaults(handler=cmd_flops)

    fc = commands.add_parser('fst-check', help='exhaustive FST simulation check')
    fc.add_argument('--fst', required=True)
    fc.add_argument('--max-len', type=int, default=8)
    fc.set_defaults(handler=cmd_fst_check)

    sw = commands.add_parser('sweep', help='ablation sweep over one axis')
    sw.add_argument('--axis', choices=list(AXES), required=True)
    sw.add_argument('--config', required=True)
    sw.add_argument('--steps', type=int, default=None)
    sw.add_argument('--out', default=None)
    sw.add_argument('--values', default=None, help='comma-separated axis values (on/off for residuals)')
    sw.set_defaults(handler=cmd_sweep)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Разобрать аргументы, выполнить подкоманду, вернуть код выхода"""
    args = build_parser().parse_args(argv)
    setup_logging()
    try:
        return args.handler(args)
    except (TrainingDivergedError, FloatingPointError) as e:
        logger.error(f'[X] Runtime failure: {e}')
        return EXIT_RUNTIME
    except (ValidationError, ValueError, OSError) as e:
        logger.error(f'[X] Data or config error: {e}')
        return EXIT_DATA
    except Exception as e:
        logger.error(f'[X] Unexpected failure: {e}', exc_info=True)
        return EXIT_RUNTIME


if __name__ == '__main__':
    sys.exit(main())
