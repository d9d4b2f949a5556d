"""
Плоские конфигурационные документы вида key = value
Reader and writer for the run and model config files
"""
import logging
from pathlib import Path
from typing import Dict, Tuple, Union

from schemas import AssignmentConfig, LayerConfig, ModelConfig, RunConfigFile

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def parse_kv_text(text: str) -> Dict[str, str]:
    """
    Разобрать текст key = value

    Пустые строки и строки, начинающиеся с '#', пропускаются.

    Returns:
        Словарь ключ -> строковое значение в порядке появления
    """
    values: Dict[str, str] = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith('#'):
            continue
        if '=' not in line:
            raise ValueError(f'line {number}: expected "key = value", got {raw!r}')
        key, value = line.split('=', 1)
        key = key.strip()
        if not key:
            raise ValueError(f'line {number}: empty key')
        if key in values:
            raise ValueError(f'line {number}: duplicate key {key!r}')
        values[key] = value.strip()
    return values


def _render(value) -> str:
    if isinstance(value, bool):
        return 'true' if value else 'false'
    if isinstance(value, (list, tuple)):
        return ','.join(_render(item) for item in value)
    return str(value)


def format_kv(values: Dict[str, object]) -> str:
    width = max((len(key) for key in values), default=0)
    return ''.join(f'{key.ljust(width)} = {_render(value)}\n' for key, value in values.items())


# =====================================================================
# Конфигурация запуска
# =====================================================================

def run_config_from_text(text: str) -> RunConfigFile:
    """Неизвестные ключи отклоняются схемой (pydantic ValidationError)"""
    return RunConfigFile(**parse_kv_text(text))


def load_run_config(path: PathLike) -> Tuple[RunConfigFile, str]:
    text = Path(path).read_text(encoding='utf-8')
    return run_config_from_text(text), text


def run_config_to_text(cfg: RunConfigFile) -> str:
    values = {key: value for key, value in cfg.model_dump().items() if value is not None}
    return format_kv(values)


# =====================================================================
# Конфигурация модели
# =====================================================================

def model_config_to_text(cfg: ModelConfig) -> str:
    values: Dict[str, object] = {
        'vocab': ' '.join(cfg.vocab),
        'pad_token': cfg.pad_token,
        'eos_token': cfg.eos_token,
        'd': cfg.d,
        'max_output_len': cfg.max_output_len,
        'layers': len(cfg.layers),
    }
    for k, layer in enumerate(cfg.layers):
        prefix = f'layer.{k}.'
        values[prefix + 'rules'] = layer.rules
        values[prefix + 'pattern_len'] = layer.pattern_len
        values[prefix + 'replacement_len'] = layer.replacement_len
        values[prefix + 'residual'] = layer.residual_enabled
        values[prefix + 'dropout'] = layer.dropout
        values[prefix + 'copy_bias_init'] = layer.copy_bias_init
        values[prefix + 'temperature'] = layer.assignment.temperature
        values[prefix + 'sinkhorn_iters'] = layer.assignment.sinkhorn_iters
        values[prefix + 'gumbel'] = layer.assignment.gumbel_enabled
        values[prefix + 'rng_seed'] = layer.assignment.rng_seed
    return format_kv(values)


_LAYER_FIELDS = {
    'rules', 'pattern_len', 'replacement_len', 'residual', 'dropout',
    'copy_bias_init', 'temperature', 'sinkhorn_iters', 'gumbel', 'rng_seed',
}


def model_config_from_text(text: str) -> ModelConfig:
    values = parse_kv_text(text)
    try:
        count = int(values.pop('layers'))
        d = int(values['d'])
    except KeyError as exc:
        raise ValueError(f'model config lacks key {exc.args[0]!r}') from None

    layers = []
    for k in range(count):
        prefix = f'layer.{k}.'
        fields = {key[len(prefix):]: values.pop(key) for key in list(values) if key.startswith(prefix)}
        unknown = set(fields) - _LAYER_FIELDS
        if unknown:
            raise ValueError(f'unknown layer keys: {", ".join(sorted(prefix + key for key in unknown))}')
        assignment = AssignmentConfig(
            temperature=fields.pop('temperature', 1.0),
            sinkhorn_iters=fields.pop('sinkhorn_iters', 10),
            gumbel_enabled=fields.pop('gumbel', True),
            rng_seed=fields.pop('rng_seed', 0),
        )
        if 'residual' in fields:
            fields['residual_enabled'] = fields.pop('residual')
        layers.append(LayerConfig(d=d, assignment=assignment, **fields))

    stray = [key for key in values if key.startswith('layer.')]
    if stray:
        raise ValueError(f'layer keys beyond the configured {count} layers: {", ".join(stray)}')
    values['vocab'] = values.get('vocab', '').split()
    return ModelConfig(layers=layers, **values)
