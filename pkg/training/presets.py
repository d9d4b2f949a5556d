"""
Пресеты задач и сборка TrainConfig из плоского файла запуска
Per-task layer layouts and resolution of a RunConfigFile into typed configs
"""
import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

from config import Config, config_by_name
from schemas import AdamConfig, AssignmentConfig, LayerConfig, ModelConfig, RunConfigFile, SplitSpec, TrainConfig
from tasks import DEFAULT_LENGTHS, task_vocabulary

logger = logging.getLogger(__name__)

# Lp/Lq по слоям и длина выхода (с EOS) для каждой задачи
TASK_PRESETS: Dict[str, Dict[str, object]] = {
    'reversal': {'pattern_len': [1], 'replacement_len': [1], 'max_output_len': 32},
    'scan': {'pattern_len': [2], 'replacement_len': [4, 4, 4, 2], 'max_output_len': 49},
    # два сохраняющих длину слоя, слияние пары и финальная голова удаления
    'compression': {'pattern_len': [2], 'replacement_len': [2, 2, 1, 0], 'max_output_len': 22},
}

SPLIT_OFFSETS = {'train': 0, 'valid': 1, 'test': 2}


def resize_per_layer(values: Sequence, layers: int) -> List:
    """Обрезать список или дополнить его последним значением до нужного числа слоёв"""
    values = list(values)
    if not values:
        raise ValueError('per-layer list is empty')
    return values[:layers] + [values[-1]] * max(0, layers - len(values))


def _broadcast(name: str, values: Optional[Sequence[int]], fallback: Sequence[int], layers: int) -> List[int]:
    if values is None:
        return resize_per_layer(fallback, layers)
    values = list(values)
    if len(values) == 1:
        return values * layers
    if len(values) != layers:
        raise ValueError(f'{name} lists {len(values)} values for {layers} layers')
    return values


def preset_for(task: str) -> Dict[str, object]:
    try:
        return TASK_PRESETS[task]
    except KeyError:
        raise ValueError(f'Unknown task {task!r}') from None


def resolve_model_config(run: RunConfigFile, d: int) -> ModelConfig:
    preset = preset_for(run.task)
    layers = run.layers or Config.LAYERS
    rules = _broadcast('rules', run.rules, [Config.RULES], layers)
    pattern_len = _broadcast('pattern_len', run.pattern_len, preset['pattern_len'], layers)
    replacement_len = _broadcast('replacement_len', run.replacement_len, preset['replacement_len'], layers)
    layer_configs = [
        LayerConfig(
            d=d,
            rules=rules[k],
            pattern_len=pattern_len[k],
            replacement_len=replacement_len[k],
            residual_enabled=run.residual,
            assignment=AssignmentConfig(
                temperature=run.temperature,
                sinkhorn_iters=run.sinkhorn_iters,
                gumbel_enabled=True,
                rng_seed=run.seed,
            ),
            dropout=run.dropout,
            copy_bias_init=run.copy_bias_init,
        )
        for k in range(layers)
    ]
    return ModelConfig(
        vocab=task_vocabulary(run.task, run.vocab_size),
        d=d,
        max_output_len=run.max_output_len or preset['max_output_len'],
        layers=layer_configs,
    )


def resolve_train_config(run: RunConfigFile, checkpoint_dir: Union[str, Path], scale: str = 'desk') -> TrainConfig:
    """
    Собрать TrainConfig

    Args:
        run: Плоская конфигурация запуска
        checkpoint_dir: Каталог запуска
        scale: 'desk' или 'paper'; масштаб задаёт d и число шагов по умолчанию,
            явные значения из run имеют приоритет
    """
    scale_cfg = config_by_name.get(scale)
    if scale_cfg is None or scale == 'default':
        raise ValueError(f'Unknown scale {scale!r}')
    d = run.d or scale_cfg.EMBEDDING_DIM
    steps = run.steps or scale_cfg.TRAIN_STEPS
    return TrainConfig(
        task=run.task,
        model=resolve_model_config(run, d),
        checkpoint_dir=Path(checkpoint_dir),
        steps=steps,
        batch_size=run.batch_size,
        adam=AdamConfig(
            learning_rate=run.learning_rate,
            beta1=run.beta1,
            beta2=run.beta2,
            epsilon=run.epsilon,
        ),
        eval_every=run.eval_every,
        seed=run.seed,
        grad_clip=run.grad_clip,
        structure_weight=run.structure_weight,
        log_wall_time=run.log_wall_time,
    )


def resolved_run_config(run: RunConfigFile, scale: str = 'desk') -> RunConfigFile:
    """Плоская конфигурация с подставленными значениями по умолчанию, как она реально используется"""
    train_cfg = resolve_train_config(run, '.', scale)
    layers = train_cfg.model.layers
    return run.model_copy(update={
        'steps': train_cfg.steps,
        'd': train_cfg.model.d,
        'layers': len(layers),
        'rules': [layer.rules for layer in layers],
        'pattern_len': [layer.pattern_len for layer in layers],
        'replacement_len': [layer.replacement_len for layer in layers],
        'max_output_len': train_cfg.model.max_output_len,
    })


def split_spec(task: str, name: str, seed: int = 0, size: Optional[int] = None,
               run: Optional[RunConfigFile] = None) -> SplitSpec:
    """
    SplitSpec для выборки

    Для scan все выборки используют одно зерно (train и valid режут одну перестановку);
    для остальных задач у каждой выборки своё зерно.
    """
    if name not in SPLIT_OFFSETS:
        raise ValueError(f'Unknown split {name!r}')
    if size is None and run is not None:
        size = getattr(run, f'{name}_size')
    if size is None:
        size = Config.SPLIT_SIZES[name]
    rng_seed = seed if task == 'scan' else seed * len(SPLIT_OFFSETS) + SPLIT_OFFSETS[name]
    extra = {}
    if run is not None:
        extra = {
            'min_len': run.min_len,
            'max_len': run.max_len,
            'vocab_size': run.vocab_size,
            'max_train_action_len': run.max_train_action_len,
            'include_cascading': run.include_cascading,
        }
    lengths = DEFAULT_LENGTHS.get(task)
    if task == 'scan':
        threshold = extra.get('max_train_action_len', 22)
        constraint = f'actions <= {threshold}' if name != 'test' else f'actions > {threshold}'
    else:
        constraint = f'length in {list(lengths)}' if lengths else ''
    return SplitSpec(name=name, size=size, rng_seed=rng_seed, constraint=constraint, **extra)
