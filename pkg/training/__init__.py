"""
Обучение, оценка, подсчёт FLOP и абляции
Training loop, evaluation, FLOP accounting and ablation sweeps
"""
from training.evaluation import (
    EmptyDatasetError,
    EvaluationResult,
    VocabMismatchError,
    evaluate,
    evaluate_model,
    evaluate_records,
    predict,
    predict_batch,
)
from training.trainer import TrainResult, TrainingDivergedError, train
from training.flops import KINDS, flops_estimate, format_report
from training.presets import TASK_PRESETS, resolve_train_config, resolved_run_config, split_spec
from training.sweep import AXES, ablation_sweep, cell_config, render_table
