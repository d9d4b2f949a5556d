"""
Central finite-difference check of analytic gradients
"""
from typing import Callable, Sequence

import numpy as np

from tensorcore.tensor import Tensor, backward


def finite_diff_check(f: Callable[[], Tensor], params: Sequence[Tensor], h: float = 1e-6) -> float:
    """
    Сравнить градиенты ленты с центральными разностями

    Args:
        f: Детерминированная функция без аргументов, возвращающая скалярный тензор
        params: Тензоры с requires_grad, по которым проверяется градиент
        h: Шаг разностной схемы

    Returns:
        max |analytic - numeric| / max(1, |numeric|) по всем элементам
    """
    if not h > 0:
        raise ValueError(f'finite_diff_check: step h must be positive, got {h}')

    for param in params:
        param.grad = None
    backward(f())
    analytic = [
        param.grad.copy() if param.grad is not None else np.zeros_like(param.data)
        for param in params
    ]

    worst = 0.0
    for param, grad in zip(params, analytic):
        for index in np.ndindex(param.data.shape):
            original = param.data[index]
            param.data[index] = original + h
            upper = f().item()
            param.data[index] = original - h
            lower = f().item()
            param.data[index] = original
            numeric = (upper - lower) / (2.0 * h)
            worst = max(worst, abs(grad[index] - numeric) / max(1.0, abs(numeric)))
    return worst
