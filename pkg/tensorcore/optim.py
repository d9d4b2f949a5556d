"""
Parameter registry and Adam updates
"""
import logging
from typing import Dict, Iterator, Tuple

import numpy as np

from schemas import AdamConfig
from tensorcore.tensor import NonFiniteError, Tensor

logger = logging.getLogger(__name__)


class ParameterRegistry:
    """Именованные параметры модели и состояние Adam для каждого из них"""

    def __init__(self):
        self.parameters: Dict[str, Tensor] = {}
        self.first_moments: Dict[str, np.ndarray] = {}
        self.second_moments: Dict[str, np.ndarray] = {}
        self.step_count = 0

    def register(self, name: str, tensor: Tensor) -> Tensor:
        if not tensor.requires_grad:
            raise ValueError(f'Parameter {name!r} must have requires_grad=True')
        if name in self.parameters:
            raise ValueError(f'Parameter {name!r} is already registered')
        if not name or any(ch.isspace() for ch in name):
            raise ValueError(f'Invalid parameter name {name!r}')
        self.parameters[name] = tensor
        self.first_moments[name] = np.zeros_like(tensor.data)
        self.second_moments[name] = np.zeros_like(tensor.data)
        return tensor

    def __getitem__(self, name: str) -> Tensor:
        return self.parameters[name]

    def __contains__(self, name: str) -> bool:
        return name in self.parameters

    def __len__(self) -> int:
        return len(self.parameters)

    def items(self) -> Iterator[Tuple[str, Tensor]]:
        return iter(self.parameters.items())

    def zero_grad(self):
        for tensor in self.parameters.values():
            tensor.grad = np.zeros_like(tensor.data)

    def arrays(self) -> Dict[str, np.ndarray]:
        return {name: tensor.data for name, tensor in self.parameters.items()}

    def adam_arrays(self) -> Dict[str, np.ndarray]:
        state: Dict[str, np.ndarray] = {}
        for name in self.parameters:
            state[f'm/{name}'] = self.first_moments[name]
            state[f'v/{name}'] = self.second_moments[name]
        state['step'] = np.asarray(float(self.step_count))
        return state

    def load_arrays(self, arrays: Dict[str, np.ndarray]):
        """Записать значения параметров из словаря массивов (имена и формы должны совпасть)"""
        missing = [name for name in self.parameters if name not in arrays]
        if missing:
            raise ValueError(f'Checkpoint lacks parameters: {", ".join(missing)}')
        for name, tensor in self.parameters.items():
            if arrays[name].shape != tensor.shape:
                raise ValueError(
                    f'Parameter {name!r}: checkpoint shape {arrays[name].shape} differs from {tensor.shape}'
                )
            tensor.data[...] = arrays[name]

    def load_adam_arrays(self, arrays: Dict[str, np.ndarray]):
        for name, tensor in self.parameters.items():
            self.first_moments[name] = arrays[f'm/{name}'].reshape(tensor.shape).copy()
            self.second_moments[name] = arrays[f'v/{name}'].reshape(tensor.shape).copy()
        self.step_count = int(arrays['step'])


def adam_step(registry: ParameterRegistry, cfg: AdamConfig):
    """
    Один шаг Adam с коррекцией смещения; градиенты затем обнуляются

    Args:
        registry: Параметры с заполненными градиентами
        cfg: Гиперпараметры оптимизатора
    """
    missing = [name for name, tensor in registry.items() if tensor.grad is None]
    if missing:
        raise ValueError(f'adam_step: no gradient for {", ".join(missing)}')

    registry.step_count += 1
    t = registry.step_count
    correction1 = 1.0 - cfg.beta1 ** t
    correction2 = 1.0 - cfg.beta2 ** t
    for name, tensor in registry.items():
        g = tensor.grad
        m = registry.first_moments[name]
        v = registry.second_moments[name]
        m *= cfg.beta1
        m += (1.0 - cfg.beta1) * g
        v *= cfg.beta2
        v += (1.0 - cfg.beta2) * g * g
        tensor.data -= cfg.learning_rate * (m / correction1) / (np.sqrt(v / correction2) + cfg.epsilon)
        if not np.all(np.isfinite(tensor.data)):
            raise NonFiniteError(f'adam_step produced non-finite values in {name!r}')
    registry.zero_grad()


def clip_grad_norm(registry: ParameterRegistry, max_norm: float = 1.0) -> float:
    """
    Масштабировать все градиенты так, чтобы их общая норма не превышала max_norm

    Returns:
        Норма до обрезки
    """
    total = 0.0
    for _, tensor in registry.items():
        if tensor.grad is not None:
            total += float(np.sum(tensor.grad ** 2))
    norm = float(np.sqrt(total))
    if not np.isfinite(norm):
        raise NonFiniteError('clip_grad_norm: gradient norm is not finite')
    if norm > max_norm:
        factor = max_norm / norm
        for _, tensor in registry.items():
            if tensor.grad is not None:
                tensor.grad = tensor.grad * factor
    return norm
