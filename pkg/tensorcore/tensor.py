"""
Dense float64 tensors with a dynamic reverse-mode tape
Every op records its parents and a backward closure when any input requires grad
"""
import logging
from contextlib import contextmanager
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

logger = logging.getLogger(__name__)

ArrayLike = Union[np.ndarray, float, int, Sequence]


class ShapeError(ValueError):
    """Несовместимые формы операндов"""


class NonFiniteError(FloatingPointError):
    """Операция дала NaN или Inf"""


_recording = {'enabled': True}


@contextmanager
def no_grad():
    """Внутри блока операции не записываются на ленту"""
    previous = _recording['enabled']
    _recording['enabled'] = False
    try:
        yield
    finally:
        _recording['enabled'] = previous


class Tensor:
    """
    Плотный тензор float64 с необязательным градиентом

    Args:
        data: Значения (любой объект, приводимый к np.ndarray)
        requires_grad: Нужно ли накапливать градиент
    """

    def __init__(self, data: ArrayLike, requires_grad: bool = False, _op: str = ''):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self._parents: Tuple['Tensor', ...] = ()
        self._backward: Optional[Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]] = None
        self._op = _op

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self):
        flag = ', requires_grad=True' if self.requires_grad else ''
        return f'Tensor(shape={self.shape}{flag}, op={self._op or "leaf"})'

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError('Деление поддерживается только на скаляр')
        return scale(self, 1.0 / float(other))


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _check_finite(data: np.ndarray, op: str):
    if not np.all(np.isfinite(data)):
        raise NonFiniteError(f'{op} produced non-finite values')


def custom_op(
    data: np.ndarray,
    parents: Sequence[Tensor],
    op: str,
    backward_fn: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]],
) -> Tensor:
    """
    Записать результат операции на ленту

    Args:
        data: Значение результата
        parents: Входы операции
        op: Имя операции для диагностики
        backward_fn: g -> градиенты по каждому входу (в порядке parents)

    Returns:
        Новый тензор; граф сохраняется только если какой-то вход требует градиент
    """
    _check_finite(data, op)
    out = Tensor(data, _op=op)
    if _recording['enabled'] and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
    return out


def _unbroadcast(g: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _broadcast_shape(a: Tensor, b: Tensor, op: str) -> Tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f'{op}: incompatible shapes {a.shape} and {b.shape}') from None


# =====================================================================
# Поэлементные операции
# =====================================================================

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, 'add')
    return custom_op(
        a.data + b.data, (a, b), 'add',
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, 'sub')
    return custom_op(
        a.data - b.data, (a, b), 'sub',
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
    )


def neg(a) -> Tensor:
    a = as_tensor(a)
    return custom_op(-a.data, (a,), 'neg', lambda g: (-g,))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, 'mul')
    return custom_op(
        a.data * b.data, (a, b), 'mul',
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def scale(a, factor: float) -> Tensor:
    a = as_tensor(a)
    factor = float(factor)
    return custom_op(a.data * factor, (a,), 'scale', lambda g: (g * factor,))


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return custom_op(out, (a,), 'exp', lambda g: (g * out,))


def log(a) -> Tensor:
    a = as_tensor(a)
    with np.errstate(divide='ignore', invalid='ignore'):
        out = np.log(a.data)
    return custom_op(out, (a,), 'log', lambda g: (g / a.data,))


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0
    return custom_op(a.data * mask, (a,), 'relu', lambda g: (g * mask,))


# =====================================================================
# Линейная алгебра и перестановки
# =====================================================================

def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f'matmul: incompatible shapes {a.shape} and {b.shape}')
    return custom_op(
        a.data @ b.data, (a, b), 'matmul',
        lambda g: (g @ b.data.T, a.data.T @ g),
    )


def transpose(a) -> Tensor:
    a = as_tensor(a)
    if a.ndim != 2:
        raise ShapeError(f'transpose: expected a matrix, got shape {a.shape}')
    return custom_op(a.data.T.copy(), (a,), 'transpose', lambda g: (g.T,))


def reshape(a, shape: Tuple[int, ...]) -> Tensor:
    a = as_tensor(a)
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ShapeError(f'reshape: cannot view shape {a.shape} as {tuple(shape)}') from None
    return custom_op(out.copy(), (a,), 'reshape', lambda g: (g.reshape(a.shape),))


def gather_rows(a, index: Sequence[int]) -> Tensor:
    """Выбрать строки (первую ось) по индексам, повторы разрешены"""
    a = as_tensor(a)
    index = np.asarray(index, dtype=np.int64).reshape(-1)
    if index.size and (index.min() < 0 or index.max() >= a.shape[0]):
        raise ShapeError(f'gather_rows: index out of range for shape {a.shape}')

    def backward(g):
        grad = np.zeros_like(a.data)
        np.add.at(grad, index, g)
        return (grad,)

    return custom_op(a.data[index], (a,), 'gather_rows', backward)


def take(a, rows: Sequence[int], cols: Sequence[int]) -> Tensor:
    """Поэлементная выборка a[rows[k], cols[k]] из матрицы"""
    a = as_tensor(a)
    rows = np.asarray(rows, dtype=np.int64).reshape(-1)
    cols = np.asarray(cols, dtype=np.int64).reshape(-1)
    if rows.shape != cols.shape:
        raise ShapeError(f'take: index shapes {rows.shape} and {cols.shape} differ')

    def backward(g):
        grad = np.zeros_like(a.data)
        np.add.at(grad, (rows, cols), g)
        return (grad,)

    return custom_op(a.data[rows, cols], (a,), 'take', backward)


def _concat(tensors: Sequence[Tensor], axis: int, op: str) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ShapeError(f'{op}: nothing to concatenate')
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        shapes = ' and '.join(str(t.shape) for t in tensors)
        raise ShapeError(f'{op}: incompatible shapes {shapes}') from None
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=axis))

    return custom_op(out, tensors, op, backward)


def concat_rows(tensors: Sequence[Tensor]) -> Tensor:
    return _concat(tensors, 0, 'concat_rows')


def concat_cols(tensors: Sequence[Tensor]) -> Tensor:
    return _concat(tensors, 1, 'concat_cols')


# =====================================================================
# Редукции
# =====================================================================

def sum(a, axis: Optional[int] = None, keepdims: bool = False) -> Tensor:  # noqa: A001
    a = as_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return custom_op(out, (a,), 'sum', backward)


def mean(a, axis: Optional[int] = None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    count = a.data.size if axis is None else a.shape[axis]
    return scale(sum(a, axis=axis, keepdims=keepdims), 1.0 / max(count, 1))


def logsumexp(a, axis: int, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    peak = np.max(a.data, axis=axis, keepdims=True)
    peak = np.where(np.isfinite(peak), peak, 0.0)
    kept = peak + np.log(np.sum(np.exp(a.data - peak), axis=axis, keepdims=True))
    out = kept if keepdims else np.squeeze(kept, axis=axis)

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        return (g * np.exp(a.data - kept),)

    return custom_op(out, (a,), 'logsumexp', backward)


def segment_logsumexp(a, counts: Sequence[int]) -> Tensor:
    """
    Logsumexp по столбцам внутри каждого блока подряд идущих строк

    Args:
        a: Матрица (N, C), строки сгруппированы в блоки
        counts: Число строк в каждом блоке, все положительны, сумма N

    Returns:
        Матрица (N, C): в каждой строке значения её блока
    """
    a = as_tensor(a)
    counts = np.asarray(counts, dtype=np.int64).reshape(-1)
    if a.ndim != 2 or counts.sum() != a.shape[0] or np.any(counts < 1):
        raise ShapeError(f'segment_logsumexp: blocks {counts.tolist()} do not tile shape {a.shape}')
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    owner = np.repeat(np.arange(counts.size), counts)
    peak = np.maximum.reduceat(a.data, starts, axis=0)
    peak = np.where(np.isfinite(peak), peak, 0.0)
    block = peak + np.log(np.add.reduceat(np.exp(a.data - peak[owner]), starts, axis=0))
    out = block[owner]

    def backward(g):
        return (np.add.reduceat(g, starts, axis=0)[owner] * np.exp(a.data - out),)

    return custom_op(out, (a,), 'segment_logsumexp', backward)


def softmax_rows(a) -> Tensor:
    a = as_tensor(a)
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        return (out * (g - np.sum(g * out, axis=-1, keepdims=True)),)

    return custom_op(out, (a,), 'softmax_rows', backward)


def log_softmax_rows(a) -> Tensor:
    a = as_tensor(a)
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    out = shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))

    def backward(g):
        return (g - np.exp(out) * g.sum(axis=-1, keepdims=True),)

    return custom_op(out, (a,), 'log_softmax_rows', backward)


# =====================================================================
# Слои
# =====================================================================

def layer_norm(a, gain=None, bias=None, eps: float = 1e-5) -> Tensor:
    """
    Нормализация по последней оси с необязательным аффинным преобразованием

    Args:
        a: Матрица (n, d)
        gain: Множители формы (d,) или None
        bias: Сдвиги формы (d,) или None
        eps: Добавка к дисперсии

    Returns:
        Нормализованная матрица той же формы
    """
    a = as_tensor(a)
    d = a.shape[-1]
    centred = a.data - a.data.mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt((centred ** 2).mean(axis=-1, keepdims=True) + eps)
    normed = centred * inv_std

    parents = [a]
    out = normed
    if gain is not None:
        gain = as_tensor(gain)
        if gain.shape != (d,):
            raise ShapeError(f'layer_norm: gain shape {gain.shape} does not match input {a.shape}')
        parents.append(gain)
        out = out * gain.data
    if bias is not None:
        bias = as_tensor(bias)
        if bias.shape != (d,):
            raise ShapeError(f'layer_norm: bias shape {bias.shape} does not match input {a.shape}')
        parents.append(bias)
        out = out + bias.data

    def backward(g):
        g_normed = g * gain.data if gain is not None else g
        grad_a = inv_std * (
            g_normed
            - g_normed.mean(axis=-1, keepdims=True)
            - normed * (g_normed * normed).mean(axis=-1, keepdims=True)
        )
        grads: List[np.ndarray] = [grad_a]
        rows = tuple(range(g.ndim - 1))
        if gain is not None:
            grads.append((g * normed).sum(axis=rows))
        if bias is not None:
            grads.append(g.sum(axis=rows))
        return grads

    return custom_op(out, parents, 'layer_norm', backward)


def dropout(a, p: float, rng: Optional[np.random.Generator], training: bool) -> Tensor:
    """Инвертированный dropout; на оценке и при p=0 возвращает вход как есть"""
    if not 0.0 <= p < 1.0:
        raise ValueError(f'dropout probability must lie in [0, 1), got {p}')
    a = as_tensor(a)
    if not training or p == 0.0 or a.data.size == 0:
        return a
    if rng is None:
        raise ValueError('dropout in training mode needs a random generator')
    keep = (rng.random(a.shape) >= p) / (1.0 - p)
    return custom_op(a.data * keep, (a,), 'dropout', lambda g: (g * keep,))


def conv1d_valid(x, kernels) -> Tensor:
    """
    Свёртка без паддинга: out[i, r] = Σ_k Σ_c x[i+k, c] · kernels[r, k, c]

    Args:
        x: Последовательность (n, d)
        kernels: Банк ядер (R, L, d)

    Returns:
        Матрица (n - L + 1, R)
    """
    x, kernels = as_tensor(x), as_tensor(kernels)
    if x.ndim != 2 or kernels.ndim != 3 or x.shape[1] != kernels.shape[2]:
        raise ShapeError(f'conv1d_valid: incompatible shapes {x.shape} and {kernels.shape}')
    length = kernels.shape[1]
    if x.shape[0] < length:
        raise ShapeError(f'conv1d_valid: sequence shape {x.shape} shorter than kernel shape {kernels.shape}')
    rules, d = kernels.shape[0], kernels.shape[2]
    # (N, d, L) -> (N, L·d), чтобы свёртка свелась к одному matmul
    windows = sliding_window_view(x.data, length, axis=0).transpose(0, 2, 1).reshape(-1, length * d)
    flat_kernels = kernels.data.reshape(rules, length * d)
    out = windows @ flat_kernels.T

    def backward(g):
        grad_k = (g.T @ windows).reshape(kernels.shape)
        grad_x = np.zeros_like(x.data)
        rows = g.shape[0]
        for k in range(length):
            grad_x[k:k + rows] += g @ kernels.data[:, k, :]
        return (grad_x, grad_k)

    return custom_op(out, (x, kernels), 'conv1d_valid', backward)


def cross_entropy(logits, targets: Sequence[int], mask: Optional[Sequence[bool]] = None) -> Tensor:
    """
    Средняя кросс-энтропия по незамаскированным позициям

    Args:
        logits: Матрица (N, V)
        targets: Индексы классов длины N
        mask: Булева маска длины N (True = учитывать); None = все позиции

    Returns:
        Скалярный тензор
    """
    logits = as_tensor(logits)
    targets = np.asarray(targets, dtype=np.int64).reshape(-1)
    if logits.ndim != 2 or logits.shape[0] != targets.shape[0]:
        raise ShapeError(f'cross_entropy: logits shape {logits.shape} and targets shape {targets.shape}')
    if targets.size and (targets.min() < 0 or targets.max() >= logits.shape[1]):
        raise ValueError(f'cross_entropy: target id outside [0, {logits.shape[1]})')
    weights = np.ones(targets.shape[0]) if mask is None else np.asarray(mask, dtype=np.float64).reshape(-1)
    if weights.shape != targets.shape:
        raise ShapeError(f'cross_entropy: mask shape {weights.shape} and targets shape {targets.shape}')
    count = weights.sum()
    if count == 0:
        raise ValueError('cross_entropy: every position is masked')

    picked = take(log_softmax_rows(logits), np.arange(targets.shape[0]), targets)
    return scale(sum(mul(picked, Tensor(weights))), -1.0 / count)


def detach(a) -> Tensor:
    """stop_gradient: то же значение без связи с графом"""
    return Tensor(as_tensor(a).data.copy())


stop_gradient = detach


# =====================================================================
# Обратный проход
# =====================================================================

def _topological_order(root: Tensor) -> List[Tensor]:
    order: List[Tensor] = []
    visited = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in visited:
                stack.append((parent, False))
    return order


def backward(loss: Tensor):
    """
    Накопить d(loss)/d(tensor) в grad каждого достижимого тензора с requires_grad

    Args:
        loss: Скалярный тензор, построенный на ленте
    """
    if loss.data.size != 1:
        raise ShapeError(f'backward: loss must be a scalar, got shape {loss.shape}')
    if not loss.requires_grad:
        raise ValueError('backward: loss does not depend on any tensor that requires grad')

    pending = {id(loss): np.ones_like(loss.data)}
    for node in reversed(_topological_order(loss)):
        g = pending.pop(id(node), None)
        if g is None:
            continue
        node.grad = g.copy() if node.grad is None else node.grad + g
        if node._backward is None:
            continue
        for parent, parent_grad in zip(node._parents, node._backward(g)):
            if not parent.requires_grad or parent_grad is None:
                continue
            if id(parent) in pending:
                pending[id(parent)] = pending[id(parent)] + parent_grad
            else:
                pending[id(parent)] = parent_grad
