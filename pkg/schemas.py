"""
Pydantic-схемы для валидации конфигураций
Validated configuration types shared by every RewriteNet package
"""
from typing import List, Literal, Optional
from pathlib import Path

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


TaskName = Literal['reversal', 'scan', 'compression']
SplitName = Literal['train', 'valid', 'test']


class AdamConfig(BaseModel):
    """Схема параметров оптимизатора Adam"""
    model_config = ConfigDict(extra='forbid')

    learning_rate: float = Field(1e-4, gt=0, description="Шаг обучения")
    beta1: float = Field(0.9, gt=0, lt=1, description="Коэффициент первого момента")
    beta2: float = Field(0.999, gt=0, lt=1, description="Коэффициент второго момента")
    epsilon: float = Field(1e-8, gt=0, description="Стабилизатор знаменателя")


class AssignmentConfig(BaseModel):
    """Схема разрешения конфликтов правил (Gumbel + Sinkhorn)"""
    model_config = ConfigDict(extra='forbid')

    temperature: float = Field(1.0, gt=0, description="Температура τ")
    sinkhorn_iters: int = Field(10, ge=1, description="Число итераций нормализации")
    gumbel_enabled: bool = Field(True, description="Шум Гумбеля во время обучения")
    rng_seed: int = Field(0, ge=0, description="Зерно генератора шума")


class LayerConfig(BaseModel):
    """Схема одного слоя переписывания"""
    model_config = ConfigDict(extra='forbid')

    d: int = Field(..., ge=1, description="Размерность эмбеддингов")
    rules: int = Field(32, ge=1, description="Число правил R")
    pattern_len: int = Field(2, ge=1, description="Длина шаблона Lp")
    replacement_len: int = Field(2, ge=0, description="Длина замены Lq (0 = удаление)")
    residual_enabled: bool = Field(True, description="Остаточные связи на копируемых позициях")
    assignment: AssignmentConfig = Field(default_factory=AssignmentConfig)
    dropout: float = Field(0.2, ge=0, lt=1, description="Вероятность dropout")
    copy_bias_init: float = Field(1.0, description="Начальное смещение колонки копирования")


class ModelConfig(BaseModel):
    """Схема стека слоёв с общим словарём"""
    model_config = ConfigDict(extra='forbid')

    vocab: List[str] = Field(..., min_length=2, description="Токены словаря")
    pad_token: str = '<pad>'
    eos_token: str = '<eos>'
    d: int = Field(..., ge=1, description="Размерность эмбеддингов")
    max_output_len: int = Field(..., ge=1, description="Длина выхода после паддинга")
    layers: List[LayerConfig] = Field(..., min_length=1, description="Конфигурации слоёв")

    @field_validator('vocab')
    @classmethod
    def проверить_словарь(cls, v):
        """Токены уникальны и не содержат пробелов"""
        if len(set(v)) != len(v):
            raise ValueError('Токены словаря должны быть уникальными')
        for token in v:
            if not token or any(ch.isspace() for ch in token):
                raise ValueError(f'Недопустимый токен словаря: {token!r}')
        return v

    @model_validator(mode='after')
    def проверить_согласованность(self):
        """PAD и EOS входят в словарь, размерности слоёв совпадают"""
        for name in (self.pad_token, self.eos_token):
            if name not in self.vocab:
                raise ValueError(f'Токен {name!r} отсутствует в словаре')
        for index, layer in enumerate(self.layers):
            if layer.d != self.d:
                raise ValueError(f'Слой {index}: d={layer.d} не совпадает с d={self.d}')
        return self


class TrainConfig(BaseModel):
    """Схема запуска обучения"""
    model_config = ConfigDict(extra='forbid')

    task: TaskName
    model: ModelConfig
    checkpoint_dir: Path
    steps: int = Field(20000, ge=1, description="Число шагов оптимизации")
    batch_size: int = Field(64, ge=1, description="Размер мини-батча")
    adam: AdamConfig = Field(default_factory=AdamConfig)
    eval_every: int = Field(500, ge=1, description="Период валидации")
    seed: int = Field(0, ge=0, description="Зерно запуска")
    grad_clip: float = Field(1.0, gt=0, description="Порог глобальной нормы градиента")
    structure_weight: float = Field(1.0, ge=0, description="Вес самокритичного члена по структуре срабатываний")
    log_wall_time: bool = Field(False, description="Писать реальное время в журнал метрик")


class SplitSpec(BaseModel):
    """Схема одной выборки задачи"""
    model_config = ConfigDict(extra='forbid')

    name: SplitName
    size: int = Field(..., ge=0, description="Число примеров")
    rng_seed: int = Field(0, ge=0)
    constraint: str = Field('', description="Описание ограничения выборки")
    min_len: Optional[int] = Field(None, ge=1)
    max_len: Optional[int] = Field(None, ge=1)
    vocab_size: int = Field(64, ge=1, description="Размер словаря целых чисел (reversal)")
    max_train_action_len: int = Field(22, ge=1, description="Порог длины для length split (scan)")
    include_cascading: bool = Field(False, description="Оставлять каскадные строки (compression)")

    @model_validator(mode='after')
    def проверить_длины(self):
        """min_len не превышает max_len"""
        if self.min_len is not None and self.max_len is not None and self.min_len > self.max_len:
            raise ValueError(f'min_len={self.min_len} больше max_len={self.max_len}')
        return self


class RunConfigFile(BaseModel):
    """
    Плоский документ key = value, описывающий запуск целиком
    Per-layer keys accept comma lists; a single value is broadcast to every layer
    """
    model_config = ConfigDict(extra='forbid')

    task: TaskName
    seed: int = Field(0, ge=0)

    # Оптимизация
    steps: Optional[int] = Field(None, ge=1)
    batch_size: int = Field(64, ge=1)
    learning_rate: float = Field(1e-4, gt=0)
    beta1: float = Field(0.9, gt=0, lt=1)
    beta2: float = Field(0.999, gt=0, lt=1)
    epsilon: float = Field(1e-8, gt=0)
    grad_clip: float = Field(1.0, gt=0)
    structure_weight: float = Field(1.0, ge=0)
    eval_every: int = Field(500, ge=1)
    log_wall_time: bool = False

    # Данные
    train_data: Optional[str] = None
    valid_data: Optional[str] = None
    test_data: Optional[str] = None
    train_size: Optional[int] = Field(None, ge=0)
    valid_size: Optional[int] = Field(None, ge=0)
    test_size: Optional[int] = Field(None, ge=0)
    min_len: Optional[int] = Field(None, ge=1)
    max_len: Optional[int] = Field(None, ge=1)
    vocab_size: int = Field(64, ge=1)
    max_train_action_len: int = Field(22, ge=1)
    include_cascading: bool = False

    # Модель
    d: Optional[int] = Field(None, ge=1)
    layers: Optional[int] = Field(None, ge=1)
    rules: Optional[List[int]] = None
    pattern_len: Optional[List[int]] = None
    replacement_len: Optional[List[int]] = None
    residual: bool = True
    dropout: float = Field(0.2, ge=0, lt=1)
    temperature: float = Field(1.0, gt=0)
    sinkhorn_iters: int = Field(10, ge=1)
    copy_bias_init: float = 1.0
    max_output_len: Optional[int] = Field(None, ge=1)

    @field_validator('rules', 'pattern_len', 'replacement_len', mode='before')
    @classmethod
    def разобрать_список(cls, v):
        """Значения вида '2,2,2,0' превращаются в список целых"""
        if v is None or isinstance(v, list):
            return v
        if isinstance(v, int):
            return [v]
        parts = [part.strip() for part in str(v).split(',') if part.strip()]
        if not parts:
            raise ValueError('Пустой список значений')
        return [int(part) for part in parts]

    @field_validator('rules', 'pattern_len', 'replacement_len')
    @classmethod
    def проверить_список(cls, v, info):
        """Неотрицательные значения; правила и шаблоны строго положительны"""
        if v is None:
            return v
        floor = 0 if info.field_name == 'replacement_len' else 1
        for item in v:
            if item < floor:
                raise ValueError(f'{info.field_name}: значение {item} меньше {floor}')
        return v
