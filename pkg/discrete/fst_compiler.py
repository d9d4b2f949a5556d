"""
Компиляция детерминированного FST в банк правил RewriteNet
Compiles a deterministic FST into rule banks whose noiseless forward pass reproduces the transduction

The input is prefixed by a state token; rule (s, a, s', b) rewrites [state:s, in:a]
into [out:b, state:s'], so layer k performs step k and the state token moves one
position right per layer. Lp = Lq = 2, one layer per input symbol. A width-one pattern
sees a single position and cannot carry the state from one symbol to the next, so the
state lives in its own token and every transition is computed by the rule bank.
"""
import itertools
import logging
import math
from typing import List, Optional, Sequence, Tuple

import numpy as np

from models import DiscreteRule
from schemas import AssignmentConfig, LayerConfig, ModelConfig
from discrete.fst import Fst, FstError, fst_transduce
from rewritenet.model import RewriteModel, forward_batch
from rewritenet.rewrite_layer import RuleBank
from tensorcore import Tensor, layer_norm, no_grad

logger = logging.getLogger(__name__)

PAD = '<pad>'
EOS = '<eos>'

# входов за один пакетный проход при проверке
CHECK_BATCH_SIZE = 512

# зазор между худшим истинным и лучшим ложным совпадением после масштабирования шаблонов
TARGET_GAP = 8.0


class FstCodec:
    """Словарь, эмбеддинги и преобразование символов FST в токены модели и обратно"""

    def __init__(self, fst: Fst, vocab: List[str], embedding: np.ndarray, rules: List[DiscreteRule]):
        self.fst = fst
        self.vocab = vocab
        self.embedding = embedding
        self.rules = rules

    def encode(self, symbols: Sequence[str]) -> List[str]:
        alphabet = set(self.fst.input_alphabet)
        for symbol in symbols:
            if symbol not in alphabet:
                raise FstError(f'symbol {symbol!r} is outside the input alphabet {sorted(alphabet)}')
        return [state_token(self.fst.initial)] + [f'in:{symbol}' for symbol in symbols]

    def decode(self, tokens: Sequence[str]) -> List[str]:
        out: List[str] = []
        for token in tokens:
            if token == EOS:
                break
            if token.startswith('out:'):
                out.append(token[len('out:'):])
        return out


class FstCheckReport:
    """Итог полной проверки на всех входах до max_len"""

    def __init__(self, max_len: int, checked: int, skipped: int, mismatches: List[Tuple]):
        self.max_len = max_len
        self.checked = checked
        self.skipped = skipped
        self.mismatches = mismatches

    @property
    def passed(self) -> bool:
        return self.checked > 0 and not self.mismatches


def state_token(state: str) -> str:
    return f'state:{state}'


def _layout(fst: Fst):
    """Токены словаря, их каналы (состояние, символ) и правила в виде токенов"""
    states = list(fst.states)
    symbol_channels = [PAD, EOS] + [f'in:{a}' for a in fst.input_alphabet] + [f'out:{b}' for b in fst.output_alphabet]
    tokens: List[Tuple[str, Optional[str], Optional[str]]] = [(PAD, None, PAD), (EOS, None, EOS)]
    tokens += [(state_token(s), s, None) for s in states]
    tokens += [(channel, None, channel) for channel in symbol_channels[2:]]
    rules = [
        DiscreteRule([state_token(s), f'in:{a}'], [f'out:{b}', state_token(target)])
        for (s, a), (target, b) in fst.transitions.items()
    ]
    return states, symbol_channels, tokens, rules


def compile_fst_to_rulebank(fst: Fst, d: Optional[int] = None) -> Tuple[RuleBank, FstCodec]:
    """
    Построить банк правил и кодек для FST

    Args:
        fst: Детерминированный преобразователь
        d: Размерность; по умолчанию минимальная чётная, вмещающая все каналы

    Returns:
        (RuleBank, FstCodec)
    """
    if not fst.transitions:
        raise FstError('FST has no transitions')
    states, symbol_channels, tokens, rules = _layout(fst)
    half_needed = max(len(states), len(symbol_channels))
    if d is None:
        d = 2 * half_needed
    half = d // 2
    if len(states) > half or len(symbol_channels) > d - half:
        raise FstError(
            f'd={d} is too small for {len(states)} state and {len(symbol_channels)} symbol channels'
        )

    vocab = [name for name, _, _ in tokens]
    embedding = np.zeros((len(vocab), d))
    for row, (_, state, symbol) in enumerate(tokens):
        if state is not None:
            embedding[row, states.index(state)] = 1.0
        if symbol is not None:
            embedding[row, half + symbol_channels.index(symbol)] = 1.0

    index = {name: row for row, name in enumerate(vocab)}
    normed = layer_norm(Tensor(embedding)).data
    pattern_len = rules[0].pattern_len
    unit_patterns = np.stack([normed[[index[t] for t in rule.pattern]] for rule in rules])
    replacements = np.stack([embedding[[index[t] for t in rule.replacement]] for rule in rules])

    windows = np.array(list(itertools.product(range(len(vocab)), repeat=pattern_len)))
    scores = np.einsum('wld,rld->wr', normed[windows], unit_patterns) / math.sqrt(d)
    pattern_ids = np.array([[index[t] for t in rule.pattern] for rule in rules])
    is_true = np.all(windows[:, None, :] == pattern_ids[None, :, :], axis=2)
    min_true = scores[is_true].min()
    max_false = scores[~is_true].max()
    if min_true - max_false <= 1e-9:
        raise FstError('embedding channels do not separate true matches from false ones')
    factor = TARGET_GAP / (min_true - max_false)
    copy_bias = factor * (min_true + max_false) / 2.0

    bank = RuleBank(
        patterns=Tensor(factor * unit_patterns, requires_grad=True),
        replacements=Tensor(replacements, requires_grad=True),
        copy_bias=Tensor(np.array([copy_bias]), requires_grad=True),
        ln_gain=Tensor(np.ones(d), requires_grad=True),
        ln_bias=Tensor(np.zeros(d), requires_grad=True),
    )
    logger.debug(f'Compiled {len(rules)} rules, d={d}, copy_bias={copy_bias:.3f}')
    return bank, FstCodec(fst, vocab, embedding, rules)


def build_fst_model(
    fst: Fst,
    max_len: int = 8,
    d: Optional[int] = None,
    temperature: float = 0.1,
) -> Tuple[RewriteModel, FstCodec]:
    """Модель из max_len копий скомпилированного банка, по слою на символ входа"""
    bank, codec = compile_fst_to_rulebank(fst, d)
    d = bank.dim
    layers = max(1, max_len)
    layer_cfg = LayerConfig(
        d=d,
        rules=bank.rules,
        pattern_len=bank.pattern_len,
        replacement_len=bank.replacement_len,
        residual_enabled=True,
        assignment=AssignmentConfig(temperature=temperature, gumbel_enabled=False),
        dropout=0.0,
        copy_bias_init=float(bank.copy_bias.data[0]),
    )
    config = ModelConfig(
        vocab=codec.vocab,
        pad_token=PAD,
        eos_token=EOS,
        d=d,
        max_output_len=max_len + 2,
        layers=[layer_cfg] * layers,
    )
    banks = [
        RuleBank(**{name: Tensor(tensor.data.copy(), requires_grad=True) for name, tensor in bank.parameters().items()})
        for _ in range(layers)
    ]
    model = RewriteModel(config, Tensor(codec.embedding.copy(), requires_grad=True), banks)
    return model, codec


def simulate_batch(model: RewriteModel, codec: FstCodec, inputs: Sequence[Sequence[str]]) -> List[List[str]]:
    """Выходы модели на пачке входов за один проход без шума"""
    if not inputs:
        return []
    with no_grad():
        out = forward_batch(model, [model.encode_source(codec.encode(symbols)) for symbols in inputs])
    return [codec.decode(model.decode(ids)) for ids in out.predicted]


def simulate(model: RewriteModel, codec: FstCodec, symbols: Sequence[str]) -> List[str]:
    return simulate_batch(model, codec, [symbols])[0]


def verify_fst_simulation(fst: Fst, max_len: int = 8, d: Optional[int] = None,
                          batch_size: int = CHECK_BATCH_SIZE) -> FstCheckReport:
    """
    Сравнить модель с fst_transduce на всех входах длины от 0 до max_len

    Входы, на которых сам FST не определён, пропускаются.
    """
    model, codec = build_fst_model(fst, max_len=max_len, d=d)
    defined: List[Tuple[Tuple[str, ...], List[str]]] = []
    skipped = 0
    for length in range(max_len + 1):
        for symbols in itertools.product(fst.input_alphabet, repeat=length):
            try:
                defined.append((symbols, fst_transduce(fst, symbols)))
            except FstError:
                skipped += 1

    mismatches: List[Tuple] = []
    for start in range(0, len(defined), batch_size):
        chunk = defined[start:start + batch_size]
        got = simulate_batch(model, codec, [symbols for symbols, _ in chunk])
        for (symbols, expected), predicted in zip(chunk, got):
            if predicted != expected:
                mismatches.append((list(symbols), expected, predicted))
    logger.info(
        f'FST check (max_len={max_len}): {len(defined)} inputs, '
        f'{len(mismatches)} mismatches, {skipped} skipped'
    )
    return FstCheckReport(max_len, len(defined), skipped, mismatches)
