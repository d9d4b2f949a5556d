"""
Exact-match scoring
"""
from typing import List, Sequence

PAD = '<pad>'
EOS = '<eos>'


def _normalise(tokens: Sequence[str], pad: str, eos: str) -> List[str]:
    out: List[str] = []
    for token in tokens:
        if token == eos:
            break
        if token != pad:
            out.append(token)
    return out


def exact_match(pred: Sequence[str], tgt: Sequence[str], pad: str = PAD, eos: str = EOS) -> bool:
    """Совпадение после удаления PAD и обрезки по первому EOS"""
    return _normalise(pred, pad, eos) == _normalise(tgt, pad, eos)


def corpus_em(preds: Sequence[Sequence[str]], tgts: Sequence[Sequence[str]], pad: str = PAD, eos: str = EOS) -> float:
    if len(preds) != len(tgts):
        raise ValueError(f'{len(preds)} predictions for {len(tgts)} targets')
    if not tgts:
        raise ValueError('corpus_em needs at least one example')
    hits = sum(exact_match(pred, tgt, pad, eos) for pred, tgt in zip(preds, tgts))
    return hits / len(tgts)
