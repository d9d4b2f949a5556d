"""
Дискретные эталоны: переписывание строк и конечные преобразователи
Ground-truth rewriting, FST execution and FST-to-rule-bank compilation
"""
from discrete.rewriting import (
    COPY,
    format_rule,
    iterated_rewrite,
    parse_rule_line,
    plan_rewrites,
    read_rules,
    rewrite_pass,
    write_rules,
)
from discrete.fst import Fst, FstError, format_fst, fst_transduce, parse_fst, read_fst
from discrete.fst_compiler import (
    FstCheckReport,
    FstCodec,
    build_fst_model,
    compile_fst_to_rulebank,
    simulate,
    simulate_batch,
    verify_fst_simulation,
)
