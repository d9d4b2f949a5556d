"""
Дифференцируемое параллельное переписывание строк
Differentiable parallel string rewriting with learnable rules
"""
from rewritenet.sinkhorn_assign import (
    COPY,
    AssignmentBatch,
    AssignmentResult,
    assign,
    assign_batch,
    gumbel_perturb,
    hard_decode,
    hard_from_applied,
    sample_gumbel,
    sinkhorn_normalize,
    straight_through_gate,
    structure_log_prob,
)
from rewritenet.rewrite_layer import (
    LayerBatch,
    LayerTrace,
    RuleBank,
    Segment,
    apply_rewrites,
    apply_rewrites_batch,
    layer_forward,
    layer_forward_batch,
    match_scores,
)
from rewritenet.model import (
    BatchOutput,
    ModelOutput,
    RewriteModel,
    batch_loss,
    forward_batch,
    load_model,
    model_forward,
    save_model,
)
from rewritenet.rule_inspector import count_rule_fires, inspect_model, inspect_rules
