"""Adversarially trained seq2seq generation for task-oriented dialogue.

Thin python surface over the C++ core: corpus preparation, the training
schedule, beam-search generation, BLEU/slot-coverage evaluation, and the
gradient-variance inspector.
"""

from advnlg._core import (
    AdvnlgError,
    __version__,
    bleu4,
    delexicalize,
    detokenize,
    evaluate,
    generate,
    gumbel_softmax,
    inspect_gradients,
    parse_mr,
    prepare,
    relexicalize,
    sample_gumbel,
    significance,
    slot_coverage,
    tokenize,
    train,
)

__all__ = [
    "AdvnlgError",
    "__version__",
    "bleu4",
    "delexicalize",
    "detokenize",
    "evaluate",
    "generate",
    "gumbel_softmax",
    "inspect_gradients",
    "parse_mr",
    "prepare",
    "relexicalize",
    "sample_gumbel",
    "significance",
    "slot_coverage",
    "tokenize",
    "train",
]
