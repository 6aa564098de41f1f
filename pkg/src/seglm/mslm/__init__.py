"""Masked Segmental Language Model: encoder, segment decoder and lattice DP."""

from .lattice import EdgeLattice, Segmentation, bpc, forward_logprob, marginal_logprob, viterbi
from .model import (
    MSLM,
    ModelConfig,
    build_segmental_mask,
    corpus_bpc,
    corpus_logprob,
    nll_loss,
    pad_batch,
    render,
    segment_encoded,
    segment_line,
    segment_lines,
)

__all__ = [
    "EdgeLattice",
    "MSLM",
    "ModelConfig",
    "Segmentation",
    "bpc",
    "build_segmental_mask",
    "corpus_bpc",
    "corpus_logprob",
    "forward_logprob",
    "marginal_logprob",
    "nll_loss",
    "pad_batch",
    "render",
    "segment_encoded",
    "segment_line",
    "segment_lines",
    "viterbi",
]
