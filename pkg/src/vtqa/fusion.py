"""Early fusion: cross-attention between visual objects and caption
sentences, feature concatenation, and question-guided pooling into answer
logits."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import ShapeError, Tensor


@dataclass
class AttentionParams:
    """Question-guided row attention weights for one branch.

    row_weight: (row_width x h_a), question_weight: (d_q x h_a),
    score_weight: (h_a x 1). Stored input-major.
    """

    row_weight: Tensor
    question_weight: Tensor
    score_weight: Tensor


@dataclass
class GateParams:
    """Pooled-vector gate and answer classifier for one branch.

    pool_weight: (row_width x h_g), question_weight: (d_q x h_g),
    classifier_weight: (h_g x n_answers), classifier_bias: (1 x n_answers).
    """

    pool_weight: Tensor
    question_weight: Tensor
    classifier_weight: Tensor
    classifier_bias: Tensor


def similarity(v: Tensor, p: Tensor, w_s: Tensor) -> Tensor:
    """Trilinear similarity S[i, j] = w_s . [v_i ; p_j ; v_i * p_j].

    v: O x d visual features, p: K x d sentence encodings, w_s: 1 x 3d.
    """
    if v.data.ndim != 2 or p.data.ndim != 2 or v.shape[1] != p.shape[1]:
        raise ShapeError(f"similarity: width mismatch {v.shape} vs {p.shape}")
    d = v.shape[1]
    if w_s.shape != (1, 3 * d):
        raise ShapeError(f"similarity: weight shape {w_s.shape}, expected (1, {3 * d})")
    w_v = ad.transpose(ad.slice_cols(w_s, 0, d))
    w_p = ad.transpose(ad.slice_cols(w_s, d, 2 * d))
    w_x = ad.slice_cols(w_s, 2 * d, 3 * d)

    o, k = v.shape[0], p.shape[0]
    visual_part = ad.matmul(ad.matmul(v, w_v), ad.constant(np.ones((1, k))))  # O x K
    text_part = ad.matmul(ad.constant(np.ones((o, 1))), ad.transpose(ad.matmul(p, w_p)))
    cross_part = ad.matmul(ad.mul_rows(v, w_x), ad.transpose(p))
    return ad.add(ad.add(visual_part, text_part), cross_part)


def attend_paragraph_over_objects(s: Tensor, v: Tensor) -> Tensor:
    """V^p = softmax(S^T) V: each sentence's convex combination of object
    features (softmax normalizes over the object axis)."""
    return ad.matmul(ad.softmax_rows(ad.transpose(s)), v)


def fuse_paragraph(p: Tensor, v_p: Tensor) -> Tensor:
    """P^f = [P ; P * V^p], width 2d."""
    return ad.concat_cols(p, ad.mul(p, v_p))


def fuse_visual(v: Tensor, c: Tensor) -> Tensor:
    """V^f = [V ; V * C]; visual rows and property rows are pre-aligned."""
    return ad.concat_cols(v, ad.mul(v, c))


def question_attention(rows: Tensor, q: Tensor, params: AttentionParams) -> Tensor:
    """Attention weights over rows, guided by the question vector:
    a_i = w_a . (ReLU(W_s s_i) * ReLU(W_q q)), alpha = softmax(a).

    Returns a 1 x m distribution.
    """
    hidden = ad.relu(ad.matmul(rows, params.row_weight))           # m x h_a
    q_hidden = ad.relu(ad.matmul(q, params.question_weight))       # 1 x h_a
    scores = ad.matmul(ad.mul_rows(hidden, q_hidden), params.score_weight)  # m x 1
    return ad.softmax_rows(ad.transpose(scores))


def pool_and_gate(rows: Tensor, alpha: Tensor, q: Tensor, params: GateParams) -> Tensor:
    """Attention-weighted row pooling, question gating, and answer scoring:
    pooled = sum_i alpha_i row_i; gated = ReLU(W_p pooled) * ReLU(W_q q);
    logits = classifier(gated).
    """
    pooled = ad.matmul(alpha, rows)  # 1 x row_width
    gated = ad.mul(
        ad.relu(ad.matmul(pooled, params.pool_weight)),
        ad.relu(ad.matmul(q, params.question_weight)),
    )
    return ad.add(ad.matmul(gated, params.classifier_weight), params.classifier_bias)


def branch_logits(rows: Tensor, q: Tensor, att: AttentionParams, gate: GateParams) -> tuple[Tensor, Tensor]:
    """Full per-branch pipeline; returns (logits, attention weights)."""
    alpha = question_attention(rows, q, att)
    return pool_and_gate(rows, alpha, q, gate), alpha
