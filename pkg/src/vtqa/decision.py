"""Late fusion of branch logits (extra max/avg voters) and the
answer-recommendation credit applied at inference."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

_WS = re.compile(r"\s+")


def late_fuse(logit_list: Sequence[Tensor]) -> Tensor:
    """L_new = L_1 + ... + L_n + L_max + L_avg: elementwise sum of every
    branch's logits plus max-pooled and averaged extra voters."""
    if len(logit_list) == 0:
        raise ValueError("late_fuse: empty logit list")
    total = ad.sum_over_list(logit_list)
    voters = [ad.max_over_list(logit_list), ad.mean_over_list(logit_list)]
    return ad.add(total, ad.sum_over_list(voters))


def normalize_answer(text: str) -> str:
    return _WS.sub(" ", text.lower().strip())


@dataclass
class RecommendationList:
    """Answer-vocabulary indices eligible for the additive credit."""

    indices: frozenset[int] = field(default_factory=frozenset)
    credit: float = 1.0

    def __post_init__(self):
        if self.credit < 0:
            raise ValueError(f"credit must be nonnegative, got {self.credit}")


def build_recommendation_list(
    object_names: Sequence[str],
    attributes: Sequence[str],
    answer_index: dict[str, int],
    credit: float = 1.0,
) -> RecommendationList:
    """Map detected object names and attributes to answer indices by exact
    match after normalization; unmatched strings are dropped."""
    normalized_answers = {normalize_answer(a): i for a, i in answer_index.items()}
    hits = set()
    for s in list(object_names) + list(attributes):
        idx = normalized_answers.get(normalize_answer(s))
        if idx is not None:
            hits.add(idx)
    return RecommendationList(indices=frozenset(hits), credit=credit)


def apply_credit(logits: np.ndarray, rec: RecommendationList) -> np.ndarray:
    """Add credit * std(logits) to every recommended index, leaving all other
    entries untouched. Uses the population standard deviation (denominator N).
    Inference-time re-ranking only; not part of the training gradient path."""
    logits = np.asarray(logits, dtype=np.float64)
    out = logits.copy()
    if not rec.indices or rec.credit == 0.0:
        return out
    boost = rec.credit * logits.std()
    for i in rec.indices:
        if not 0 <= i < logits.size:
            raise IndexError(f"recommendation index {i} out of range for {logits.size} answers")
        out[i] += boost
    return out
