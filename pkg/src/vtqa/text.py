"""Word embedding and GRU encoders for questions, paragraph sentences, and
object-property sentences."""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

PAD_INDEX = 0
UNK_INDEX = 1
PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"

_NON_WORD = re.compile(r"[^a-z0-9 ]+")


class AlignmentError(ValueError):
    """Raised when aligned inputs (objects vs. properties) disagree in count."""


class Vocabulary:
    """Bidirectional token/index map with reserved PAD=0 and UNK=1."""

    def __init__(self, tokens: Iterable[str] = ()):
        self._index = {PAD_TOKEN: PAD_INDEX, UNK_TOKEN: UNK_INDEX}
        self._tokens = [PAD_TOKEN, UNK_TOKEN]
        for tok in tokens:
            self.add(tok)

    def add(self, token: str) -> int:
        if token not in self._index:
            self._index[token] = len(self._tokens)
            self._tokens.append(token)
        return self._index[token]

    def index(self, token: str) -> int:
        return self._index.get(token, UNK_INDEX)

    def token(self, index: int) -> str:
        return self._tokens[index]

    def __len__(self) -> int:
        return len(self._tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._index

    @classmethod
    def from_texts(cls, texts: Iterable[str]) -> "Vocabulary":
        vocab = cls()
        for text in texts:
            for tok in normalize(text).split():
                vocab.add(tok)
        return vocab


def normalize(text: str) -> str:
    """Lowercase and strip punctuation to spaces."""
    return _NON_WORD.sub(" ", text.lower()).strip()


def tokenize(text: str, vocab: Vocabulary) -> list[int]:
    """Token-index list; unknown tokens map to UNK, empty text to [UNK]."""
    toks = normalize(text).split()
    if not toks:
        return [UNK_INDEX]
    return [vocab.index(t) for t in toks]


def make_property_sentence(name: str, attributes: Sequence[str]) -> str:
    """Templated "<name> is <attributes>" sentence; bare copula when the
    attribute list is empty (keeps visual/property row alignment)."""
    if not name:
        raise ValueError("object name must be non-empty")
    tail = " ".join(attributes)
    return f"{name} is {tail}".rstrip()


@dataclass
class GruParams:
    """Gate weights for one GRU. Input weights are stored input-major
    (d_in x d_h) so steps are row-vector matmuls."""

    w_z: Tensor
    u_z: Tensor
    b_z: Tensor
    w_r: Tensor
    u_r: Tensor
    b_r: Tensor
    w_h: Tensor
    u_h: Tensor
    b_h: Tensor

    @property
    def hidden_size(self) -> int:
        return self.u_z.shape[0]


def gru_step(h: Tensor, x: Tensor, params: GruParams) -> Tensor:
    """One GRU update:
    z = sigmoid(x Wz + h Uz + bz), r = sigmoid(x Wr + h Ur + br),
    hcand = tanh(x Wh + (r*h) Uh + bh), h' = (1-z)*h + z*hcand.
    """
    z = ad.sigmoid(ad.add_rows(ad.add(ad.matmul(x, params.w_z), ad.matmul(h, params.u_z)), params.b_z))
    r = ad.sigmoid(ad.add_rows(ad.add(ad.matmul(x, params.w_r), ad.matmul(h, params.u_r)), params.b_r))
    cand = ad.tanh(
        ad.add_rows(ad.add(ad.matmul(x, params.w_h), ad.matmul(ad.mul(r, h), params.u_h)), params.b_h)
    )
    one_minus_z = ad.add(ad.scale(z, -1.0), ad.constant(np.ones(z.shape)))
    return ad.add(ad.mul(one_minus_z, h), ad.mul(z, cand))


def encode_sentence(tokens: Sequence[int], table: Tensor, params: GruParams) -> Tensor:
    """Fold the GRU over embedded tokens from a zero initial state; the final
    hidden state is the sentence representation (1 x d_h)."""
    if len(tokens) == 0:
        raise ValueError("encode_sentence: empty token list")
    h = ad.constant(np.zeros((1, params.hidden_size)))
    for tok in tokens:
        x = ad.gather_rows(table, [tok])
        h = gru_step(h, x, params)
    return h


def encode_sentences(sentences: Sequence[Sequence[int]], table: Tensor, params: GruParams) -> Tensor:
    """Stack per-sentence encodings into a K x d_h matrix.

    Same-length sentences share one batched GRU fold (the step already
    operates row-wise), which keeps the op count low without padding.
    """
    if len(sentences) == 0:
        raise ValueError("encode_sentences: need at least one sentence")
    for s in sentences:
        if len(s) == 0:
            raise ValueError("encode_sentences: empty token list")

    by_length: dict[int, list[int]] = {}
    for pos, s in enumerate(sentences):
        by_length.setdefault(len(s), []).append(pos)

    blocks = []
    order = []
    for length in sorted(by_length):
        positions = by_length[length]
        h = ad.constant(np.zeros((len(positions), params.hidden_size)))
        for t in range(length):
            x = ad.gather_rows(table, [sentences[p][t] for p in positions])
            h = gru_step(h, x, params)
        blocks.append(h)
        order.extend(positions)

    stacked = blocks[0] if len(blocks) == 1 else ad.concat_rows(blocks)
    if order == list(range(len(sentences))):
        return stacked
    inverse = np.argsort(order)
    return ad.gather_rows(stacked, inverse.tolist())


def encode_paragraph(sentences: Sequence[Sequence[int]], table: Tensor, params: GruParams) -> Tensor:
    return encode_sentences(sentences, table, params)


def encode_properties(
    property_sentences: Sequence[Sequence[int]],
    object_count: int,
    table: Tensor,
    params: GruParams,
) -> Tensor:
    """O x d_h property matrix, row-aligned with the visual features."""
    if len(property_sentences) != object_count:
        raise AlignmentError(
            f"{len(property_sentences)} property sentences for {object_count} objects"
        )
    return encode_sentences(property_sentences, table, params)


def encode_question(tokens: Sequence[int], table: Tensor, params: GruParams) -> Tensor:
    return encode_sentence(tokens, table, params)


def load_embedding_file(path: str, vocab: Vocabulary, table: np.ndarray) -> int:
    """Overwrite embedding rows for tokens found in a pretrained-vector file
    ("token v1 v2 ... v_d" per line). Returns the number of rows loaded.
    The PAD row is never overwritten."""
    d = table.shape[1]
    loaded = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            token, values = parts[0], parts[1:]
            if len(values) != d:
                raise ValueError(
                    f"{path}:{lineno}: expected {d} values for {token!r}, got {len(values)}"
                )
            if token in vocab:
                idx = vocab.index(token)
                if idx == PAD_INDEX:
                    continue
                table[idx] = [float(v) for v in values]
                loaded += 1
    return loaded
