"""Model variants (visual-only, text-only, combined), parameter
initialization, the forward pass, and checkpoint serialization."""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, asdict, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import autodiff as ad
from . import decision, fusion, text
from .autodiff import Tape, Tensor
from .data import SampleRecord
from .text import GruParams, Vocabulary

CHECKPOINT_MAGIC = b"VTQACKPT"
CHECKPOINT_VERSION = 1

VQA_ONLY = "vqa"
TEXTQA_ONLY = "textqa"
VTQA = "vtqa"
VARIANTS = (VQA_ONLY, TEXTQA_ONLY, VTQA)


class ConfigError(ValueError):
    pass


@dataclass
class ModelConfig:
    variant: str = VTQA
    early_fusion: bool = True
    late_fusion: bool = True
    answer_recommendation: bool = True
    property_fusion: bool = True          # V*C fusion wherever visual features are used
    credit: float = 1.0
    credit_in_training: bool = False      # recommendation credit is inference-time by default
    d: int = 64                           # sentence-encoder width == visual feature width
    d_v: int = 64
    d_q: int = 32                         # question-encoder width
    h_a: int = 32                         # attention hidden width
    h_g: int = 32                         # gate hidden width
    d_emb: int = 32
    vocab_size: int = 2
    n_answers: int = 2
    seed: int = 0

    def validate(self) -> None:
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}, expected one of {VARIANTS}")
        if self.d != self.d_v:
            raise ConfigError(f"d ({self.d}) must equal d_v ({self.d_v})")
        if self.variant == VTQA and not self.early_fusion:
            raise ConfigError("the combined variant requires early_fusion")
        for name in ("d", "d_q", "h_a", "h_g", "d_emb", "vocab_size", "n_answers"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")

    @property
    def uses_visual(self) -> bool:
        return self.variant in (VQA_ONLY, VTQA)

    @property
    def uses_paragraph(self) -> bool:
        return self.variant in (TEXTQA_ONLY, VTQA)

    @property
    def visual_row_width(self) -> int:
        return 2 * self.d if self.property_fusion else self.d

    @property
    def paragraph_row_width(self) -> int:
        # cross-attention fusion doubles the width; the text-only variant
        # attends over un-fused sentence rows
        return 2 * self.d if self.variant == VTQA else self.d


def desk_preset(**overrides) -> ModelConfig:
    return replace(ModelConfig(), **overrides)


def paper_preset(**overrides) -> ModelConfig:
    base = ModelConfig(d=2048, d_v=2048, d_q=1024, h_a=512, h_g=512, d_emb=300)
    return replace(base, **overrides)


class ModelParams:
    """Named trainable tensors with deterministic (lexicographic) order."""

    def __init__(self, tensors: dict[str, np.ndarray]):
        self._tensors = {k: np.asarray(v, dtype=np.float64) for k, v in tensors.items()}

    def names(self) -> list[str]:
        return sorted(self._tensors)

    def items(self):
        return [(k, self._tensors[k]) for k in self.names()]

    def __getitem__(self, name: str) -> np.ndarray:
        return self._tensors[name]

    def __setitem__(self, name: str, value: np.ndarray) -> None:
        self._tensors[name] = np.asarray(value, dtype=np.float64)

    def __contains__(self, name: str) -> bool:
        return name in self._tensors

    def __len__(self) -> int:
        return len(self._tensors)

    def copy(self) -> "ModelParams":
        return ModelParams({k: v.copy() for k, v in self._tensors.items()})

    def equals(self, other: "ModelParams") -> bool:
        return self.names() == other.names() and all(
            np.array_equal(self[k], other[k]) for k in self.names()
        )


def _gru_shapes(prefix: str, d_in: int, d_h: int) -> dict[str, tuple[int, int]]:
    shapes = {}
    for gate in ("z", "r", "h"):
        shapes[f"{prefix}.w_{gate}"] = (d_in, d_h)
        shapes[f"{prefix}.u_{gate}"] = (d_h, d_h)
        shapes[f"{prefix}.b_{gate}"] = (1, d_h)
    return shapes


def _branch_shapes(tag: str, row_width: int, cfg: ModelConfig) -> dict[str, tuple[int, int]]:
    return {
        f"att_{tag}.row_weight": (row_width, cfg.h_a),
        f"att_{tag}.question_weight": (cfg.d_q, cfg.h_a),
        f"att_{tag}.score_weight": (cfg.h_a, 1),
        f"gate_{tag}.pool_weight": (row_width, cfg.h_g),
        f"gate_{tag}.question_weight": (cfg.d_q, cfg.h_g),
        f"gate_{tag}.classifier_weight": (cfg.h_g, cfg.n_answers),
        f"gate_{tag}.classifier_bias": (1, cfg.n_answers),
    }


def param_shapes(config: ModelConfig) -> dict[str, tuple[int, int]]:
    """Every trainable tensor in scope for the variant, with its shape."""
    config.validate()
    shapes: dict[str, tuple[int, int]] = {"embed.table": (config.vocab_size, config.d_emb)}
    shapes.update(_gru_shapes("gru_q", config.d_emb, config.d_q))
    needs_sentence_gru = config.uses_paragraph or (config.uses_visual and config.property_fusion)
    if needs_sentence_gru:
        shapes.update(_gru_shapes("gru_sent", config.d_emb, config.d))
    if config.variant == VTQA:
        shapes["sim.w_s"] = (1, 3 * config.d)
    if config.uses_paragraph:
        shapes.update(_branch_shapes("p", config.paragraph_row_width, config))
    if config.uses_visual:
        shapes.update(_branch_shapes("v", config.visual_row_width, config))
    return shapes


def init_params(config: ModelConfig) -> ModelParams:
    """Uniform[-r, r] weights with r = 1/sqrt(fan_in); biases zero;
    embedding rows Uniform[-0.1, 0.1] with the PAD row zero.
    Fully determined by config.seed."""
    rng = np.random.default_rng(config.seed)
    shapes = param_shapes(config)
    tensors = {}
    for name in sorted(shapes):
        shape = shapes[name]
        if name.endswith((".b_z", ".b_r", ".b_h", ".classifier_bias")):
            tensors[name] = np.zeros(shape)
        elif name.endswith(".table"):
            t = rng.uniform(-0.1, 0.1, size=shape)
            t[text.PAD_INDEX] = 0.0
            tensors[name] = t
        else:
            r = 1.0 / np.sqrt(shape[0])
            tensors[name] = rng.uniform(-r, r, size=shape)
    return ModelParams(tensors)


# ---------------------------------------------------------------------------
# forward pass

def make_leaves(tape: Tape, params: ModelParams) -> dict[str, Tensor]:
    return {name: tape.leaf(value) for name, value in params.items()}


def _gru_from_leaves(leaves: dict[str, Tensor], prefix: str) -> GruParams:
    return GruParams(**{k: leaves[f"{prefix}.{k}"] for k in
                        ("w_z", "u_z", "b_z", "w_r", "u_r", "b_r", "w_h", "u_h", "b_h")})


def _branch_from_leaves(leaves: dict[str, Tensor], tag: str) -> tuple[fusion.AttentionParams, fusion.GateParams]:
    att = fusion.AttentionParams(
        row_weight=leaves[f"att_{tag}.row_weight"],
        question_weight=leaves[f"att_{tag}.question_weight"],
        score_weight=leaves[f"att_{tag}.score_weight"],
    )
    gate = fusion.GateParams(
        pool_weight=leaves[f"gate_{tag}.pool_weight"],
        question_weight=leaves[f"gate_{tag}.question_weight"],
        classifier_weight=leaves[f"gate_{tag}.classifier_weight"],
        classifier_bias=leaves[f"gate_{tag}.classifier_bias"],
    )
    return att, gate


def forward_tensors(
    sample: SampleRecord,
    leaves: dict[str, Tensor],
    config: ModelConfig,
    vocab: Vocabulary,
) -> tuple[Tensor, dict[str, Tensor], dict[str, Tensor]]:
    """Tape-tracked forward pass. Returns (pre-credit final logits,
    per-branch logits, per-branch attention weights)."""
    sample.validate()
    table = leaves["embed.table"]
    q = text.encode_question(
        text.tokenize(sample.question, vocab), table, _gru_from_leaves(leaves, "gru_q")
    )

    branch_logits: dict[str, Tensor] = {}
    alphas: dict[str, Tensor] = {}
    visual = ad.constant(sample.visual)
    n_objects = sample.visual.shape[0]

    # property and paragraph sentences share one encoder; encode them in a
    # single call so same-length sentences batch together
    needs_props = config.uses_visual and config.property_fusion
    prop_tokens = (
        [
            text.tokenize(text.make_property_sentence(n, a), vocab)
            for n, a in zip(sample.object_names, sample.object_attributes)
        ]
        if needs_props
        else []
    )
    if needs_props and len(prop_tokens) != n_objects:
        raise text.AlignmentError(
            f"{len(prop_tokens)} property sentences for {n_objects} objects"
        )
    sent_tokens = [text.tokenize(s, vocab) for s in sample.paragraph] if config.uses_paragraph else []
    c = p = None
    if prop_tokens or sent_tokens:
        encoded = text.encode_sentences(
            prop_tokens + sent_tokens, table, _gru_from_leaves(leaves, "gru_sent")
        )
        if prop_tokens and sent_tokens:
            c = ad.gather_rows(encoded, list(range(n_objects)))
            p = ad.gather_rows(encoded, list(range(n_objects, n_objects + len(sent_tokens))))
        elif prop_tokens:
            c = encoded
        else:
            p = encoded

    if config.uses_visual:
        rows_v = fusion.fuse_visual(visual, c) if needs_props else visual
        att_v, gate_v = _branch_from_leaves(leaves, "v")
        branch_logits["visual"], alphas["visual"] = fusion.branch_logits(rows_v, q, att_v, gate_v)

    if config.uses_paragraph:
        if config.variant == VTQA:
            s_mat = fusion.similarity(visual, p, leaves["sim.w_s"])
            v_p = fusion.attend_paragraph_over_objects(s_mat, visual)
            rows_p = fusion.fuse_paragraph(p, v_p)
        else:
            rows_p = p
        att_p, gate_p = _branch_from_leaves(leaves, "p")
        branch_logits["paragraph"], alphas["paragraph"] = fusion.branch_logits(rows_p, q, att_p, gate_p)

    if config.variant == VTQA:
        voters = [branch_logits["paragraph"], branch_logits["visual"]]
        if config.late_fusion:
            final = decision.late_fuse(voters)
        else:
            final = ad.sum_over_list(voters)  # plain sum when late fusion is off
    elif config.variant == VQA_ONLY:
        final = branch_logits["visual"]
    else:
        final = branch_logits["paragraph"]
    return final, branch_logits, alphas


@dataclass
class ForwardResult:
    logits: np.ndarray                      # final scores, credit applied if enabled
    logits_before_credit: np.ndarray
    branch_logits: dict[str, np.ndarray]
    attention: dict[str, np.ndarray]
    recommended: frozenset[int] = field(default_factory=frozenset)

    @property
    def predicted_index(self) -> int:
        return int(np.argmax(self.logits))


def forward(
    sample: SampleRecord,
    params: ModelParams,
    config: ModelConfig,
    vocab: Vocabulary,
    answer_index: dict[str, int] | None = None,
) -> ForwardResult:
    """Pure forward pass over one sample; applies the recommendation credit
    when enabled and an answer index map is supplied."""
    tape = Tape()
    leaves = make_leaves(tape, params)
    final, branches, alphas = forward_tensors(sample, leaves, config, vocab)
    logits = final.data.ravel().copy()
    before = logits.copy()
    recommended: frozenset[int] = frozenset()
    if config.answer_recommendation and answer_index is not None:
        flat_attrs = [a for attrs in sample.object_attributes for a in attrs]
        rec = decision.build_recommendation_list(
            sample.object_names, flat_attrs, answer_index, credit=config.credit
        )
        logits = decision.apply_credit(logits, rec)
        recommended = rec.indices
    return ForwardResult(
        logits=logits,
        logits_before_credit=before,
        branch_logits={k: v.data.ravel().copy() for k, v in branches.items()},
        attention={k: v.data.ravel().copy() for k, v in alphas.items()},
        recommended=recommended,
    )


# ---------------------------------------------------------------------------
# checkpoints

def _config_to_json(config: ModelConfig, vocab: Vocabulary, answers: Sequence[str]) -> dict:
    blob = asdict(config)
    blob["token_vocab"] = [vocab.token(i) for i in range(len(vocab))]
    blob["answers"] = list(answers)
    return blob


def save_checkpoint(
    path: str | Path,
    params: ModelParams,
    config: ModelConfig,
    vocab: Vocabulary,
    answers: Sequence[str],
) -> None:
    """Magic, length-prefixed JSON header (format version, config, tensor
    manifest), then raw little-endian float64 blobs in manifest order."""
    manifest = {}
    offset = 0
    for name, value in params.items():
        manifest[name] = {"shape": list(value.shape), "offset": offset}
        offset += value.size * 8
    header = json.dumps(
        {
            "format_version": CHECKPOINT_VERSION,
            "config": _config_to_json(config, vocab, answers),
            "manifest": manifest,
        }
    ).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        for _, value in params.items():
            fh.write(np.asarray(value, dtype="<f8").tobytes())


class CheckpointError(ValueError):
    pass


def load_checkpoint(
    path: str | Path, expected_config: ModelConfig | None = None
) -> tuple[ModelParams, ModelConfig, Vocabulary, list[str]]:
    """Inverse of save_checkpoint; round-trips bit-exactly. Raises
    CheckpointError on corruption or on a manifest that does not match
    ``expected_config``'s parameter set."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[: len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: bad checkpoint magic")
    pos = len(CHECKPOINT_MAGIC)
    if len(blob) < pos + 4:
        raise CheckpointError(f"{path}: truncated header length")
    (header_len,) = struct.unpack_from("<I", blob, pos)
    pos += 4
    if len(blob) < pos + header_len:
        raise CheckpointError(f"{path}: truncated header")
    try:
        header = json.loads(blob[pos:pos + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt header ({exc})") from exc
    pos += header_len
    if header.get("format_version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported format version {header.get('format_version')}")

    cfg_blob = dict(header["config"])
    tokens = cfg_blob.pop("token_vocab")
    answers = cfg_blob.pop("answers")
    config = ModelConfig(**cfg_blob)
    vocab = Vocabulary()
    for tok in tokens[2:]:  # PAD/UNK are implicit
        vocab.add(tok)

    tensors = {}
    for name, entry in header["manifest"].items():
        shape = tuple(entry["shape"])
        count = int(np.prod(shape))
        start = pos + entry["offset"]
        end = start + count * 8
        if end > len(blob):
            raise CheckpointError(f"{path}: truncated data for tensor {name!r}")
        tensors[name] = np.frombuffer(blob[start:end], dtype="<f8").reshape(shape).copy()
    params = ModelParams(tensors)

    if expected_config is not None:
        expected = param_shapes(expected_config)
        missing = sorted(set(expected) - set(tensors))
        extra = sorted(set(tensors) - set(expected))
        if missing or extra:
            raise CheckpointError(
                f"{path}: parameter set mismatch (missing: {missing}, unexpected: {extra})"
            )
        for name, shape in expected.items():
            if tuple(tensors[name].shape) != shape:
                raise CheckpointError(
                    f"{path}: tensor {name!r} has shape {tensors[name].shape}, expected {shape}"
                )
    return params, config, vocab, answers
