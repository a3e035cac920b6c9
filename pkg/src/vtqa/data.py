"""Dataset ingestion, answer-vocabulary construction with frequency
truncation, and a seeded synthetic generator that plants textual clues."""

from __future__ import annotations

import json
import struct
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .text import AlignmentError

FEATURE_MAGIC = b"VTQAFEAT"


@dataclass
class SampleRecord:
    """One QA instance: visual features plus the aligned text inputs."""

    id: str
    visual: np.ndarray            # O x d_v
    object_names: list[str]
    object_attributes: list[list[str]]
    paragraph: list[str]
    question: str
    answer: str

    def validate(self) -> None:
        o = self.visual.shape[0]
        if self.visual.ndim != 2 or o < 1:
            raise AlignmentError(f"sample {self.id}: visual must be a nonempty matrix")
        if len(self.object_names) != o or len(self.object_attributes) != o:
            raise AlignmentError(
                f"sample {self.id}: {o} visual rows vs {len(self.object_names)} names "
                f"and {len(self.object_attributes)} attribute lists"
            )
        if len(self.paragraph) < 1:
            raise AlignmentError(f"sample {self.id}: paragraph must have at least one sentence")


class AnswerVocabulary:
    """Bidirectional answer-string/index map built by frequency truncation."""

    def __init__(self, answers: Sequence[str]):
        self.index_to_answer = list(answers)
        self.answer_to_index = {a: i for i, a in enumerate(answers)}
        if len(self.answer_to_index) != len(self.index_to_answer):
            raise ValueError("duplicate answers in vocabulary")

    def __len__(self) -> int:
        return len(self.index_to_answer)

    def __contains__(self, answer: str) -> bool:
        return answer in self.answer_to_index

    def index(self, answer: str) -> int:
        return self.answer_to_index[answer]

    def answer(self, index: int) -> str:
        return self.index_to_answer[index]


def build_answer_vocab(training_answers: Iterable[str], min_frequency: int) -> AnswerVocabulary:
    """Retain answers seen at least ``min_frequency`` times, indexed by
    descending count with lexicographic tie-breaking."""
    if min_frequency < 1:
        raise ValueError(f"min_frequency must be >= 1, got {min_frequency}")
    counts = Counter(training_answers)
    kept = sorted(
        (a for a, c in counts.items() if c >= min_frequency),
        key=lambda a: (-counts[a], a),
    )
    if not kept:
        raise ValueError(f"no answers occur >= {min_frequency} times")
    return AnswerVocabulary(kept)


# ---------------------------------------------------------------------------
# JSONL samples + binary feature sidecar

def write_dataset(records: Sequence[SampleRecord], path: str | Path, inline_visual: bool = True) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            obj = {
                "id": r.id,
                "object_names": r.object_names,
                "object_attributes": r.object_attributes,
                "paragraph": r.paragraph,
                "question": r.question,
                "answer": r.answer,
            }
            if inline_visual:
                obj["visual"] = [[float(np.float32(x)) for x in row] for row in r.visual]
            fh.write(json.dumps(obj) + "\n")


def write_feature_sidecar(records: Sequence[SampleRecord], path: str | Path) -> None:
    """Binary sidecar: magic, record count, then per record
    id-length / id / O / d_v / row-major little-endian float32 data."""
    with open(path, "wb") as fh:
        fh.write(FEATURE_MAGIC)
        fh.write(struct.pack("<I", len(records)))
        for r in records:
            raw_id = r.id.encode("utf-8")
            o, d_v = r.visual.shape
            fh.write(struct.pack("<I", len(raw_id)))
            fh.write(raw_id)
            fh.write(struct.pack("<II", o, d_v))
            fh.write(np.asarray(r.visual, dtype="<f4").tobytes())


def read_feature_sidecar(path: str | Path) -> dict[str, np.ndarray]:
    with open(path, "rb") as fh:
        magic = fh.read(len(FEATURE_MAGIC))
        if magic != FEATURE_MAGIC:
            raise ValueError(f"{path}: bad feature-file magic {magic!r}")
        (count,) = struct.unpack("<I", fh.read(4))
        features = {}
        for _ in range(count):
            (id_len,) = struct.unpack("<I", fh.read(4))
            sample_id = fh.read(id_len).decode("utf-8")
            o, d_v = struct.unpack("<II", fh.read(8))
            raw = fh.read(o * d_v * 4)
            if len(raw) != o * d_v * 4:
                raise ValueError(f"{path}: truncated features for id {sample_id!r}")
            features[sample_id] = np.frombuffer(raw, dtype="<f4").astype(np.float64).reshape(o, d_v)
    return features


def load_dataset(samples_path: str | Path, features_path: str | Path | None = None) -> list[SampleRecord]:
    """One record per JSONL line; visual features inline or resolved from the
    binary sidecar by id."""
    sidecar = read_feature_sidecar(features_path) if features_path else {}
    records = []
    with open(samples_path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{samples_path}:{lineno}: malformed JSON ({exc})") from exc
            try:
                if "visual" in obj:
                    visual = np.asarray(obj["visual"], dtype=np.float64)
                elif obj["id"] in sidecar:
                    visual = sidecar[obj["id"]]
                else:
                    raise ValueError(f"{samples_path}:{lineno}: no features for id {obj['id']!r}")
                record = SampleRecord(
                    id=obj["id"],
                    visual=visual,
                    object_names=list(obj["object_names"]),
                    object_attributes=[list(a) for a in obj["object_attributes"]],
                    paragraph=list(obj["paragraph"]),
                    question=obj["question"],
                    answer=obj["answer"],
                )
            except KeyError as exc:
                raise ValueError(f"{samples_path}:{lineno}: missing field {exc}") from exc
            record.validate()
            records.append(record)
    return records


# ---------------------------------------------------------------------------
# synthetic generator

DEFAULT_NAMES = [
    "cow", "dog", "cat", "horse", "bird", "sheep", "car", "boat", "kite", "zebra",
]
DEFAULT_COLORS = ["brown", "black", "white", "red", "blue", "green", "yellow", "gray"]
DEFAULT_COUNTS = ["two", "three", "four", "five", "six"]
DEFAULT_ACTIONS = ["running", "sleeping", "eating", "jumping", "standing", "flying"]


@dataclass
class SynthConfig:
    """Knobs for the planted-clue synthetic dataset."""

    n_samples: int = 2000
    names: list[str] = field(default_factory=lambda: list(DEFAULT_NAMES))
    colors: list[str] = field(default_factory=lambda: list(DEFAULT_COLORS))
    counts: list[str] = field(default_factory=lambda: list(DEFAULT_COUNTS))
    actions: list[str] = field(default_factory=lambda: list(DEFAULT_ACTIONS))
    noise: float = 0.5
    clue_rate: float = 1.0
    feature_dim: int = 64
    seed: int = 0

    def validate(self) -> None:
        if not 0.0 <= self.clue_rate <= 1.0:
            raise ValueError(f"clue_rate must be in [0, 1], got {self.clue_rate}")
        if self.noise < 0:
            raise ValueError(f"noise must be >= 0, got {self.noise}")
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        if len(self.names) < 5:
            raise ValueError("need at least 5 object names")


_CLUE_TEMPLATES = {
    "color": "the color of the {name} is {answer}",
    "count": "there are {answer} {name}s here",
    "action": "the {name} is {answer} now",
}
_QUESTION_TEMPLATES = {
    "color": "what color is the {name}",
    "count": "how many {name}s are there",
    "action": "what is the {name} doing",
}


def is_clue_sentence(sentence: str) -> bool:
    """Structural test for the generator's clue templates (as opposed to the
    per-object scene sentences)."""
    return (
        sentence.startswith("the color of the ")
        or sentence.startswith("there are ")
        or sentence.endswith(" now")
    )


def object_prototypes(config: SynthConfig) -> dict[str, np.ndarray]:
    """Per-name identity feature vector; the only signal the visual branch
    gets (attributes and counts are textual-only)."""
    rng = np.random.default_rng([config.seed, 7])
    return {name: rng.standard_normal(config.feature_dim) for name in config.names}


def generate_synthetic(config: SynthConfig) -> tuple[list[SampleRecord], list[SampleRecord], list[SampleRecord]]:
    """Seeded synthetic dataset with 80/10/10 train/val/test splits."""
    config.validate()
    prototypes = object_prototypes(config)
    rng = np.random.default_rng([config.seed, 11])

    records = []
    for i in range(config.n_samples):
        n_obj = int(rng.integers(2, 6))
        names = list(rng.choice(config.names, size=n_obj, replace=False))
        colors = [str(rng.choice(config.colors)) for _ in names]
        actions = [str(rng.choice(config.actions)) for _ in names]
        counts = [str(rng.choice(config.counts)) for _ in names]

        visual = np.stack(
            [prototypes[n] + config.noise * rng.standard_normal(config.feature_dim) for n in names]
        )
        paragraph = [
            f"the {color} {name} is in the picture" for color, name in zip(colors, names)
        ]

        target = int(rng.integers(n_obj))
        qtype = str(rng.choice(["color", "count", "action"]))
        answer = {"color": colors, "count": counts, "action": actions}[qtype][target]
        question = _QUESTION_TEMPLATES[qtype].format(name=names[target])

        if rng.random() < config.clue_rate:
            clue = _CLUE_TEMPLATES[qtype].format(name=names[target], answer=answer)
            pos = int(rng.integers(len(paragraph) + 1))
            paragraph.insert(pos, clue)

        records.append(
            SampleRecord(
                id=f"synth-{i:06d}",
                visual=visual,
                object_names=names,
                object_attributes=[[c] for c in colors],
                paragraph=paragraph,
                question=question,
                answer=answer,
            )
        )

    n_val = config.n_samples // 10
    n_test = config.n_samples // 10
    n_train = config.n_samples - n_val - n_test
    return (
        records[:n_train],
        records[n_train:n_train + n_val],
        records[n_train + n_val:],
    )
