"""Cross-entropy loss, AdaMax optimizer, training loop, evaluation, and the
multi-variant ablation harness."""

from __future__ import annotations

import os
import statistics
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import autodiff as ad
from . import model as vm
from .autodiff import Tape, Tensor
from .data import AnswerVocabulary, SampleRecord, build_answer_vocab
from .model import ModelConfig, ModelParams
from .text import Vocabulary, make_property_sentence

cross_entropy = ad.cross_entropy_with_logits

NON_PAPER_DEFAULTS = {
    "loss": "softmax cross-entropy on the fused logits",
    "batch_size": 32,
    "weight_init": "uniform, scale 1/sqrt(fan_in)",
}


@dataclass
class TrainConfig:
    learning_rate: float = 0.002
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    epochs: int = 5
    batch_size: int = 32
    eval_every: int = 1
    seed: int = 0
    min_answer_frequency: int = 1

    def validate(self) -> None:
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("beta1/beta2 must lie in [0, 1)")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")


@dataclass
class OptimizerState:
    """AdaMax first moment m and infinity-norm accumulator u per parameter."""

    m: dict[str, np.ndarray]
    u: dict[str, np.ndarray]
    t: int = 0

    @classmethod
    def for_params(cls, params: ModelParams) -> "OptimizerState":
        return cls(
            m={k: np.zeros(v.shape) for k, v in params.items()},
            u={k: np.zeros(v.shape) for k, v in params.items()},
        )


def adamax_step(
    params: ModelParams,
    grads: dict[str, np.ndarray],
    state: OptimizerState,
    config: TrainConfig,
) -> None:
    """One AdaMax update in place:
    m = b1 m + (1-b1) g; u = max(b2 u, |g|);
    theta -= (lr / (1 - b1^t)) * m / u, skipping entries where u is 0.
    The PAD embedding row is forced back to zero afterwards."""
    state.t += 1
    correction = 1.0 - config.beta1 ** state.t
    for name, _ in params.items():
        g = grads[name]
        if g.shape != params[name].shape:
            raise ad.ShapeError(f"gradient for {name!r}: {g.shape} vs {params[name].shape}")
        state.m[name] = config.beta1 * state.m[name] + (1.0 - config.beta1) * g
        state.u[name] = np.maximum(config.beta2 * state.u[name], np.abs(g))
        u = state.u[name]
        live = u > 0.0  # u == 0 only if every gradient so far was 0
        update = np.zeros_like(u)
        update[live] = state.m[name][live] / u[live]
        params[name] = params[name] - (config.learning_rate / correction) * update
        if name.endswith(".table"):
            updated = params[name]
            updated[0] = 0.0
            params[name] = updated


def build_vocab(samples: Sequence[SampleRecord]) -> Vocabulary:
    """Token vocabulary over every text surface the model consumes."""
    texts = []
    for s in samples:
        texts.append(s.question)
        texts.extend(s.paragraph)
        texts.extend(
            make_property_sentence(n, a) for n, a in zip(s.object_names, s.object_attributes)
        )
    return Vocabulary.from_texts(texts)


@dataclass
class Metrics:
    train_loss: list[float] = field(default_factory=list)
    val_accuracy: list[float] = field(default_factory=list)
    best_val_accuracy: float = 0.0
    best_epoch: int = 0
    dropped_train_samples: int = 0
    test_accuracy: float | None = None
    non_paper_defaults: dict = field(default_factory=lambda: dict(NON_PAPER_DEFAULTS))

    def to_json(self) -> dict:
        return {
            "non_paper_defaults": self.non_paper_defaults,
            "train_loss": self.train_loss,
            "val_accuracy": self.val_accuracy,
            "best_val_accuracy": self.best_val_accuracy,
            "best_epoch": self.best_epoch,
            "dropped_train_samples": self.dropped_train_samples,
            "test_accuracy": self.test_accuracy,
        }


@dataclass
class TrainResult:
    params: ModelParams
    config: ModelConfig
    vocab: Vocabulary
    answer_vocab: AnswerVocabulary
    metrics: Metrics


def _batch_loss_and_grads(
    batch: Sequence[SampleRecord],
    params: ModelParams,
    config: ModelConfig,
    vocab: Vocabulary,
    answer_vocab: AnswerVocabulary,
) -> tuple[float, dict[str, np.ndarray]]:
    tape = Tape()
    leaves = vm.make_leaves(tape, params)
    losses = []
    for sample in batch:
        logits, _, _ = vm.forward_tensors(sample, leaves, config, vocab)
        losses.append(cross_entropy(logits, answer_vocab.index(sample.answer)))
    loss = ad.mean_over_list(losses)
    grads = tape.backward(loss)
    return loss.data.item(), {name: tape.grad(grads, leaf) for name, leaf in leaves.items()}


def train(
    model_config: ModelConfig,
    train_config: TrainConfig,
    train_set: Sequence[SampleRecord],
    val_set: Sequence[SampleRecord],
) -> TrainResult:
    """Minibatch training, deterministic given the two seeds; returns the
    parameters with the best validation accuracy."""
    train_config.validate()
    if not train_set:
        raise ValueError("empty training set")

    vocab = build_vocab(train_set)
    answer_vocab = build_answer_vocab(
        [s.answer for s in train_set], train_config.min_answer_frequency
    )
    config = replace(model_config, vocab_size=len(vocab), n_answers=len(answer_vocab))
    config.validate()

    usable = [s for s in train_set if s.answer in answer_vocab]
    dropped = len(train_set) - len(usable)
    if not usable:
        raise ValueError("no training samples with in-vocabulary answers")

    params = vm.init_params(config)
    state = OptimizerState.for_params(params)
    rng = np.random.default_rng(train_config.seed)
    metrics = Metrics(dropped_train_samples=dropped)
    metrics.non_paper_defaults = dict(NON_PAPER_DEFAULTS)
    metrics.non_paper_defaults["batch_size"] = train_config.batch_size
    best_params = params.copy()
    best_val = -1.0

    for epoch in range(1, train_config.epochs + 1):
        order = rng.permutation(len(usable))
        epoch_losses = []
        for start in range(0, len(usable), train_config.batch_size):
            batch = [usable[i] for i in order[start:start + train_config.batch_size]]
            loss, grads = _batch_loss_and_grads(batch, params, config, vocab, answer_vocab)
            epoch_losses.append(loss)
            adamax_step(params, grads, state, train_config)
        metrics.train_loss.append(float(np.mean(epoch_losses)))

        if epoch % train_config.eval_every == 0 or epoch == train_config.epochs:
            val = evaluate(params, config, val_set, vocab, answer_vocab)
            metrics.val_accuracy.append(val.accuracy)
            if val.accuracy > best_val:
                best_val = val.accuracy
                best_params = params.copy()
                metrics.best_epoch = epoch
    metrics.best_val_accuracy = max(best_val, 0.0)
    return TrainResult(best_params, config, vocab, answer_vocab, metrics)


@dataclass
class EvalResult:
    accuracy: float
    correct: int
    total: int
    warning: str | None = None


def evaluate(
    params: ModelParams,
    config: ModelConfig,
    dataset: Sequence[SampleRecord],
    vocab: Vocabulary,
    answer_vocab: AnswerVocabulary,
) -> EvalResult:
    """Fraction of samples whose final-logit argmax hits the target; samples
    with out-of-vocabulary answers count as wrong."""
    if not dataset:
        return EvalResult(0.0, 0, 0, warning="empty dataset")

    answer_index = answer_vocab.answer_to_index

    def is_correct(sample: SampleRecord) -> int:
        if sample.answer not in answer_vocab:
            return 0
        result = vm.forward(sample, params, config, vocab, answer_index=answer_index)
        return int(result.predicted_index == answer_vocab.index(sample.answer))

    threads = int(os.environ.get("VTQA_THREADS", "1"))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            correct = sum(pool.map(is_correct, dataset))
    else:
        correct = sum(is_correct(s) for s in dataset)
    return EvalResult(correct / len(dataset), correct, len(dataset))


@dataclass
class AblationReport:
    rows: list[dict]        # one row per (variant, seed)
    medians: dict[str, float]

    def as_table(self) -> str:
        lines = ["variant\tseed\ttest_accuracy"]
        for row in self.rows:
            lines.append(f"{row['variant']}\t{row['seed']}\t{row['test_accuracy']:.4f}")
        for name, med in self.medians.items():
            lines.append(f"{name}\tmedian\t{med:.4f}")
        return "\n".join(lines)


def ablate(
    variant_configs: dict[str, ModelConfig],
    train_config: TrainConfig,
    train_set: Sequence[SampleRecord],
    val_set: Sequence[SampleRecord],
    test_set: Sequence[SampleRecord],
    n_seeds: int = 5,
) -> AblationReport:
    """Train and test every variant over the same seed set; reports one row
    per (variant, seed) plus a per-variant median."""
    if not variant_configs:
        raise ValueError("need at least one variant config")
    rows = []
    medians = {}
    for name, cfg in variant_configs.items():
        accs = []
        for seed in range(n_seeds):
            run_model = replace(cfg, seed=seed)
            run_train = replace(train_config, seed=seed)
            result = train(run_model, run_train, train_set, val_set)
            test = evaluate(result.params, result.config, test_set, result.vocab, result.answer_vocab)
            rows.append({"variant": name, "seed": seed, "test_accuracy": test.accuracy})
            accs.append(test.accuracy)
        medians[name] = statistics.median(accs)
    return AblationReport(rows=rows, medians=medians)
