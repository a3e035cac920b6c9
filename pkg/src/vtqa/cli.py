"""Command-line entry point: data generation, training, evaluation,
ablation, and attention visualization.

Exit codes: 0 success, 1 runtime failure, 2 usage/validation error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import model as vm
from . import training, viz
from .data import (
    AnswerVocabulary,
    SynthConfig,
    generate_synthetic,
    load_dataset,
    write_dataset,
)
from .model import ModelConfig, TEXTQA_ONLY, VQA_ONLY, VTQA


class UsageError(ValueError):
    pass


def _preset_config(preset: str, variant: str) -> ModelConfig:
    if preset == "desk":
        cfg = vm.desk_preset()
    elif preset == "paper":
        cfg = vm.paper_preset()
    else:
        raise UsageError(f"unknown preset {preset!r}")
    if variant not in vm.VARIANTS:
        raise UsageError(f"unknown variant {variant!r}")
    return replace(cfg, variant=variant, early_fusion=(variant == VTQA))


def _load_splits(data_dir: str) -> tuple[list, list, list]:
    root = Path(data_dir)
    paths = [root / f"{split}.jsonl" for split in ("train", "val", "test")]
    for p in paths:
        if not p.exists():
            raise UsageError(f"missing dataset file {p}")
    return tuple(load_dataset(p) for p in paths)  # type: ignore[return-value]


def cmd_gen_data(args: argparse.Namespace) -> int:
    config = SynthConfig(
        n_samples=args.n, clue_rate=args.clue_rate, noise=args.noise, seed=args.seed
    )
    try:
        config.validate()
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise UsageError(f"cannot create output directory {out}: {exc}") from exc
    splits = generate_synthetic(config)
    for name, records in zip(("train", "val", "test"), splits):
        write_dataset(records, out / f"{name}.jsonl")
        print(f"{name}: {len(records)} samples -> {out / (name + '.jsonl')}")
    return 0


def _train_model_config(args: argparse.Namespace) -> ModelConfig:
    cfg = _preset_config(args.preset, args.variant)
    if args.variant != VTQA and (args.no_lf or args.no_ar):
        print(
            f"warning: --no-lf/--no-ar have no effect for variant {args.variant}",
            file=sys.stderr,
        )
    return replace(
        cfg,
        late_fusion=(not args.no_lf) and args.variant == VTQA,
        answer_recommendation=(not args.no_ar) and args.variant == VTQA,
        credit=args.credit,
        seed=args.seed,
    )


def cmd_train(args: argparse.Namespace) -> int:
    train_set, val_set, test_set = _load_splits(args.data)
    model_config = _train_model_config(args)
    train_config = training.TrainConfig(
        epochs=args.epochs, batch_size=args.batch_size, seed=args.seed
    )
    result = training.train(model_config, train_config, train_set, val_set)
    test = training.evaluate(
        result.params, result.config, test_set, result.vocab, result.answer_vocab
    )
    result.metrics.test_accuracy = test.accuracy

    vm.save_checkpoint(
        args.out, result.params, result.config, result.vocab,
        result.answer_vocab.index_to_answer,
    )
    metrics_path = Path(args.out).with_suffix(".metrics.json")
    metrics_path.write_text(json.dumps(result.metrics.to_json(), indent=2))
    print(f"checkpoint: {args.out}")
    print(f"metrics: {metrics_path}")
    print(f"val accuracy: {result.metrics.best_val_accuracy:.4f}")
    print(f"test accuracy: {test.accuracy:.4f}")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    params, config, vocab, answers = vm.load_checkpoint(args.ckpt)
    dataset = load_dataset(args.data)
    result = training.evaluate(params, config, dataset, vocab, AnswerVocabulary(answers))
    if result.warning:
        print(f"warning: {result.warning}", file=sys.stderr)
    print(f"accuracy: {result.accuracy:.4f} ({result.correct}/{result.total})")
    return 0


def ablation_variants(preset: str) -> dict[str, ModelConfig]:
    """The four combined-model rows plus the visual-only baseline."""
    base = _preset_config(preset, VTQA)
    return {
        "vqa": _preset_config(preset, VQA_ONLY),
        "vtqa_ef": replace(base, late_fusion=False, answer_recommendation=False),
        "vtqa_ef_lf": replace(base, late_fusion=True, answer_recommendation=False),
        "vtqa_ef_ar": replace(base, late_fusion=False, answer_recommendation=True),
        "vtqa_ef_lf_ar": replace(base, late_fusion=True, answer_recommendation=True),
    }


def cmd_ablate(args: argparse.Namespace) -> int:
    train_set, val_set, test_set = _load_splits(args.data)
    train_config = training.TrainConfig(epochs=args.epochs, batch_size=args.batch_size)
    report = training.ablate(
        ablation_variants(args.preset), train_config, train_set, val_set, test_set,
        n_seeds=args.seeds,
    )
    print(report.as_table())
    if args.report:
        Path(args.report).write_text(
            json.dumps({"rows": report.rows, "medians": report.medians}, indent=2)
        )
        print(f"report: {args.report}", file=sys.stderr)
    return 0


def cmd_visualize(args: argparse.Namespace) -> int:
    params, config, vocab, answers = vm.load_checkpoint(args.ckpt)
    if not config.uses_paragraph:
        raise UsageError(f"variant {config.variant!r} has no paragraph attention to visualize")
    dataset = load_dataset(args.data)
    by_id = {s.id: s for s in dataset}
    if args.id not in by_id:
        raise UsageError(f"sample id {args.id!r} not found in {args.data}")
    sample = by_id[args.id]

    answer_vocab = AnswerVocabulary(answers)
    result = vm.forward(sample, params, config, vocab, answer_index=answer_vocab.answer_to_index)
    alpha = result.attention["paragraph"]
    predicted = answer_vocab.answer(result.predicted_index)

    print(viz.attention_table(sample.paragraph, alpha, sample.question, predicted, sample.answer))
    svg = viz.attention_svg(sample.paragraph, alpha, sample.question, predicted, sample.answer)
    Path(args.out).write_text(svg)
    print(f"svg: {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vtqa", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic clue dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--clue-rate", type=float, default=1.0)
    p.add_argument("--noise", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gen_data)

    def add_train_flags(p):
        p.add_argument("--data", required=True)
        p.add_argument("--preset", choices=("desk", "paper"), default="desk")
        p.add_argument("--epochs", type=int, default=5)
        p.add_argument("--batch-size", type=int, default=32)

    p = sub.add_parser("train", help="train one variant")
    add_train_flags(p)
    p.add_argument("--variant", choices=vm.VARIANTS, default=VTQA)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--no-lf", action="store_true", help="disable late fusion")
    p.add_argument("--no-ar", action="store_true", help="disable answer recommendation")
    p.add_argument("--credit", type=float, default=1.0)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset file")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="train/test all variants over several seeds")
    add_train_flags(p)
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--report", help="write a JSON report here")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("visualize-attention", help="render per-sentence attention")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--id", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_visualize)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (FileNotFoundError, vm.CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
