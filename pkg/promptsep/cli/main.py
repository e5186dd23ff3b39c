"""
Command-line entry point.

  promptsep train --config exp.yaml [--train-epochs 3 ...]
  promptsep separate mix.wav --checkpoint best.pt --prompts speech,sfx-mix
  promptsep evaluate items.jsonl --checkpoint best.pt --preset se --convention si-snr
  promptsep presets

Exit codes: 0 success, 1 runtime failure, 2 invalid prompt combination or configuration.
"""

import argparse
import json
import logging
import sys
from pathlib import Path

import torch

from ..core.audio import read_wav, write_wav
from ..core.errors import ConfigError, PromptSetError, SeparationError
from ..core.types import PromptSet
from ..losses.snr import METRIC_CONVENTIONS
from ..model.baseline import FixedOutputSeparator, head_labels
from ..model.checkpoint import load_checkpoint
from ..train.config import add_train_flags, load_experiment_config, train_overrides
from ..train.trainer import run_experiment
from ..util.colors import use_color
from ..util.logs import setup_logging
from .evaluate import check_input_rate, evaluate, format_report_table, load_eval_manifest
from .presets import TASK_PRESETS, format_preset_table, preset_lookup

logger = logging.getLogger("promptsep")

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_INVALID = 2


def _prompt_args(parser: argparse.ArgumentParser):
    parser.add_argument("--prompts", help="comma-separated categories, e.g. speech,sfx-mix")
    parser.add_argument("--preset", choices=sorted(TASK_PRESETS), help="task preset")
    parser.add_argument("--n", type=int, help="source count for ss, noisy-ss and uss presets")
    parser.add_argument("--with-noise", action="store_true", help="append sfx-mix to the preset")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="promptsep", description="Prompt-conditioned audio source separation")
    parser.add_argument("--log-level", default="INFO", help="logging level (default INFO)")
    parser.add_argument("--log-file", type=Path, help="also write the log to this file")
    commands = parser.add_subparsers(dest="command", required=True)

    train = commands.add_parser("train", help="train or fine-tune from a YAML experiment file")
    train.add_argument("--config", type=Path, required=True)
    train.add_argument("--resume", type=Path, help="continue from a checkpoint written by train")
    add_train_flags(train)

    separate = commands.add_parser("separate", help="separate one or more WAV files")
    separate.add_argument("inputs", nargs="+", type=Path)
    separate.add_argument("--checkpoint", type=Path, required=True)
    separate.add_argument("--output-dir", type=Path, help="default: next to each input")
    separate.add_argument("--device", default="cpu")
    _prompt_args(separate)

    evaluate_cmd = commands.add_parser("evaluate", help="score a model on an evaluation manifest")
    evaluate_cmd.add_argument("manifest", type=Path)
    evaluate_cmd.add_argument("--checkpoint", type=Path)
    evaluate_cmd.add_argument("--convention", default="si-snr", choices=sorted(METRIC_CONVENTIONS))
    evaluate_cmd.add_argument("--single-category", action="store_true",
                              help="one forward pass per category")
    evaluate_cmd.add_argument("--oracle", action="store_true", help="score references against themselves")
    evaluate_cmd.add_argument("--metrics-out", type=Path, default=Path("eval_report.jsonl"))
    evaluate_cmd.add_argument("--workers", type=int, default=1)
    evaluate_cmd.add_argument("--device", default="cpu")
    evaluate_cmd.add_argument("--seed", type=int, default=0, help="torch seed for reproducible runs")
    _prompt_args(evaluate_cmd)

    commands.add_parser("presets", help="list task presets and their prompts")
    return parser


def resolve_prompts(args: argparse.Namespace, required: bool = True) -> PromptSet | None:
    if args.prompts and args.preset:
        raise ConfigError("give either --prompts or --preset, not both")
    if args.prompts:
        try:
            return PromptSet.parse(args.prompts)
        except PromptSetError:
            raise
        except ValueError as e:
            raise ConfigError(str(e)) from e
    if args.preset:
        return preset_lookup(args.preset, args.n, args.with_noise)
    if required:
        raise ConfigError("one of --prompts or --preset is required")
    return None


def cmd_train(args: argparse.Namespace) -> int:
    experiment = load_experiment_config(args.config, train_overrides(args))
    if args.log_file is None:
        setup_logging(args.log_level, experiment.run_dir / "train.log")
    written = run_experiment(experiment, resume=args.resume)
    for path in written:
        print(json.dumps({"checkpoint": str(path)}))
    return EXIT_OK


def cmd_separate(args: argparse.Namespace) -> int:
    # usage errors first, before the checkpoint is read
    prompts = resolve_prompts(args, required=False)
    checkpoint = load_checkpoint(args.checkpoint)
    model = checkpoint.build_model(args.device)
    model.eval()
    fixed_output = isinstance(model, FixedOutputSeparator)
    if prompts is None and not fixed_output:
        raise ConfigError("one of --prompts or --preset is required")

    for path in args.inputs:
        mixture = read_wav(path)
        check_input_rate(mixture, path)
        if fixed_output:
            outputs = model.separate(mixture)
            labels = head_labels(len(outputs))
        else:
            outputs = model.separate(mixture, prompts)
            labels = prompts.names
        out_dir = args.output_dir or path.parent
        for index, (label, audio) in enumerate(zip(labels, outputs)):
            target = out_dir / f"{path.stem}.{index}.{label}.wav"
            write_wav(target, audio)
            print(json.dumps({
                "input": str(path),
                "index": index,
                "category": label,
                "path": str(target),
                "sample_rate_hz": audio.sample_rate_hz,
                "num_samples": len(audio),
            }))
        logger.info("%s: wrote %d outputs to %s", path, len(outputs), out_dir)
    return EXIT_OK


def cmd_evaluate(args: argparse.Namespace) -> int:
    torch.manual_seed(args.seed)
    preset = resolve_prompts(args, required=False)
    model = None
    if not args.oracle:
        if args.checkpoint is None:
            raise ConfigError("--checkpoint is required unless --oracle is given")
        model = load_checkpoint(args.checkpoint).build_model(args.device)
    items = load_eval_manifest(args.manifest)
    report = evaluate(
        items,
        model,
        convention=args.convention,
        preset=preset,
        oracle=args.oracle,
        single_category=args.single_category,
        workers=args.workers,
        progress=use_color(sys.stderr),
    )
    report.write(args.metrics_out)
    print(format_report_table(report, color=use_color(sys.stdout)))
    logger.info("report written to %s", args.metrics_out)
    return EXIT_OK


def cmd_presets(args: argparse.Namespace) -> int:
    print(format_preset_table(color=use_color(sys.stdout)))
    return EXIT_OK


COMMANDS = {
    "train": cmd_train,
    "separate": cmd_separate,
    "evaluate": cmd_evaluate,
    "presets": cmd_presets,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(args.log_level, args.log_file)
    try:
        return COMMANDS[args.command](args)
    except (PromptSetError, ConfigError) as e:
        rule = f" [{e.rule}]" if isinstance(e, PromptSetError) else ""
        print(f"error{rule}: {e}", file=sys.stderr)
        return EXIT_INVALID
    except (SeparationError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
