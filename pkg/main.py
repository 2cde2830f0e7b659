"""
DeskAIA Main Application
Command-line front end: generate | train | eval | bench | attn
"""
import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import List, Optional

# Add project root to path
sys.path.append(os.path.dirname(os.path.abspath(__file__)))

from config.run_config import RunConfig, load_run_config
from config.settings import LOGGING_CONFIG
from src.bench import (
    Trainer, dump_attention, evaluate_map, generate_dataset, load_checkpoint, load_dataset,
    parse_clip_selector, run_bench, save_dataset,
)
from src.bench.trainer import CHECKPOINT_FILE
from src.utils.errors import AIAError, ConfigError, EmptySplitError
from src.utils.log_setup import setup_logging

logger = logging.getLogger("deskaia")

DATASET_FILE = "dataset.bin"
SUMMARY_FILE = "summary.json"
EVAL_FILE = "eval_report.json"
BENCH_FILE = "bench.csv"
ATTENTION_DIR = "attention"

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2


class DeskAIA:
    """
    One run directory driven by one JSON config
    """

    def __init__(self, config: RunConfig):
        self.config = config
        self.output_dir = Path(config.output_dir)

    def _write_json(self, name: str, payload) -> Path:
        self.output_dir.mkdir(parents=True, exist_ok=True)
        path = self.output_dir / name
        path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return path

    def _dataset(self, path: Optional[str] = None):
        """Load the dataset file if present, otherwise regenerate it from the seed"""
        path = Path(path) if path else self.output_dir / DATASET_FILE
        if path.exists():
            return load_dataset(path)
        if path != self.output_dir / DATASET_FILE:
            raise FileNotFoundError(f"dataset file not found: {path}")
        return generate_dataset(self.config.world)

    def generate(self, out_path: Optional[str] = None) -> Path:
        path = Path(out_path) if out_path else self.output_dir / DATASET_FILE
        return save_dataset(generate_dataset(self.config.world), path)

    def train(self, resume: bool = False) -> Path:
        dataset = self._dataset()
        if resume:
            trainer = Trainer.resume(self.config, dataset, self.output_dir)
        else:
            trainer = Trainer(self.config, dataset)

        metrics = trainer.train()
        trainer.save(self.output_dir)
        self._write_json(SUMMARY_FILE, {
            "mode": self.config.mode,
            "window": self.config.window,
            "iterations": trainer.iteration,
            "final_loss": float(metrics["loss"].iloc[-1]) if len(metrics) else None,
            "seed": self.config.seed,
        })
        logger.info(f"[CLI] Training finished after {trainer.iteration} iterations")
        return self.output_dir

    def evaluate(self, checkpoint: Optional[str] = None, dataset_path: Optional[str] = None) -> Path:
        model, _, meta = load_checkpoint(Path(checkpoint) if checkpoint else self.output_dir / CHECKPOINT_FILE)
        dataset = self._dataset(dataset_path)

        trained = set(meta.get("train_videos", []))
        videos = [v for v in meta.get("eval_videos", []) if v in set(dataset.video_ids)]
        if not videos:
            videos = [v for v in dataset.split(self.config.trainer.eval_fraction)[1] if v not in trained]
        if not videos:
            raise EmptySplitError("no held-out videos to evaluate")

        report = evaluate_map(model, dataset, videos)
        return self._write_json(EVAL_FILE, report.to_dict())

    def bench(self) -> Path:
        self.output_dir.mkdir(parents=True, exist_ok=True)
        path = self.output_dir / BENCH_FILE
        run_bench(self.config).to_csv(path, index=False)
        logger.info(f"[BENCH] Wrote {path}")
        return path

    def attention(self, selector: str, checkpoint: Optional[str] = None,
                  dataset_path: Optional[str] = None) -> List[Path]:
        video_id, clip_idx = parse_clip_selector(selector)
        model, _, _ = load_checkpoint(Path(checkpoint) if checkpoint else self.output_dir / CHECKPOINT_FILE)
        dataset = self._dataset(dataset_path)
        return dump_attention(model, dataset, video_id, clip_idx, self.output_dir / ATTENTION_DIR)


class CLIParser(argparse.ArgumentParser):
    """Usage problems are configuration errors (exit code 1)"""

    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = CLIParser(prog="deskaia", description="Desk-scale asynchronous interaction aggregation")
    parser.add_argument("--log-level", default=None, help="Override LOG_LEVEL")
    commands = parser.add_subparsers(dest="command", required=True, parser_class=CLIParser)

    def add(name, help_text):
        sub = commands.add_parser(name, help=help_text)
        sub.add_argument("--config", required=True, help="JSON run config")
        sub.add_argument("--seed", type=int, default=None, help="Override the config seed")
        sub.add_argument("--output-dir", default=None, help="Override the config output directory")
        return sub

    generate = add("generate", "Write the synthetic dataset")
    generate.add_argument("--out", default=None, help="Dataset path (default: <output-dir>/dataset.bin)")

    train = add("train", "Train and write checkpoint, pool and metrics")
    train.add_argument("--resume", action="store_true", help="Continue from the checkpoint in the output dir")

    evaluate = add("eval", "Per-class AP and mAP on held-out videos")
    evaluate.add_argument("--checkpoint", default=None)
    evaluate.add_argument("--dataset", default=None)

    add("bench", "Resource counts over the L grid for both modes")

    attn = add("attn", "Dump per-block attention maps for one clip")
    attn.add_argument("--clip", required=True, help="VIDEO:CLIP")
    attn.add_argument("--checkpoint", default=None)
    attn.add_argument("--dataset", default=None)
    return parser


def run(args: argparse.Namespace) -> None:
    config = load_run_config(args.config, seed=args.seed, output_dir=args.output_dir)
    app = DeskAIA(config)

    if args.command == "generate":
        app.generate(args.out)
    elif args.command == "train":
        app.train(resume=args.resume)
    elif args.command == "eval":
        app.evaluate(args.checkpoint, args.dataset)
    elif args.command == "bench":
        app.bench()
    elif args.command == "attn":
        try:
            parse_clip_selector(args.clip)
        except ValueError as e:
            raise ConfigError(str(e)) from e
        app.attention(args.clip, args.checkpoint, args.dataset)


def main(argv: Optional[List[str]] = None) -> int:
    """Main application entry point; returns the process exit code"""
    try:
        args = build_parser().parse_args(argv)
    except ConfigError as e:
        setup_logging(LOGGING_CONFIG)
        logger.error(f"[CLI] {e}")
        return EXIT_CONFIG

    setup_logging(LOGGING_CONFIG, level=args.log_level)
    try:
        run(args)
    except ConfigError as e:
        logger.error(f"[CLI] {e}")
        return EXIT_CONFIG
    except (AIAError, OSError, KeyError) as e:
        logger.error(f"[CLI] {type(e).__name__}: {e}")
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
