"""
dpl/cli.py

Command-line entry point.

Usage:
    python main.py [--log-level L] <command> [options]

Exit codes:
    0 -> success
    1 -> usage or configuration error
    2 -> data, checkpoint or other file-format error
    3 -> numeric failure (non-finite values, dimension mismatch)
"""
from __future__ import annotations

import argparse
import logging
import sys
from typing import List, Optional, Sequence

from pydantic import ValidationError

from dpl import __version__
from dpl.api.schemas import GeneratorSpecDocument
from dpl.config import PRESETS, ConfigManager
from dpl.core.errors import ConfigError, DataFormatError, DplError, TrainingAborted
from dpl.core.files import load_json_file, save_json_file
from dpl.data.formats import load_dataset, save_dataset
from dpl.data.synthetic import DESK_D_IN, class_summary, desk_generator_spec, generate_synthetic, split
from dpl.modeling.checkpoint import load_checkpoint, save_checkpoint
from dpl.services.evaluation import compare_modes, evaluate
from dpl.services.experiments import SWEEP_PARAMS, run_sweep
from dpl.services.gradcheck import all_passed, format_results, run_grad_check
from dpl.services.inference import MODES, export_embeddings
from dpl.services.trainer import train
from dpl.services.verification import run_verification

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1


class UsageError(Exception):
    pass


class _ArgumentParser(argparse.ArgumentParser):
    """argparse exits 2 on bad usage; this maps it to exit 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _csv_floats(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers: {text}") from e


def _csv_ints(text: str) -> List[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers: {text}") from e


# ---------- Commands ----------

def cmd_gen_data(args) -> int:
    if args.spec:
        data = load_json_file(args.spec, error_cls=DataFormatError)
        try:
            spec = GeneratorSpecDocument.model_validate(data).to_spec()
        except ValidationError as e:
            raise ConfigError(f"{args.spec}: invalid generator spec: {e.errors()[0]['msg']}") from e
    else:
        spec = desk_generator_spec(seed=args.seed, d_in=args.d_in)
    dataset = generate_synthetic(spec)
    save_dataset(dataset, args.out)
    print(f"[OK] Wrote {len(dataset)} instances to {args.out}")
    print(f"[INFO] Class counts: {class_summary(dataset)}")
    return EXIT_OK



def cmd_split(args) -> int:
    dataset = load_dataset(args.data)
    train_set, test_set = split(dataset, args.train_frac, args.seed)
    save_dataset(train_set, args.train_out)
    save_dataset(test_set, args.test_out)
    print(f"[OK] Split {len(dataset)} instances: {len(train_set)} train, {len(test_set)} test")
    return EXIT_OK


def cmd_train(args) -> int:
    config = ConfigManager(args.config, preset=args.preset).load_config(
        steps=args.steps, seed=args.seed)
    dataset = load_dataset(args.data)
    try:
        model, history = train(config, dataset)
    except TrainingAborted as e:
        if e.last_model is not None:
            lastgood = f"{args.out}.lastgood.json"
            save_checkpoint(e.last_model, lastgood)
            print(f"[INFO] Last good model (step {e.last_model.step}) saved to {lastgood}")
        raise
    save_checkpoint(model, args.out)
    last = history.records[-1].loss.total if history.records else float("nan")
    print(f"[OK] Trained {model.step} steps, final loss {last:.6f}; checkpoint at {args.out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    model = load_checkpoint(args.ckpt)
    dataset = load_dataset(args.data)
    report = evaluate(model, dataset, args.mode, args.topk or ())
    save_json_file(args.out, report.to_document().model_dump(mode="json"))
    print(f"[OK] {args.mode}: R={report.micro_recall:.4f} mR={report.mean_recall:.4f} "
          f"F={report.harmonic_f:.4f} -> {args.out}")
    return EXIT_OK


def cmd_compare(args) -> int:
    model = load_checkpoint(args.ckpt)
    dataset = load_dataset(args.data)
    biased, unbiased, doc = compare_modes(model, dataset, args.topk or ())
    save_json_file(args.out, doc.model_dump(mode="json"))
    for report in (biased, unbiased):
        print(f"[INFO] {report.mode:8s} R={report.micro_recall:.4f} "
              f"mR={report.mean_recall:.4f} F={report.harmonic_f:.4f}")
    print(f"[OK] Comparison written to {args.out}")
    return EXIT_OK


def cmd_export_embeddings(args) -> int:
    model = load_checkpoint(args.ckpt)
    dataset = load_dataset(args.data)
    export_embeddings(model, dataset, args.out, args.samples, args.seed)
    print(f"[OK] Embeddings written to {args.out}")
    return EXIT_OK


def cmd_grad_check(args) -> int:
    results = run_grad_check(seed=args.seed)
    print(format_results(results))
    if all_passed(results):
        print("[OK] All gradient groups pass")
        return EXIT_OK
    print("[ERROR] Gradient check failed")
    return 3


def cmd_verify(args) -> int:
    results = run_verification()
    failed = 0
    for name, result in results.items():
        tag = "[OK]" if result["status"] == "ok" else "[FAIL]"
        failed += result["status"] != "ok"
        print(f"{tag} {name}: {result['msg']}")
    if failed:
        print(f"[ERROR] {failed} of {len(results)} checks failed")
        return 3
    print(f"[OK] All {len(results)} checks passed")
    return EXIT_OK


def cmd_sweep(args) -> int:
    doc = run_sweep(args.param, args.values, args.seeds, args.steps)
    save_json_file(args.out, doc.model_dump(mode="json"))
    for trial in doc.trials:
        print(f"[INFO] {args.param}={trial.value:g} seed={trial.seed}: "
              f"biased mR={trial.biased.mean_recall:.4f} "
              f"unbiased mR={trial.unbiased.mean_recall:.4f}")
    print(f"[OK] {len(doc.trials)} trials written to {args.out}")
    return EXIT_OK


# ---------- Parser ----------

def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(prog="dpl", description="Diversity-aware prototype classifier head")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--log-level", default="WARNING",
                        choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = parser.add_subparsers(dest="command", metavar="<command>", parser_class=_ArgumentParser)

    p = sub.add_parser("gen-data", help="Generate a synthetic dataset")
    source = p.add_mutually_exclusive_group(required=True)
    source.add_argument("--spec", help="Generator spec JSON")
    source.add_argument("--preset", choices=["desk"], help="Built-in generator spec")
    p.add_argument("--seed", type=int, default=0, help="Seed for --preset")
    p.add_argument("--d-in", type=int, default=DESK_D_IN, help="Feature dim for --preset")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("split", help="Seeded train/test split")
    p.add_argument("--data", required=True)
    p.add_argument("--train-frac", type=float, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--train-out", required=True)
    p.add_argument("--test-out", required=True)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train", help="Train a model")
    p.add_argument("--config", help="RunConfig JSON")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--preset", choices=sorted(PRESETS), default="full")
    p.add_argument("--steps", type=int)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="Evaluate a checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--mode", choices=MODES, required=True)
    p.add_argument("--topk", type=int, nargs="+")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("compare", help="Compare biased and unbiased inference")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--topk", type=int, nargs="+")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("export-embeddings", help="Export prototypes and features as CSV")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--samples", type=int, default=0, help="Samples per prototype")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_export_embeddings)

    p = sub.add_parser("grad-check", help="Finite-difference gradient check")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_grad_check)

    p = sub.add_parser("verify", help="Run the analytic-identity checks")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("sweep", help="Desk pipeline over one hyperparameter")
    p.add_argument("--param", choices=SWEEP_PARAMS, required=True)
    p.add_argument("--values", type=_csv_floats, required=True)
    p.add_argument("--seeds", type=_csv_ints, required=True)
    p.add_argument("--steps", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(f"[ERROR] {e}", file=sys.stderr)
        return EXIT_USAGE
    if not getattr(args, "func", None):
        parser.print_usage(sys.stderr)
        return EXIT_USAGE

    logging.basicConfig(level=getattr(logging, args.log_level),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except DplError as e:
        print(f"[ERROR] {e}", file=sys.stderr)
        return e.exit_code


__all__ = ["main", "build_parser"]
