"""Command-line entry point.

Subcommands wire the pipeline end to end: generate (synthetic dataset),
extract (trial averaging), train, eval, compare (raw vs. ERP frameworks at
both label granularities) and report (render saved results as tables and
figures). Logs go to stderr; machine-readable output goes to files or
stdout. Every run that writes outputs drops a reproducibility manifest
(full config, seeds, versions) beside them.

Exit codes: 0 success, 1 usage error, 2 data/format error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .container import load_dataset, load_erp_space, save_dataset, save_erp_space
from .checkpoint import load_model, save_model
from .data import SynthConfig, generate_synthetic_dataset
from .erp import build_erp_space, split_erp_space
from .errors import ErpvisError
from .lstm import init_lstm_model
from .protocols import PipelineConfig, compare_frameworks, train_count_for_group
from .report import render_table, save_figures
from .training import TrainConfig, evaluate, n_classes_for, train

log = logging.getLogger("erpvis")


class UsageError(ErpvisError):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems instead of exiting."""

    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _setup_logging():
    level = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}.get(
        os.environ.get("ERPVIS_LOG", "info").lower(), logging.INFO
    )
    logging.basicConfig(stream=sys.stderr, level=level, format="%(levelname)s %(message)s")


def build_parser() -> _Parser:
    parser = _Parser(prog="erpvis", description=__doc__)
    parser.add_argument("--version", action="version", version=f"erpvis {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    def add(name, help_text):
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(command=name)
        return p

    p = add("generate", "create a seeded synthetic dataset")
    p.add_argument("--out", required=True, metavar="PATH")
    p.add_argument("--seed", type=int, default=0, metavar="UINT")
    p.add_argument("--snr", type=float, default=-10.0, help="single-trial SNR in dB (inf disables noise)")
    p.add_argument("--subjects", type=int, default=10, metavar="UINT")
    p.add_argument("--trials-per-image", type=int, default=72, metavar="UINT")
    p.add_argument("--channels", type=int, default=124, metavar="UINT")
    p.add_argument("--samples", type=int, default=31, metavar="UINT")
    p.add_argument("--jitter", type=int, default=1, metavar="UINT")

    p = add("extract", "average trial subsets into an ERP space")
    p.add_argument("--in", dest="in_path", required=True, metavar="PATH")
    p.add_argument("--out", required=True, metavar="PATH")
    p.add_argument("--n", type=int, default=12, metavar="UINT", help="trials averaged per ERP")
    p.add_argument("--seed", type=int, default=0, metavar="UINT")

    p = add("train", "train a model on the train side of the seeded split")
    p.add_argument("--in", dest="in_path", required=True, metavar="PATH")
    p.add_argument("--out", required=True, metavar="PATH", help="checkpoint file to write")
    p.add_argument("--labels", choices=("category", "exemplar"), default="category")
    p.add_argument("--seed", type=int, default=0, metavar="UINT")
    p.add_argument("--epochs", type=int, default=50, metavar="UINT")
    p.add_argument("--batch", type=int, default=32, metavar="UINT")
    p.add_argument("--lr", type=float, default=1e-3, metavar="FLOAT")
    p.add_argument("--hidden", type=int, default=128, metavar="UINT")
    p.add_argument("--layers", type=int, default=1, metavar="UINT")
    p.add_argument("--loss", choices=("categorical", "eq2"), default="categorical")
    p.add_argument("--threads", type=int, default=0, metavar="UINT")

    p = add("eval", "evaluate a checkpoint against the seeded split")
    p.add_argument("--model", required=True, metavar="PATH")
    p.add_argument("--in", dest="in_path", required=True, metavar="PATH")
    p.add_argument("--split", choices=("train", "test", "all"), default="test")
    p.add_argument("--labels", choices=("category", "exemplar"), default="category")
    p.add_argument("--seed", type=int, default=0, metavar="UINT",
                   help="must match the seed used by train for a meaningful split")
    p.add_argument("--out", metavar="PATH", help="report JSON path (default: stdout)")
    p.add_argument("--format", dest="fmt", choices=("json", "csv", "text"), default="json")

    p = add("compare", "run raw-trial and ERP frameworks side by side")
    p.add_argument("--in", dest="in_path", required=True, metavar="PATH")
    p.add_argument("--out", required=True, metavar="PATH", help="output directory")
    p.add_argument("--seed", type=int, default=0, metavar="UINT")
    p.add_argument("--n", type=int, default=12, metavar="UINT")
    p.add_argument("--protocol", choices=("cross", "within"), default="cross")
    p.add_argument("--labels", choices=("category", "exemplar", "both"), default="both")
    p.add_argument("--epochs", type=int, default=50, metavar="UINT")
    p.add_argument("--batch", type=int, default=32, metavar="UINT")
    p.add_argument("--lr", type=float, default=1e-3, metavar="FLOAT")
    p.add_argument("--hidden", type=int, default=128, metavar="UINT")
    p.add_argument("--layers", type=int, default=1, metavar="UINT")
    p.add_argument("--loss", choices=("categorical", "eq2"), default="categorical")
    p.add_argument("--threads", type=int, default=0, metavar="UINT")

    p = add("report", "render a saved JSON result as a table plus figures")
    p.add_argument("--in", dest="in_path", required=True, metavar="PATH")
    p.add_argument("--out", required=True, metavar="PATH", help="output directory")
    p.add_argument("--format", dest="fmt", choices=("json", "csv", "text"), default="text")

    return parser


def _require_dir(path_str: str) -> Path:
    path = Path(path_str)
    if not path.is_dir():
        raise UsageError(f"path does not exist or is not a directory: {path}")
    return path


def _require_file(path_str: str) -> Path:
    path = Path(path_str)
    if not path.is_file():
        raise UsageError(f"path does not exist: {path}")
    return path


def _write_run_manifest(beside, command: str, config: dict):
    """Reproducibility record: full config, seeds and versions, no clocks."""
    beside = Path(beside)
    target = beside / "run_manifest.json" if beside.is_dir() else beside.with_name(beside.name + ".run.json")
    payload = {
        "command": command,
        "config": config,
        "versions": {
            "erpvis": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": ".".join(str(v) for v in sys.version_info[:3]),
        },
    }
    target.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _load_space_any(path: Path, seed: int):
    """Load an ERP container, or a raw container as an n=1 space."""
    from .container import _read_manifest

    manifest = _read_manifest(path)
    if manifest.get("kind") == "erp":
        return load_erp_space(path), "erp"
    ds = load_dataset(path)
    return build_erp_space(ds, 1, seed), "raw_trial"


def _seeded_split(space, seed: int):
    sizes = {len(v) for v in space.groups().values()}
    per_image = train_count_for_group(min(sizes))
    return split_erp_space(space, per_image, seed)


def cmd_generate(args) -> int:
    cfg = SynthConfig(
        n_subjects=args.subjects,
        trials_per_image=args.trials_per_image,
        channels=args.channels,
        samples_per_trial=args.samples,
        single_trial_snr_db=args.snr,
        seed=args.seed,
        latency_jitter_samples=args.jitter,
    )
    log.info("generating %d trials (%d subjects x %d exemplars x %d)",
             cfg.n_trials, cfg.n_subjects, cfg.n_exemplars, cfg.trials_per_image)
    ds = generate_synthetic_dataset(cfg)
    out = Path(args.out)
    save_dataset(ds, out)
    _write_run_manifest(out, "generate", {
        "out": str(out), "seed": args.seed, "snr": args.snr, "subjects": args.subjects,
        "trials_per_image": args.trials_per_image, "channels": args.channels,
        "samples": args.samples, "jitter": args.jitter,
    })
    log.info("wrote %s", out)
    return 0


def cmd_extract(args) -> int:
    ds = load_dataset(_require_dir(args.in_path))
    space = build_erp_space(ds, args.n, args.seed)
    log.info("extracted %d ERP sequences (n=%d)", len(space), args.n)
    out = Path(args.out)
    save_erp_space(space, out)
    _write_run_manifest(out, "extract", {
        "in": str(args.in_path), "out": str(out), "n": args.n, "seed": args.seed,
    })
    log.info("wrote %s", out)
    return 0


def _train_config(args) -> TrainConfig:
    return TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch,
        learning_rate=args.lr,
        loss_variant=args.loss,
        seed=args.seed,
    )


def cmd_train(args) -> int:
    space, input_kind = _load_space_any(_require_dir(args.in_path), args.seed)
    train_space, _ = _seeded_split(space, args.seed)
    k = n_classes_for(space, args.labels)
    model = init_lstm_model(
        input_size=space.channels, hidden_size=args.hidden, num_layers=args.layers,
        repr_dim=args.hidden, n_classes=k, seed=args.seed,
    )
    cfg = replace(_train_config(args), label_kind=args.labels, input_kind=input_kind)
    log.info("training on %d sequences (%s labels, %d classes, %d epochs)",
             len(train_space), args.labels, k, args.epochs)
    model, curve = train(model, train_space, cfg)
    out = Path(args.out)
    save_model(model, out)
    metrics = {"loss_curve": curve, "final_loss": curve[-1], "n_train": len(train_space)}
    out.with_name(out.name + ".metrics.json").write_text(
        json.dumps(metrics, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    _write_run_manifest(out, "train", {
        "in": str(args.in_path), "out": str(out), "labels": args.labels,
        "seed": args.seed, "epochs": args.epochs, "batch": args.batch, "lr": args.lr,
        "hidden": args.hidden, "layers": args.layers, "loss": args.loss,
        "input_kind": input_kind,
    })
    log.info("wrote %s (final loss %.4f)", out, curve[-1])
    return 0


def cmd_eval(args) -> int:
    model = load_model(_require_file(args.model))
    space, _ = _load_space_any(_require_dir(args.in_path), args.seed)
    if args.split == "all":
        chosen = space
    else:
        train_space, test_space = _seeded_split(space, args.seed)
        chosen = train_space if args.split == "train" else test_space
    report = evaluate(model, chosen, label_kind=args.labels,
                      config={"split": args.split, "seed": args.seed})
    rendered = render_table(report.to_dict(), args.fmt)
    if args.out:
        out = Path(args.out)
        out.write_text(rendered, encoding="utf-8")
        _write_run_manifest(out, "eval", {
            "model": str(args.model), "in": str(args.in_path), "split": args.split,
            "labels": args.labels, "seed": args.seed, "format": args.fmt,
        })
        log.info("wrote %s (accuracy %.4f)", out, report.accuracy)
    else:
        sys.stdout.write(rendered)
    return 0


def cmd_compare(args) -> int:
    ds = load_dataset(_require_dir(args.in_path))
    cfg = PipelineConfig(
        averaging_n=args.n,
        hidden_size=args.hidden,
        num_layers=args.layers,
        repr_dim=args.hidden,
        train=_train_config(args),
        seed=args.seed,
        threads=args.threads or None,
    )
    protocols = ("cross_subject",) if args.protocol == "cross" else ("within_subject",)
    label_kinds = ("category", "exemplar") if args.labels == "both" else (args.labels,)
    log.info("comparing frameworks: %s, labels=%s", protocols[0], ",".join(label_kinds))
    result = compare_frameworks(ds, cfg, label_kinds=label_kinds, protocols=protocols)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    payload = result.to_dict()
    (out / "comparison.json").write_text(result.to_json(), encoding="utf-8")
    (out / "comparison.csv").write_text(render_table(payload, "csv"), encoding="utf-8")
    (out / "comparison.txt").write_text(render_table(payload, "text"), encoding="utf-8")
    figures = save_figures(payload, out)
    _write_run_manifest(out, "compare", {
        "in": str(args.in_path), "out": str(out), "seed": args.seed, "n": args.n,
        "protocol": args.protocol, "labels": args.labels, "epochs": args.epochs,
        "batch": args.batch, "lr": args.lr, "hidden": args.hidden,
        "layers": args.layers, "loss": args.loss, "threads": args.threads,
    })
    log.info("wrote comparison tables and %d figures to %s", len(figures), out)
    sys.stdout.write(render_table(payload, "text"))
    return 0


def cmd_report(args) -> int:
    src = _require_file(args.in_path)
    try:
        payload = json.loads(src.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise UsageError(f"{src}: not a JSON document ({exc})") from exc
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ext = {"json": "json", "csv": "csv", "text": "txt"}[args.fmt]
    table_path = out / f"report.{ext}"
    table_path.write_text(render_table(payload, args.fmt), encoding="utf-8")
    figures = save_figures(payload, out)
    _write_run_manifest(out, "report", {
        "in": str(args.in_path), "out": str(out), "format": args.fmt,
    })
    log.info("wrote %s and %d figures", table_path, len(figures))
    return 0


_COMMANDS = {
    "generate": cmd_generate,
    "extract": cmd_extract,
    "train": cmd_train,
    "eval": cmd_eval,
    "compare": cmd_compare,
    "report": cmd_report,
}


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_usage(sys.stderr)
            print("erpvis: a subcommand is required", file=sys.stderr)
            return 1
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ErpvisError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:  # argparse --help / --version
        return int(exc.code or 0)


if __name__ == "__main__":
    sys.exit(main())
