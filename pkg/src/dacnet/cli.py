"""Command-line entry point: prepare-splits, train, tune-thresholds, evaluate,
explain, serve, stats.

Every artifact-writing command drops a reproducibility stamp (seed, config
hash, toolkit version, argv) next to its outputs. Module errors exit 1 with
a message; usage errors exit 2 (argparse default).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

from dacnet import __version__
from dacnet.errors import DacnetError


@dataclass
class CommandResult:
    exit_code: int = 0
    artifacts: list[str] = field(default_factory=list)
    summary: list[str] = field(default_factory=list)


def _write_stamp(directory: Path, seed, config_payload, argv) -> None:
    config_hash = hashlib.sha256(
        json.dumps(config_payload, sort_keys=True, default=str).encode()
    ).hexdigest()[:16]
    stamp = {
        "seed": seed,
        "config_hash": config_hash,
        "version": __version__,
        "argv": list(argv),
        "written_at": time.strftime("%Y-%m-%dT%H:%M:%S"),
    }
    directory.mkdir(parents=True, exist_ok=True)
    with open(directory / "reproducibility.json", "w") as fh:
        json.dump(stamp, fh, indent=2)
        fh.write("\n")


def _parse_ratios(text: str):
    parts = [float(x) for x in text.split(",")]
    return tuple(parts)


def cmd_stats(args, argv) -> CommandResult:
    from dacnet.dataset import label_combination_stats, parse_catalog

    records = parse_catalog(args.metadata)
    stats = label_combination_stats(records)
    lines = []
    for i, (combo, (count, fraction)) in enumerate(stats.items()):
        if args.top and i >= args.top:
            break
        lines.append(f"{combo} {count} {fraction * 100:.2f}%")
    for line in lines:
        print(line)
    print(f"({len(records)} records, {len(stats)} distinct label combinations)")
    return CommandResult(summary=lines)


def cmd_prepare_splits(args, argv) -> CommandResult:
    from dacnet.dataset import make_patient_split, parse_catalog, write_manifest

    records = parse_catalog(args.metadata)
    ratios = _parse_ratios(args.ratios)
    manifest = make_patient_split(records, ratios=ratios, seed=args.seed)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_manifest(manifest, out)
    _write_stamp(out.parent, args.seed, {"ratios": ratios, "metadata": str(args.metadata)}, argv)
    counts = {s: 0 for s in ("train", "val", "test")}
    for split in manifest.split_of.values():
        counts[split] += 1
    summary = [f"wrote {out} ({counts['train']}/{counts['val']}/{counts['test']} train/val/test images)"]
    print(summary[0])
    return CommandResult(artifacts=[str(out)], summary=summary)


def cmd_train(args, argv) -> CommandResult:
    from dacnet.dataset import parse_catalog, read_manifest
    from dacnet.recipes import load_recipe, recipe_to_dict, with_overrides
    from dacnet.training import ConsoleSink, CsvSink, HISTORY_CSV, train

    recipe = load_recipe(args.recipe)
    if args.seed is not None:
        recipe = with_overrides(recipe, seed=args.seed)
    if args.epochs is not None:
        recipe = with_overrides(recipe, max_epochs=args.epochs)
    records = parse_catalog(args.metadata)
    manifest = read_manifest(args.manifest)
    run_dir = Path(args.run_dir) if args.run_dir else (
        Path("runs") / recipe.name / time.strftime("%Y%m%d-%H%M%S")
    )
    run_dir.mkdir(parents=True, exist_ok=True)
    _write_stamp(run_dir, recipe.seed, recipe_to_dict(recipe), argv)
    sinks = (ConsoleSink(), CsvSink(run_dir / HISTORY_CSV))
    state = train(
        recipe, records, manifest, args.data_dir, run_dir,
        sinks=sinks, num_workers=args.num_workers,
    )
    summary = [
        f"trained {recipe.name} for {state.epochs_completed} epochs"
        + (" (early stop)" if state.stopped_early else ""),
    ]
    if state.best_checkpoint:
        summary.append(
            f"best val macro-AUC {state.best_val_auc:.4f} at epoch {state.best_epoch}; "
            f"checkpoint {state.best_checkpoint}"
        )
    for line in summary:
        print(line)
    return CommandResult(artifacts=[str(run_dir)], summary=summary)


def cmd_tune_thresholds(args, argv) -> CommandResult:
    from dacnet.dataset import parse_catalog, read_manifest
    from dacnet.evaluation import write_thresholds
    from dacnet.training import tuned_thresholds_for_checkpoint

    records = parse_catalog(args.metadata)
    manifest = read_manifest(args.manifest)
    thresholds = tuned_thresholds_for_checkpoint(
        args.checkpoint, records, manifest, args.data_dir, split=args.split
    )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_thresholds(thresholds, out)
    _write_stamp(out.parent, None, {"checkpoint": str(args.checkpoint), "split": args.split}, argv)
    summary = [f"wrote per-disease thresholds fitted on {thresholds.fitted_on!r} to {out}"]
    print(summary[0])
    return CommandResult(artifacts=[str(out)], summary=summary)


def cmd_evaluate(args, argv) -> CommandResult:
    from dacnet.baselines import CHEXNET_2017_AUC
    from dacnet.dataset import parse_catalog, read_manifest
    from dacnet.evaluation import (
        ThresholdSet,
        comparison_to_dict,
        evaluate_predictions,
        read_predictions_csv,
        read_thresholds,
        render_comparison,
        render_report,
        write_report,
    )

    if args.thresholds == "0.5":
        thresholds = ThresholdSet.global_threshold(0.5)
    else:
        thresholds = read_thresholds(args.thresholds)

    fingerprint = None
    if args.predictions:
        predictions = read_predictions_csv(args.predictions, split=args.split)
        mean_loss = None
    else:
        from dacnet.inference import mean_loss_from_logits, predict_split
        from dacnet.models import load_checkpoint, model_from_checkpoint
        from dacnet.recipes import recipe_from_dict

        payload = load_checkpoint(args.checkpoint)
        model = model_from_checkpoint(payload)
        recipe = recipe_from_dict(payload["recipe"])
        fingerprint = payload["fingerprint"]
        records = parse_catalog(args.metadata)
        manifest = read_manifest(args.manifest)
        predictions, logits = predict_split(
            model, recipe, records, manifest, args.split, args.data_dir
        )
        mean_loss = mean_loss_from_logits(recipe, logits, predictions.targets)

    report = evaluate_predictions(
        predictions, thresholds, mean_loss=mean_loss, model_fingerprint=fingerprint
    )
    print(render_report(report))
    artifacts = []
    if args.report:
        out = Path(args.report)
        out.parent.mkdir(parents=True, exist_ok=True)
        write_report(report, out)
        _write_stamp(out.parent, None, {"thresholds": args.thresholds, "split": args.split}, argv)
        artifacts.append(str(out))
    if args.compare_baseline:
        print()
        print(render_comparison([report], ["this run"], baseline=CHEXNET_2017_AUC,
                                baseline_label="chexnet-2017"))
        if args.report:
            comparison_path = Path(args.report).with_suffix(".comparison.json")
            with open(comparison_path, "w") as fh:
                json.dump(
                    comparison_to_dict([report], ["this run"], baseline=CHEXNET_2017_AUC,
                                       baseline_label="chexnet-2017"),
                    fh, indent=2,
                )
                fh.write("\n")
            artifacts.append(str(comparison_path))
    summary = [f"macro-AUC {report.macro_auc:.4f}  macro-F1 {report.macro_f1:.4f}  "
               f"loss {report.mean_loss:.4f}"]
    print(summary[0])
    return CommandResult(artifacts=artifacts, summary=summary)


def cmd_explain(args, argv) -> CommandResult:
    from dacnet.explain import grad_cam, render_overlay_png
    from dacnet.models import load_checkpoint, model_from_checkpoint
    from dacnet.recipes import recipe_from_dict
    from dacnet.transforms import build_eval_transform, load_image

    payload = load_checkpoint(args.checkpoint)
    model = model_from_checkpoint(payload)
    recipe = recipe_from_dict(payload["recipe"])
    image = load_image(args.image)
    tensor = build_eval_transform(recipe.transform)(image)
    heatmap = grad_cam(model, tensor, args.disease)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    render_overlay_png(heatmap, image.convert("RGB").resize((224, 224)), out)
    _write_stamp(out.parent, None, {"checkpoint": str(args.checkpoint), "disease": args.disease}, argv)
    summary = [f"wrote {args.disease} overlay to {out}"]
    print(summary[0])
    return CommandResult(artifacts=[str(out)], summary=summary)


def cmd_serve(args, argv) -> CommandResult:
    from dacnet.service import create_app, serve

    checkpoint = args.checkpoint or os.environ.get("DACNET_CHECKPOINT")
    if not checkpoint:
        raise DacnetError("no checkpoint: pass --checkpoint or set DACNET_CHECKPOINT")
    port = args.port if args.port is not None else int(os.environ.get("DACNET_PORT", "8000"))
    app = create_app(checkpoint_path=checkpoint, thresholds_path=args.thresholds)
    print(f"serving {checkpoint} on {args.host}:{port}")
    serve(app, host=args.host, port=port)
    return CommandResult()


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dacnet",
        description="Multi-label chest X-ray classification toolkit",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("stats", help="print the label-combination frequency table")
    p.add_argument("--metadata", required=True, help="metadata CSV file")
    p.add_argument("--top", type=int, default=None, help="show only the top N combinations")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("prepare-splits", help="write a patient-wise split manifest")
    p.add_argument("--metadata", required=True)
    p.add_argument("--out", required=True, help="manifest output path")
    p.add_argument("--ratios", default="0.7,0.1,0.2", help="train,val,test fractions")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_prepare_splits)

    p = sub.add_parser("train", help="train a recipe")
    p.add_argument("--recipe", required=True, help="preset name or recipe YAML path")
    p.add_argument("--metadata", required=True)
    p.add_argument("--data-dir", required=True, help="directory containing the images")
    p.add_argument("--manifest", required=True)
    p.add_argument("--run-dir", default=None)
    p.add_argument("--seed", type=int, default=None, help="override the recipe seed")
    p.add_argument("--epochs", type=int, default=None, help="override max_epochs")
    p.add_argument("--num-workers", type=int, default=0)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("tune-thresholds", help="fit per-disease F1 thresholds on validation")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--metadata", required=True)
    p.add_argument("--data-dir", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--split", default="val", choices=["train", "val", "test"])
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_tune_thresholds)

    p = sub.add_parser("evaluate", help="evaluate a checkpoint or saved predictions")
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--predictions", default=None, help="predictions CSV instead of a checkpoint")
    p.add_argument("--metadata", default=None)
    p.add_argument("--data-dir", default=None)
    p.add_argument("--manifest", default=None)
    p.add_argument("--split", default="test", choices=["train", "val", "test"])
    p.add_argument("--thresholds", default="0.5", help="thresholds JSON path, or '0.5' for global")
    p.add_argument("--report", default=None, help="write the machine-readable report here")
    p.add_argument("--compare-baseline", action="store_true",
                   help="print the comparison table against published reference AUCs")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("explain", help="write a Grad-CAM overlay PNG")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--disease", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("serve", help="run the HTTP inference service")
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--thresholds", default=None)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=None)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "evaluate" and not args.predictions:
        missing = [f for f in ("checkpoint", "metadata", "data_dir", "manifest")
                   if getattr(args, f) is None]
        if missing:
            parser.error(f"evaluate needs --predictions or all of: {', '.join(missing)}")
    try:
        result = args.func(args, argv)
    except DacnetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return result.exit_code


if __name__ == "__main__":
    sys.exit(main())
