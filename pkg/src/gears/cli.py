"""Command line entry point: ``gears synth|train|infer|eval|export``."""

from __future__ import annotations

import argparse
import json
import sys
import warnings
from pathlib import Path

from .config import PipelineConfig, desk_config
from .records import RecordError, read_record
from .synthesis import GraspNotFound

EXIT_OK = 0
EXIT_INVALID = 2


class UsageError(ValueError):
    pass


def _base_config(args) -> PipelineConfig:
    if args.config:
        config = PipelineConfig.load(args.config)
    elif args.preset == "desk":
        config = desk_config()
    else:
        config = PipelineConfig()
    if args.seed is not None:
        config.seed = int(args.seed)
    return config


def _apply_ablations(config: PipelineConfig, args) -> PipelineConfig:
    if getattr(args, "no_attention", False):
        config.disp_net.attention = False
    if getattr(args, "sensor_radius", None) is not None:
        config.sensor.radius = float(args.sensor_radius)
    return config.validate()


def _seed(args, config: PipelineConfig) -> int:
    return int(args.seed) if args.seed is not None else int(config.seed)


def _record_paths(path: str) -> list[Path]:
    """A record file, a directory of records, or a corpus directory with a manifest."""
    p = Path(path)
    if p.is_file():
        return [p]
    if (p / "manifest.json").exists():
        manifest = json.loads((p / "manifest.json").read_text())
        return [p / f for split in sorted(manifest["splits"]) for f in manifest["splits"][split]]
    if p.is_dir():
        return sorted(q for q in p.glob("*.json") if q.name != "manifest.json")
    raise UsageError(f"no record at {path}")


def cmd_synth(args) -> int:
    from .pipeline import synth_corpus

    config = _base_config(args).validate()
    seed = _seed(args, config)
    manifest = synth_corpus(config, args.n_train, args.n_test, args.out, seed)
    stats = manifest["stats"]
    made = sum(len(v) for v in manifest["splits"].values())
    print(f"generated {made} sequences; grasp failures {stats['grasp_failures']}, "
          f"intersection rejections {stats['iv_rejections']}")
    if made < args.n_train + args.n_test:
        print(f"warning: {args.n_train + args.n_test - made} sequences could not be generated", file=sys.stderr)
    if made == 0 and args.n_train + args.n_test > 0:
        raise GraspNotFound("no object produced a valid sequence")
    return EXIT_OK


def cmd_train(args) -> int:
    from .pipeline import Checkpoint, load_split, train_corpus

    resume = Checkpoint.load(args.resume) if args.resume else None
    if resume is not None and not args.config:
        config = resume.config
        if args.seed is not None:
            config.seed = int(args.seed)
    else:
        config = _base_config(args)
    config = _apply_ablations(config, args)
    seed = _seed(args, config) if resume is None or args.seed is not None else resume.seed
    records = load_split(args.corpus, args.split)
    ckpt, result = train_corpus(config, records, seed, resume=resume, displacement=not args.no_displacement,
                                stage1_epochs=args.stage1_epochs, stage2_epochs=args.stage2_epochs)
    out = ckpt.save(args.out)
    mode = "a" if resume is not None and Path(args.resume).resolve() == out.resolve() else "w"
    if resume is not None and mode == "w" and (Path(args.resume) / "train_log.jsonl").exists():
        (out / "train_log.jsonl").write_text((Path(args.resume) / "train_log.jsonl").read_text())
        mode = "a"
    with open(out / "train_log.jsonl", mode) as fh:
        fh.write(result.log_lines())
    last = {r["stage"]: r["loss"] for r in result.log}
    print(f"trained stage1 {ckpt.stage1_done} epochs, stage2 {ckpt.stage2_done} epochs; "
          + ", ".join(f"{k} loss {v:.6g}" for k, v in sorted(last.items())))
    return EXIT_OK


def cmd_infer(args) -> int:
    from .pipeline import Checkpoint, infer_record, write_prediction

    ckpt = Checkpoint.load(args.checkpoint)
    config = PipelineConfig.load(args.config) if args.config else None
    seed = int(args.seed) if args.seed is not None else ckpt.seed
    out = Path(args.out)
    for path in _record_paths(args.record):
        record = read_record(path)
        pred = infer_record(record, ckpt, seed, displacement=not args.no_displacement, fit=not args.no_fit,
                            config=config)
        pred.object_mesh_path = f"{path.stem}_object.obj"
        dest = write_prediction(out / path.name, pred, write_hands=not args.no_meshes)
        print(f"{path} -> {dest}")
    return EXIT_OK


def cmd_eval(args) -> int:
    from .pipeline import aggregate_reports, evaluate

    config = PipelineConfig.load(args.config) if args.config else PipelineConfig()
    preds = _record_paths(args.pred)
    gts = _record_paths(args.gt)
    if len(preds) == 1 and len(gts) == 1:
        pairs = [(preds[0], gts[0])]
    else:
        by_name = {p.name: p for p in gts}
        missing = [p.name for p in preds if p.name not in by_name]
        if missing:
            raise RecordError(f"no ground truth for {missing}")
        pairs = [(p, by_name[p.name]) for p in preds]
    reports = []
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        for p, g in pairs:
            reports.append(evaluate(read_record(p), read_record(g), config))
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    report = reports[0] if len(reports) == 1 else aggregate_reports(reports)
    text = json.dumps(report, indent=1, sort_keys=True)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text + "\n")
    print(text)
    return EXIT_OK


def cmd_export(args) -> int:
    from .pipeline import export_meshes

    out = Path(args.out)
    for path in _record_paths(args.record):
        written = export_meshes(read_record(path), out / path.stem, source=args.source)
        print(f"{path}: {len(written)} meshes -> {out / path.stem}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gears", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_required=True):
        p.add_argument("--config", help="PipelineConfig JSON")
        p.add_argument("--preset", choices=("full", "desk"), default="full", help="defaults when --config is absent")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", required=out_required)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    common(p)
    p.add_argument("--n-train", type=int, default=200)
    p.add_argument("--n-test", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train both networks on a corpus")
    common(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--split", default="train")
    p.add_argument("--resume", help="checkpoint directory to continue from")
    p.add_argument("--stage1-epochs", type=int)
    p.add_argument("--stage2-epochs", type=int)
    p.add_argument("--no-displacement", action="store_true")
    p.add_argument("--no-attention", action="store_true")
    p.add_argument("--sensor-radius", type=float)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="predict joints and fit hands for records")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--record", required=True, help="record file, directory, or corpus")
    p.add_argument("--no-displacement", action="store_true")
    p.add_argument("--no-fit", action="store_true")
    p.add_argument("--no-meshes", action="store_true", help="skip per-frame hand OBJs")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("eval", help="metrics report for predictions against ground truth")
    common(p, out_required=False)
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("export", help="per-frame hand and object OBJs")
    common(p)
    p.add_argument("--record", required=True)
    p.add_argument("--source", choices=("auto", "fit", "gt"), default="auto")
    p.set_defaults(func=cmd_export)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, KeyError, FileNotFoundError, GraspNotFound) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
