"""Command-line surface: phantom generation, segmentation, evaluation,
grid search, the two experiments, and the HTTP service.

Exit codes: 0 success, 2 validation error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from .errors import IoFailure, StrokesegError
from .features import load_strokes, save_strokes
from .metrics import evaluate_regions
from .phantom import (
    Distractor,
    PhantomSpec,
    StrokeBudget,
    generate_phantom,
    generate_strokes,
)
from .pipeline import (
    PhantomCase,
    PipelineConfig,
    experiment_hyper_noise,
    experiment_subsample_curve,
    segment_volume,
)
from .selection import grid_search
from .volume import (
    compute_brain_mask,
    load_labels,
    load_volume,
    save_labels,
    save_volume,
)


def load_phantom_spec(path) -> tuple[PhantomSpec, StrokeBudget]:
    if path is None:
        return PhantomSpec(), StrokeBudget()
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    budget = StrokeBudget(**payload.pop("budget", {}))
    if "distractors" in payload:
        payload["distractors"] = tuple(
            Distractor(
                center_frac=tuple(d["center_frac"]),
                radii=tuple(d["radii"]),
                intensity=tuple(d["intensity"]),
            )
            for d in payload["distractors"]
        )
    for key in ("dims", "modalities", "brain_axes_frac", "tumor_center_frac",
                "edema_radii", "rim_radii", "core_radii"):
        if key in payload:
            payload[key] = tuple(payload[key])
    return PhantomSpec(**payload), budget


def load_config(path) -> PipelineConfig:
    if path is None:
        return PipelineConfig()
    with open(path, "r", encoding="utf-8") as fh:
        return PipelineConfig.from_dict(json.load(fh))


def write_json(payload, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def cmd_phantom_gen(args) -> int:
    spec, budget = load_phantom_spec(args.spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for seed in range(args.seed, args.seed + args.count):
        vol, gt = generate_phantom(spec, seed=seed)
        mask = compute_brain_mask(vol, 0.0)
        strokes = generate_strokes(gt, budget, seed=seed, mask=mask, volume=vol)
        stem = f"phantom_{seed:04d}"
        save_volume(vol, out / f"{stem}_vol.mvol")
        save_labels(gt, out / f"{stem}_truth.mvol")
        save_strokes(strokes, out / f"{stem}_strokes.json")
        print(f"wrote {out / stem}_{{vol.mvol,truth.mvol,strokes.json}}")
    return 0


def cmd_segment(args) -> int:
    vol = load_volume(args.volume)
    strokes = load_strokes(args.strokes)
    config = load_config(args.config)
    report = segment_volume(vol, strokes, config)
    save_labels(report.labels, args.out)
    if args.report:
        write_json(report.to_dict(), args.report)
    print(
        f"segmented {args.volume} in {report.total_seconds:.2f}s "
        f"(hyperparams {report.hyperparams})"
    )
    return 0


def cmd_evaluate(args) -> int:
    pred = load_labels(args.pred)
    truth = load_labels(args.truth)
    mask = None
    if args.volume:
        mask = compute_brain_mask(load_volume(args.volume), args.mask_threshold)
    metrics = evaluate_regions(pred, truth, mask)
    write_json(metrics, args.out)
    for region, vals in metrics.items():
        print(f"{region}: dice={vals['dice']:.4f} "
              f"sensitivity={vals['sensitivity']:.4f} "
              f"specificity={vals['specificity']:.4f}")
    return 0


def cmd_grid_search(args) -> int:
    from .pipeline import prepare_features
    from .features import build_training_set, subsample_balanced

    vol = load_volume(args.volume)
    strokes = load_strokes(args.strokes)
    config = load_config(args.config)
    if args.classifier:
        from dataclasses import replace

        config = replace(config, classifier=args.classifier)
    _, fm = prepare_features(vol, config)
    ts = build_training_set(fm, strokes)
    ts = subsample_balanced(ts, config.subsample_n, seed=config.subsample_seed)
    result = grid_search(
        ts, config.classifier, grid=config.grid,
        folds=config.folds, seed=config.seed,
    )
    write_json(result.to_dict(), args.out)
    print(f"chose {result.chosen} for {config.classifier}")
    return 0


def load_batch(batch_dir) -> list[PhantomCase]:
    batch = Path(batch_dir)
    cases = []
    for vol_path in sorted(batch.glob("*_vol.mvol")):
        stem = vol_path.name[: -len("_vol.mvol")]
        truth = batch / f"{stem}_truth.mvol"
        strokes = batch / f"{stem}_strokes.json"
        if not truth.exists() or not strokes.exists():
            raise IoFailure(f"incomplete phantom triplet for {stem}")
        cases.append(
            PhantomCase(
                volume=load_volume(vol_path),
                strokes=load_strokes(strokes),
                truth=load_labels(truth),
            )
        )
    if not cases:
        raise IoFailure(f"no phantom triplets in {batch_dir}")
    return cases


def write_table(rows, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)


def cmd_experiment(args) -> int:
    cases = load_batch(args.batch)
    config = load_config(args.config)
    if args.kind == "subsample":
        sizes = [int(s) for s in args.sizes.split(",")]
        rows = experiment_subsample_curve(cases, sizes, config, seed=args.seed)
    else:
        pcts = [float(p) for p in args.pcts.split(",")]
        rows = experiment_hyper_noise(cases, pcts, config, seed=args.seed)
    write_table(rows, args.out)
    for row in rows:
        print(row)
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(session_ttl=args.session_ttl)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="strokeseg",
        description="Interactive within-brain tumor segmentation toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    phantom = sub.add_parser("phantom", help="synthetic data")
    phantom_sub = phantom.add_subparsers(dest="phantom_command", required=True)
    gen = phantom_sub.add_parser("gen", help="generate phantom volumes")
    gen.add_argument("--spec", default=None, help="phantom spec JSON")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--count", type=int, default=1)
    gen.add_argument("--out", required=True)
    gen.set_defaults(func=cmd_phantom_gen)

    seg = sub.add_parser("segment", help="segment a volume from strokes")
    seg.add_argument("--volume", required=True)
    seg.add_argument("--strokes", required=True)
    seg.add_argument("--config", default=None)
    seg.add_argument("--out", required=True)
    seg.add_argument("--report", default=None)
    seg.set_defaults(func=cmd_segment)

    ev = sub.add_parser("evaluate", help="compare two label volumes")
    ev.add_argument("--pred", required=True)
    ev.add_argument("--truth", required=True)
    ev.add_argument("--volume", default=None,
                    help="intensity volume for the brain-mask scope")
    ev.add_argument("--mask-threshold", type=float, default=0.0)
    ev.add_argument("--out", required=True)
    ev.set_defaults(func=cmd_evaluate)

    gs = sub.add_parser("grid-search", help="per-volume hyper-parameter search")
    gs.add_argument("--volume", required=True)
    gs.add_argument("--strokes", required=True)
    gs.add_argument("--classifier", default=None)
    gs.add_argument("--config", default=None)
    gs.add_argument("--out", required=True)
    gs.set_defaults(func=cmd_grid_search)

    exp = sub.add_parser("experiment", help="batch experiments")
    exp_sub = exp.add_subparsers(dest="kind", required=True)
    sub_exp = exp_sub.add_parser("subsample", help="training-size curve")
    sub_exp.add_argument("--batch", required=True)
    sub_exp.add_argument("--config", default=None)
    sub_exp.add_argument("--sizes", default="1000,3000")
    sub_exp.add_argument("--seed", type=int, default=0)
    sub_exp.add_argument("--out", required=True)
    sub_exp.set_defaults(func=cmd_experiment, kind="subsample")
    noise = exp_sub.add_parser("hypernoise", help="hyper-parameter noise")
    noise.add_argument("--batch", required=True)
    noise.add_argument("--config", default=None)
    noise.add_argument("--pcts", default="0,5,10,25")
    noise.add_argument("--seed", type=int, default=0)
    noise.add_argument("--out", required=True)
    noise.set_defaults(func=cmd_experiment, kind="hypernoise")

    srv = sub.add_parser("serve", help="run the annotation HTTP service")
    srv.add_argument("--host", default="127.0.0.1")
    srv.add_argument("--port", type=int, default=8008)
    srv.add_argument("--session-ttl", type=float, default=3600.0)
    srv.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except IoFailure as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 3
    except (StrokesegError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
