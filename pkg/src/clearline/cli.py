"""Single entry point exposing every pipeline stage for scripting.

Machine outputs are JSON files; short human summaries go to stdout.
Usage errors exit 2 (argparse); runtime failures exit 1 with a
machine-readable error object on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from . import __version__
from . import control, datastore, evaluation, masks, simulate, spectral, stabilize


def _parse_margin(text: str):
    parts = [float(p) for p in text.split(",")]
    if len(parts) == 1:
        return parts[0], 0.0
    if len(parts) == 2:
        return parts[0], parts[1]
    raise argparse.ArgumentTypeError("margin must be 'a' or 'a,b' for margin(v) = a + b*v")


def _parse_tiles(text: str):
    try:
        tx, ty = text.lower().split("x")
        return int(tx), int(ty)
    except ValueError as e:
        raise argparse.ArgumentTypeError("tiles must look like '8x8'") from e


def _dump_json(path, obj) -> None:
    with open(path, "w") as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write("\n")


def _load_image_grid(path):
    from PIL import Image

    with Image.open(path) as im:
        if im.mode in ("L", "I;16", "I", "1"):
            return np.asarray(im.convert("L"), dtype=np.float64), None
        return None, np.asarray(im.convert("RGB"))


def cmd_sam(args) -> int:
    with open(args.library) as f:
        lib = spectral.ReferenceLibrary.from_json(f.read())
    cube = spectral.load_cube(args.cube)
    label_map = spectral.classify_cube(cube, lib, args.reject_angle, args.scoring)
    rejects = int((label_map.indices < 0).sum())
    _dump_json(
        args.out,
        {
            "width": cube.width,
            "height": cube.height,
            "class_names": label_map.class_names,
            "indices": label_map.indices.ravel().tolist(),
            "scores": label_map.scores.ravel().tolist(),
            "reject_count": rejects,
            "scoring": args.scoring,
            "reject_angle": args.reject_angle,
        },
    )
    print(f"classified {cube.width}x{cube.height} cube: {rejects} rejects -> {args.out}")
    return 0


def cmd_clahe(args) -> int:
    from PIL import Image

    from .enhance import ClaheParams, clahe, clahe_rgb
    from .masks import ImageGrid

    tiles_x, tiles_y = args.tiles
    params = ClaheParams(tiles_x=tiles_x, tiles_y=tiles_y, clip_limit=args.clip, bins=args.bins)
    gray, rgb = _load_image_grid(args.input)
    if gray is not None:
        out = clahe(ImageGrid.from_array(gray), params).pixels
        Image.fromarray(out, mode="L").save(args.out)
    else:
        Image.fromarray(clahe_rgb(rgb, params), mode="RGB").save(args.out)
    print(f"equalized {args.input} -> {args.out}")
    return 0


def cmd_mask2det(args) -> int:
    mask = masks.read_mask(args.mask)
    dets = masks.mask_to_detections(
        mask, frame_id=args.frame_id, t=args.threshold, min_area=args.min_area,
        connectivity=args.connectivity,
    )
    evaluation.write_detection_log(args.out, dets)
    print(f"{len(dets)} detections -> {args.out}")
    return 0


def cmd_bboxexport(args) -> int:
    mask = masks.read_mask(args.mask)
    dets = masks.mask_to_detections(
        mask, t=args.threshold, min_area=args.min_area, connectivity=args.connectivity
    )
    record = masks.annotation_record(
        args.image_id,
        [
            masks.Detection(
                frame_id=0, bbox=d.bbox, score=d.score, instance_confidence=d.score
            )
            for d in dets
        ],
        annotator=args.annotator,
    )
    masks.write_annotation_record(args.out, record)
    print(f"{len(dets)} instance boxes -> {args.out}")
    return 0


def cmd_eval(args) -> int:
    preds = evaluation.read_detection_log(args.pred)
    gts = evaluation.read_ground_truth(args.gt)
    report = evaluation.evaluation_report(
        preds,
        gts,
        iou_threshold=args.iou,
        target_specificities=tuple(args.specificity),
        positive_fraction=args.positive_fraction,
        include_fp_per_frame=args.fp_per_frame,
    )
    if args.svg:
        curve = evaluation.roc_curve(preds, gts, args.iou)
        with open(args.svg, "w") as f:
            f.write(evaluation.roc_svg(curve))
    if args.out:
        _dump_json(args.out, report)
        print(
            f"auroc {report['auroc']:.4f}  max accuracy {report['max_accuracy']:.4f} "
            f"-> {args.out}"
        )
    else:
        json.dump(report, sys.stdout, indent=2, sort_keys=True)
        sys.stdout.write("\n")
    return 0


def cmd_stabilize(args) -> int:
    preds = evaluation.read_detection_log(args.detections)
    odo = stabilize.read_odometry(args.odometry)
    with open(args.camera) as f:
        cam = stabilize.CameraModel.from_dict(json.load(f))
    cfg = stabilize.StabilizerConfig(
        min_hits=args.n, gate_m=args.gate, max_gap_frames=args.max_gap,
        position_update=args.position_update,
    )
    by_frame = {}
    for p in preds:
        by_frame.setdefault(p.frame_id, []).append(p)
    stab = stabilize.Stabilizer(cfg)
    validated = []
    for frame_id in sorted(by_frame):
        frame_preds = by_frame[frame_id]
        t = next((p.t_seconds for p in frame_preds if p.t_seconds is not None), None)
        if t is None:
            raise ValueError(f"frame {frame_id} carries no t_seconds; cannot look up odometry")
        sample = odo.at(t)
        world = [
            stabilize.WorldDetection(
                x_m=stabilize.project_detection(p, cam, sample), score=p.score
            )
            for p in frame_preds
        ]
        validated.extend(stab.step(frame_id, world))
    stab.finish()
    stabilize.write_validated(args.out_validated, validated)
    stabilize.write_review_queue(args.out_review, stab.review_candidates())
    print(
        f"{len(validated)} validated saplings -> {args.out_validated}; "
        f"{len(stab.review_candidates())} review candidates -> {args.out_review}"
    )
    if args.enqueue_root:
        store = datastore.Datastore(args.enqueue_root)
        records = stabilize.review_queue_records(stab.review_candidates())
        created = store.enqueue_reviews(
            datastore.candidates_from_review_records(records, args.run_id)
        )
        print(f"{len(created)} new review entries queued in {args.enqueue_root}")
    return 0


def cmd_plan(args) -> int:
    with open(args.saplings) as f:
        raw = json.load(f)
    positions = [r["x_s_m"] if isinstance(r, dict) else float(r) for r in raw]
    a, b = args.margin
    params = control.ToolParams(
        retract_time_s=args.tr, extend_time_s=args.te,
        margin_base_m=a, margin_per_mps=b,
    )
    schedule = control.plan_schedule(positions, args.v, params)
    control.write_schedule(args.out, schedule)
    report = control.verify_safety(schedule, positions, args.v, params)
    if args.report:
        _dump_json(args.report, report.to_dict())
    for x, cmd in schedule.events:
        print(f"{cmd:>8} at {x:.3f} m")
    print(f"{len(schedule.events)} events -> {args.out}; safety ok={report.ok}")
    return 0


def cmd_simulate(args) -> int:
    scenario = simulate.read_scenario(args.scenario)
    seed = args.seed if args.seed is not None else args.global_seed
    if seed is not None:
        d = scenario.to_dict()
        d["seed"] = seed
        scenario = simulate.FieldScenario.from_dict(d)
    cfg = stabilize.StabilizerConfig(
        min_hits=args.n, gate_m=args.gate, max_gap_frames=args.max_gap
    )
    a, b = args.margin
    params = control.ToolParams(
        retract_time_s=args.tr, extend_time_s=args.te,
        margin_base_m=a, margin_per_mps=b,
    )
    report = simulate.end_to_end(scenario, cfg, params, include_events=bool(args.trace))
    _dump_json(args.out, report.to_dict())
    if args.trace:
        _dump_json(args.trace, report.to_dict(include_events=True))
    print(
        f"saplings {report.saplings_protected}/{report.saplings_total} protected, "
        f"{report.weeds_cleared_fraction:.1%} weeds cleared -> {args.out}"
    )
    return 0


def cmd_ingest(args) -> int:
    store = datastore.Datastore(args.root)
    metadata = dict(kv.split("=", 1) for kv in args.meta)
    results = store.ingest(args.files, metadata=metadata)
    for r in results:
        line = f"{r['status']:>9}  {r['path']}"
        if "id" in r:
            line += f"  id={r['id']}"
        if "error" in r:
            line += f"  ({r['error']})"
        print(line)
    return 0 if all(r["status"] != "error" for r in results) else 1


def cmd_serve(args) -> int:
    from .service import serve

    serve(args.root, host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    # allow_abbrev off: subcommand flags like plan's --v must never be
    # prefix-matched against the global --version/--verbose
    parser = argparse.ArgumentParser(
        prog="clearline",
        description="selective plant-clearing pipeline tools",
        allow_abbrev=False,
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0,
                        help="-v for info, -vv for debug logging")
    parser.add_argument("--seed", type=int, default=None, dest="global_seed",
                        help="default seed for randomized subcommands")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sam", help="classify a spectral cube against a reference library")
    p.add_argument("--cube", required=True)
    p.add_argument("--library", required=True)
    p.add_argument("--reject-angle", type=float, default=spectral.DEFAULT_REJECT_ANGLE)
    p.add_argument("--scoring", choices=("cosine", "dot"), default="cosine")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sam)

    p = sub.add_parser("clahe", help="contrast-limited adaptive histogram equalization")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--tiles", type=_parse_tiles, default=(8, 8))
    p.add_argument("--clip", type=float, default=4.0)
    p.add_argument("--bins", type=int, default=256)
    p.set_defaults(func=cmd_clahe)

    p = sub.add_parser("mask2det", help="threshold and cluster a fuzzy mask into detections")
    p.add_argument("--mask", required=True)
    p.add_argument("--frame-id", type=int, default=0)
    p.add_argument("--threshold", type=float, default=masks.DEFAULT_THRESHOLD)
    p.add_argument("--min-area", type=int, default=masks.DEFAULT_MIN_AREA)
    p.add_argument("--connectivity", type=int, choices=(4, 8), default=8)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_mask2det)

    p = sub.add_parser("bboxexport", help="export instance bounding boxes from a fuzzy mask")
    p.add_argument("--mask", required=True)
    p.add_argument("--image-id", required=True)
    p.add_argument("--threshold", type=float, default=masks.DEFAULT_THRESHOLD)
    p.add_argument("--min-area", type=int, default=masks.DEFAULT_MIN_AREA)
    p.add_argument("--connectivity", type=int, choices=(4, 8), default=8)
    p.add_argument("--annotator", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_bboxexport)

    p = sub.add_parser("eval", help="ROC/AUROC/accuracy report from detection and truth logs")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--iou", type=float, default=evaluation.DEFAULT_IOU_THRESHOLD)
    p.add_argument("--specificity", type=float, action="append", default=None)
    p.add_argument("--positive-fraction", type=float, default=0.5)
    p.add_argument("--fp-per-frame", action="store_true",
                   help="also emit the mean-false-positives-per-frame curve")
    p.add_argument("--out", default=None, help="report path; stdout when omitted")
    p.add_argument("--svg", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("stabilize", help="project detections to world positions and validate tracks")
    p.add_argument("--detections", required=True)
    p.add_argument("--odometry", required=True)
    p.add_argument("--camera", required=True)
    p.add_argument("--n", type=int, default=3)
    p.add_argument("--gate", type=float, default=stabilize.DEFAULT_GATE_M)
    p.add_argument("--max-gap", type=int, default=stabilize.DEFAULT_MAX_GAP_FRAMES)
    p.add_argument("--position-update", choices=("mean", "last"), default="mean")
    p.add_argument("--out-validated", required=True)
    p.add_argument("--out-review", required=True)
    p.add_argument("--enqueue-root", default=None,
                   help="also push review candidates into this dataset store")
    p.add_argument("--run-id", default="run",
                   help="prefix for detection references when enqueueing")
    p.set_defaults(func=cmd_stabilize)

    p = sub.add_parser("plan", help="retract/extend schedule from validated sapling positions")
    p.add_argument("--saplings", required=True)
    p.add_argument("--v", type=float, required=True)
    p.add_argument("--tr", type=float, required=True)
    p.add_argument("--te", type=float, required=True)
    p.add_argument("--margin", type=_parse_margin, default=(0.0, 0.0),
                   help="'a' or 'a,b': margin(v) = a + b*v")
    p.add_argument("--out", required=True)
    p.add_argument("--report", default=None)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("simulate", help="end-to-end synthetic field run")
    p.add_argument("--scenario", required=True)
    p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    p.add_argument("--n", type=int, default=3)
    p.add_argument("--gate", type=float, default=stabilize.DEFAULT_GATE_M)
    p.add_argument("--max-gap", type=int, default=stabilize.DEFAULT_MAX_GAP_FRAMES)
    p.add_argument("--tr", type=float, default=0.5)
    p.add_argument("--te", type=float, default=0.5)
    p.add_argument("--margin", type=_parse_margin, default=(0.15, 0.1))
    p.add_argument("--out", required=True)
    p.add_argument("--trace", default=None, help="also write the event trace")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("ingest", help="register image files in a dataset store")
    p.add_argument("--root", required=True)
    p.add_argument("--meta", action="append", default=[], metavar="KEY=VALUE")
    p.add_argument("files", nargs="+")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("serve", help="run the annotation/review HTTP service")
    p.add_argument("--root", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.verbose:
        logging.basicConfig(level=logging.DEBUG if args.verbose > 1 else logging.INFO)
    if getattr(args, "specificity", None) is None and args.command == "eval":
        args.specificity = [0.95]
    try:
        return args.func(args)
    except Exception as e:
        json.dump(
            {"error": type(e).__name__, "message": str(e)},
            sys.stderr,
        )
        sys.stderr.write("\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
