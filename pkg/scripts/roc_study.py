#!/usr/bin/env python3
"""Sweep detector quality and chart the resulting ROC curves.

Builds synthetic detection problems from uniform score models (the same
family the field simulator uses), evaluates each with the harness, and
writes one JSON report plus one SVG curve per quality level.

Usage:
    python3 scripts/roc_study.py --out-dir out/roc_study [--frames 2000] [--seed 0]
"""

import argparse
import json
from pathlib import Path

import numpy as np

from clearline.evaluation import (
    GroundTruthSet,
    auroc,
    evaluation_report,
    roc_curve,
    roc_svg,
)
from clearline.masks import Detection

QUALITY_LEVELS = {
    # (true score range, false score range): more overlap = weaker detector
    "strong": ((0.7, 1.0), (0.0, 0.5)),
    "default": ((0.6, 1.0), (0.0, 0.7)),
    "weak": ((0.45, 1.0), (0.0, 0.85)),
    "chance": ((0.0, 1.0), (0.0, 1.0)),
}


def build_problem(rng, n_frames, score_true, score_false):
    gts, preds = {}, []
    half = n_frames // 2
    box = (10.0, 10.0, 60.0, 60.0)
    for fid in range(half):
        gts[fid] = [box]
        preds.append(Detection(frame_id=fid, bbox=box, score=float(rng.uniform(*score_true))))
    for fid in range(half, n_frames):
        gts[fid] = []
        preds.append(
            Detection(frame_id=fid, bbox=(80.0, 80.0, 95.0, 95.0), score=float(rng.uniform(*score_false)))
        )
    return preds, GroundTruthSet(frames=gts)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out-dir", default="out/roc_study")
    parser.add_argument("--frames", type=int, default=2000)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    summary = {}
    for name, (score_true, score_false) in QUALITY_LEVELS.items():
        rng = np.random.default_rng(args.seed)
        preds, gts = build_problem(rng, args.frames, score_true, score_false)
        report = evaluation_report(preds, gts, target_specificities=(0.95, 0.9))
        curve = roc_curve(preds, gts)
        (out_dir / f"{name}.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
        (out_dir / f"{name}.svg").write_text(roc_svg(curve))
        summary[name] = {
            "auroc": report["auroc"],
            "max_accuracy": report["max_accuracy"],
            "sensitivity_at_95_spec": report["working_points"][0]["sensitivity"],
        }
        print(
            f"{name:>8}: auroc {report['auroc']:.3f}  "
            f"max acc {report['max_accuracy']:.3f}  "
            f"sens@95%spec {report['working_points'][0]['sensitivity']:.3f}"
        )
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(f"reports in {out_dir}/")


if __name__ == "__main__":
    main()
