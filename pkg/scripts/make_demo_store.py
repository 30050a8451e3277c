#!/usr/bin/env python3
"""Build a small demo dataset store for the annotation service and UI.

Synthesizes a handful of field-like frames (textured ground, grass
clutter, a few bright plant-like blobs), ingests them, annotates one with
a spray mask, and queues review entries from a simulated noisy run so the
review panel has content.

Usage:
    python3 scripts/make_demo_store.py --root demo_store
    clearline serve --root demo_store --port 8000
"""

import argparse
import tempfile
from pathlib import Path

import numpy as np
from PIL import Image

from clearline.datastore import Datastore, candidates_from_review_records
from clearline.masks import FuzzyMask, spray_stroke
from clearline.simulate import DetectorModel, FieldScenario, generate_field, run_detector
from clearline.stabilize import StabilizerConfig, WorldDetection, review_queue_records, run_stream


def synth_frame(rng, width=640, height=480, blobs=2):
    soil = rng.normal(95, 14, size=(height, width, 3))
    soil[:, :, 1] += rng.normal(8, 4, size=(height, width))  # greenish cast
    yy, xx = np.mgrid[0:height, 0:width]
    for _ in range(blobs):
        cx, cy = rng.uniform(80, width - 80), rng.uniform(80, height - 80)
        r = rng.uniform(18, 55)
        d2 = (xx - cx) ** 2 + (yy - cy) ** 2
        glow = np.exp(-d2 / (2 * r * r))
        soil[:, :, 1] += 90 * glow
        soil[:, :, 0] += 20 * glow
    return np.clip(soil, 0, 255).astype(np.uint8)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--root", default="demo_store")
    parser.add_argument("--frames", type=int, default=6)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    rng = np.random.default_rng(args.seed)
    store = Datastore(args.root)
    with tempfile.TemporaryDirectory() as tmp:
        files = []
        for i in range(args.frames):
            path = Path(tmp) / f"frame{i:03d}.png"
            Image.fromarray(synth_frame(rng, blobs=int(rng.integers(1, 4))), mode="RGB").save(path)
            files.append(path)
        results = store.ingest(files, metadata={"season": "spring", "weather": "cloudy"})
    ids = [r["id"] for r in results if r["status"] == "ingested"]
    print(f"ingested {len(ids)} frames into {args.root}")

    # pre-annotate the first frame with a rough spray mask
    rec = store.image_record(ids[0])
    mask = FuzzyMask.zeros(rec["width"], rec["height"])
    mask = spray_stroke(mask, [(200, 220), (260, 240), (300, 230)], 40, 0.9, "gaussian")
    mask = spray_stroke(mask, [(255, 200)], 25, 0.7, "gaussian")
    store.save_mask(ids[0], mask)
    print(f"annotated {ids[0]} with a demo mask")

    # review-queue content from a short noisy simulated pass
    sc = FieldScenario(
        seed=args.seed,
        line_length_m=20.0,
        detector=DetectorModel(tp_prob=0.7, fp_per_frame=0.6, pos_noise_m=0.05),
    )
    frames = run_detector(generate_field(sc), sc)
    stream = [
        (fr.frame_id, [WorldDetection(d.x_m, d.score) for d in fr.detections]) for fr in frames
    ]
    _, review = run_stream(stream, StabilizerConfig(min_hits=3, gate_m=0.3, max_gap_frames=2))
    image_ids = {tr.frames[0]: ids[tr.frames[0] % len(ids)] for tr in review}
    created = store.enqueue_reviews(
        candidates_from_review_records(review_queue_records(review), "demo-pass", image_ids)
    )
    print(f"queued {len(created)} review candidates")
    print(f"run: clearline serve --root {args.root} --port 8000")


if __name__ == "__main__":
    main()
