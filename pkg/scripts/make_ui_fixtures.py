#!/usr/bin/env python3
"""Regenerate the frontend replay-equivalence fixtures.

Writes frontend/tests/fixtures/sessions.json: randomized stroke logs
paired with the 8-bit mask the core compositor produces for each. The
frontend test suite replays every log in the browser-side compositor and
requires byte-identical output, pinning the two implementations together
without the frontend needing Python at test time.
"""

import base64
import json
from pathlib import Path

import numpy as np

from clearline.masks import mask_to_pgm, replay_strokes

OUT = Path(__file__).parent.parent / "frontend" / "tests" / "fixtures" / "sessions.json"
FALLOFFS = ["hard", "linear", "gaussian"]


def random_session(rng, width, height):
    strokes = []
    for _ in range(int(rng.integers(3, 9))):
        n_points = int(rng.integers(1, 5))
        path = [
            [float(rng.uniform(0, width - 1)), float(rng.uniform(0, height - 1))]
            for _ in range(n_points)
        ]
        strokes.append(
            {
                "path": path,
                "radius": float(rng.uniform(1.0, 9.0)),
                "intensity": float(rng.uniform(0.0, 1.0)),
                "falloff": FALLOFFS[int(rng.integers(0, 3))],
                "erase": bool(rng.random() < 0.2),
            }
        )
    return strokes


def main():
    rng = np.random.default_rng(20240915)
    sessions = []
    for i in range(20):
        width = int(rng.integers(24, 72))
        height = int(rng.integers(24, 72))
        strokes = random_session(rng, width, height)
        mask = replay_strokes(width, height, strokes)
        sessions.append(
            {
                "name": f"session-{i:02d}",
                "width": width,
                "height": height,
                "strokes": strokes,
                "expected_pgm_base64": base64.b64encode(mask_to_pgm(mask)).decode("ascii"),
            }
        )
    OUT.parent.mkdir(parents=True, exist_ok=True)
    with open(OUT, "w") as f:
        json.dump(sessions, f, indent=1)
        f.write("\n")
    print(f"{len(sessions)} sessions -> {OUT}")


if __name__ == "__main__":
    main()
