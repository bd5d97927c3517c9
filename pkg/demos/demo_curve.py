#!/usr/bin/env python3
"""Sweep the acceptance threshold and print the precision/POCS trade-off.

Higher thresholds classify more segments (POCS rises) at the cost of
precision; the proportion classified is 0 at D=0 and reaches 1.0 in
forced mode at the maximum cosine distance.
Run from the repo root: python3 demos/demo_curve.py
"""

import numpy as np

from castlines import PipelineConfig, precision_pocs_sweep
from castlines.fixtures import make_random_bundle


def main():
    bundle, exemplars, _ = make_random_bundle(seed=42, n_characters=3, n_segments=60)
    config = PipelineConfig(assign_threshold=0.5, high_confidence_threshold=0.25)
    grid = [round(float(x), 2) for x in np.linspace(0.0, 2.0, 11)]

    for mode in ("cascade", "forced"):
        points = precision_pocs_sweep(bundle, exemplars, config, grid, mode=mode)
        print(f"\n{mode} mode")
        print(f"{'D':>5}  " + "".join(f"{s:>18}" for s in ("ALL", "LONG", "SHORT")))
        for threshold in grid:
            row = [p for p in points if p.threshold == threshold]
            cells = []
            for stratum in ("ALL", "LONG", "SHORT"):
                (p,) = [q for q in row if q.stratum == stratum]
                precision = "  -  " if p.precision is None else f"{p.precision:.3f}"
                cells.append(f"p={precision} c={p.pocs:.2f}")
            print(f"{threshold:>5}  " + "".join(f"{c:>18}" for c in cells))


if __name__ == "__main__":
    main()
