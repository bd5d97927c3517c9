#!/usr/bin/env python3
"""Walk the full two-stage pipeline over the bundled sample episode.

Stage 1 mines labeled audio exemplars from the visual observations;
stage 2 pushes every segment through the assignment cascade, consulting
a scripted oracle for the few lines that audio alone cannot settle.
Run from the repo root: python3 demos/demo_pipeline.py
"""

from pathlib import Path

from castlines import build_exemplars, run_stage2
from castlines.io import load_bundles, load_config, load_stub
from castlines.oracle import ScriptedStubOracle

FIXTURE = Path(__file__).resolve().parent.parent / "tests" / "fixtures" / "episode1"


def main():
    (bundle,) = load_bundles(
        segments_path=FIXTURE / "segments.jsonl",
        embeddings_path=FIXTURE / "embeddings.jsonl",
        cast_path=FIXTURE / "cast.json",
        visual_path=FIXTURE / "visual.jsonl",
        overlap_path=FIXTURE / "overlap.jsonl",
        reference_path=FIXTURE / "reference.jsonl",
    )
    config = load_config(FIXTURE / "config.json")
    print(f"episode {bundle.episode}: {len(bundle.segments)} segments, cast {bundle.cast.names}")

    stage1 = build_exemplars(bundle, config)
    print(
        f"\nstage 1: {stage1.n_segments} segments -> {stage1.n_av_recognised} "
        f"AV-recognised -> {stage1.n_exemplars} exemplars"
    )
    for exemplar in stage1.exemplars:
        print(f"  exemplar {exemplar.segment_id} -> {exemplar.character}")

    oracle = ScriptedStubOracle(load_stub(FIXTURE / "stub.jsonl"))
    result = run_stage2(bundle, list(stage1.exemplars), config, oracle)
    print(f"\nstage 2: {len(result.segments)} final segments, {result.oracle_calls} oracle calls")
    print(f"{'segment':<10} {'speaker':<16} {'rung':<16} score  text")
    seg_by_id = {s.id: s for s in result.segments}
    for assignment in result.assignments:
        seg = seg_by_id[assignment.segment_id]
        label = assignment.label or "(unknown)"
        if assignment.secondary_label:
            label += "/" + assignment.secondary_label
        print(
            f"{assignment.segment_id:<10} {label:<16} {assignment.provenance.value:<16} "
            f"{assignment.score:5.2f}  {seg.text}"
        )
    print("\nprovenance counts:", result.provenance_counts())


if __name__ == "__main__":
    main()
