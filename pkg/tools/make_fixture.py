#!/usr/bin/env python3
"""Regenerate the frozen 20-segment episode fixture.

The embedding geometry is built from exact trigonometry on an
orthonormal basis so every cascade decision lands in a known band:

* candidates F0-F3/N0-N2 form tight clusters (pairwise 0.10) and
  survive the purity filter at N=2;
* F4/N3 sit at the cluster edge with a mislabeled twin (Xn/Xf) planted
  0.05 away, so all four are killed by the filter, then recovered in
  stage 2 (edge members through the high-confidence rung at 0.17/0.18,
  twins through local context at 0.05);
* FL/NL are long segments at 0.28 from their cluster;
* FS1/FS2/NS1 are shorts at 0.38/0.42/0.45 (accepted at D=0.5, refused
  at D=0.3, nothing lands in (0.5, 0.7) so tuning ties at the top);
* NS2/FS3 are far from everything (>= 0.75) and resolve via the
  scripted oracle; RZ stays unresolved; OV is overlapped speech dual
  labeled from its neighbours.

Run from the repo root: python3 tools/make_fixture.py
"""

from __future__ import annotations

import json
import math
import sys
from pathlib import Path

import numpy as np

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "src"))

from castlines.core import cosine_distance  # noqa: E402
from castlines.exemplars import audio_purity_filter  # noqa: E402
from castlines.core import SpeakerEmbedding  # noqa: E402

OUT = ROOT / "tests" / "fixtures" / "episode1"

EPISODE = "frasier-s01e01"
DIM = 24
COS_A = math.sqrt(0.9)  # tight-cluster members: pairwise distance exactly 0.10


def on_axis(center_dim: int, ortho_dim: int, cos_theta: float) -> np.ndarray:
    vec = np.zeros(DIM)
    vec[center_dim] = cos_theta
    vec[ortho_dim] = math.sqrt(max(0.0, 1.0 - cos_theta**2))
    return vec


def rotated(center_dim: int, ortho_dim: int, base_cos: float, extra_angle: float) -> np.ndarray:
    angle = math.acos(base_cos) + extra_angle
    return on_axis(center_dim, ortho_dim, math.cos(angle))


def build_vectors() -> dict[str, np.ndarray]:
    f, n = 0, 1  # centroid axes for Frasier and Niles
    delta = math.acos(0.95)  # 0.05 cosine distance between twin pairs
    cos_f4 = 0.83 / COS_A  # distance 0.17 to the Frasier exemplars
    cos_n3 = 0.82 / COS_A  # distance 0.18 to the Niles exemplars
    vectors = {
        "F0": on_axis(f, 2, COS_A),
        "F1": on_axis(f, 3, COS_A),
        "F2": on_axis(f, 4, COS_A),
        "F3": on_axis(f, 5, COS_A),
        "F4": on_axis(f, 6, cos_f4),
        "Xn": rotated(f, 6, cos_f4, delta),
        "FL": on_axis(f, 7, 0.72 / COS_A),   # 0.28
        "FS1": on_axis(f, 8, 0.62 / COS_A),  # 0.38
        "FS2": on_axis(f, 9, 0.58 / COS_A),  # 0.42
        "FS3": on_axis(f, 10, 0.15),         # ~0.858 to Frasier members
        "N0": on_axis(n, 11, COS_A),
        "N1": on_axis(n, 12, COS_A),
        "N2": on_axis(n, 13, COS_A),
        "N3": on_axis(n, 14, cos_n3),
        "Xf": rotated(n, 14, cos_n3, delta),
        "NL": on_axis(n, 15, 0.72 / COS_A),  # 0.28
        "NS1": on_axis(n, 16, 0.55 / COS_A),  # 0.45
        "NS2": on_axis(n, 17, 0.12),         # ~0.886 to Niles members
        "OV": on_axis(18, 19, 1.0),          # orthogonal to everything labeled
        "RZ": on_axis(20, 21, 1.0),
    }
    return vectors


# role, speaker(s), duration, text
SCRIPT = [
    ("F0", ["Frasier"], 2.6, "Good evening Seattle, this is Frasier Crane."),
    ("N0", ["Niles"], 2.4, "Frasier, I need your advice rather urgently."),
    ("F1", ["Frasier"], 2.2, "Calm down Niles and take a breath."),
    ("Xn", ["Frasier"], 1.4, "It is about the dinner party."),
    ("F4", ["Frasier"], 1.3, "Daphne has invited simply everyone."),
    ("N1", ["Niles"], 2.5, "Surely you cannot be serious about the menu."),
    ("FS1", ["Frasier"], 1.0, "I am quite serious."),
    ("F2", ["Frasier"], 2.7, "Sherry is hardly a crime against taste, Niles."),
    ("NS1", ["Niles"], 1.5, "It is when you serve it warm."),
    ("N2", ["Niles"], 2.6, "I will bring a respectable bottle myself tonight."),
    ("FL", ["Frasier"], 3.4, "Well then we are agreed, the party proceeds exactly as Daphne planned it."),
    ("OV", ["Frasier", "Niles"], 1.2, "You always do this."),
    ("NL", ["Niles"], 3.2, "I merely refuse to let another soiree descend into chaos like last spring."),
    ("N3", ["Niles"], 1.3, "You remember the foam."),
    ("Xf", ["Niles"], 1.5, "I can still smell the lavender."),
    ("FS2", ["Frasier"], 1.1, "That was an accident."),
    ("F3", ["Frasier"], 2.3, "We will say no more about it."),
    ("NS2", ["Niles"], 0.6, "Fine."),
    ("RZ", ["Roz"], 2.2, "Boys, your caller is still waiting on line two."),
    ("FS3", ["Frasier"], 1.4, "Ah yes, right, where were we."),
]

GAP = 0.3  # silence between consecutive segments
# Wider pause after the overlapped line so its backward neighbour (FL)
# is the nearer one by midpoint and therefore the primary label.
GAP_AFTER = {"OV": 0.8}

# single-peak visual identifications: role -> (seen character, distance)
SINGLE_PEAK = {
    "F0": ("Frasier", 0.2),
    "F1": ("Frasier", 0.22),
    "F2": ("Frasier", 0.21),
    "F3": ("Frasier", 0.19),
    "F4": ("Frasier", 0.24),
    "Xn": ("Niles", 0.25),  # visual mislabel: the speaker is Frasier
    "N0": ("Niles", 0.2),
    "N1": ("Niles", 0.23),
    "N2": ("Niles", 0.21),
    "N3": ("Niles", 0.24),
    "Xf": ("Frasier", 0.26),  # visual mislabel: the speaker is Niles
}

CAST = [
    {"name": "Frasier", "is_main": True, "aliases": ["Dr. Crane", "Dr. Frasier Crane"]},
    {"name": "Niles", "is_main": True, "aliases": ["Dr. Niles Crane"]},
    {"name": "Roz", "is_main": True, "aliases": ["Roz Doyle"]},
    {"name": "Bulldog", "is_main": False, "aliases": []},
]
CAST_NAMES = [c["name"] for c in CAST]

FAR_DISTANCES = {"Frasier": 0.9, "Niles": 0.88, "Roz": 0.92, "Bulldog": 0.95}

STUB = {
    "OV": {"3": 0.86, "1": 0.08, "2": 0.06},
    "NS2": {"2": 0.81, "1": 0.11, "3": 0.08},
    "RZ": {"3": 0.93, "1": 0.04, "2": 0.03},
    "FS3": {"1": 0.77, "2": 0.12, "3": 0.11},
}

CONFIG = {
    "n_local": 15,
    "n_llm": 15,
    "purity_neighbors": 2,
    "assign_threshold": 0.5,
    "high_confidence_threshold": 0.25,
    "long_segment_seconds": 2.0,
    "silence_split_seconds": 1.0,
    "der_collar_seconds": 0.25,
    "visual_confidence_threshold": 0.5,
    "gallery_images_per_character": 10,
    "crop_width_px": 350,
    "crop_height_px": 350,
}


def seg_id(ordinal: int) -> str:
    return f"fr01-{ordinal:03d}"


def words_for(text: str, start: float, end: float):
    tokens = text.split()
    span = end - start
    slot = span / len(tokens)
    words = []
    for i, tok in enumerate(tokens):
        ws = round(start + i * slot, 3)
        we = round(start + i * slot + 0.8 * slot, 3)
        words.append({"w": tok, "start_s": ws, "end_s": we})
    return words


def check_geometry(vectors: dict[str, np.ndarray]):
    d = lambda a, b: cosine_distance(vectors[a], vectors[b])
    approx = lambda x, y: abs(x - y) < 5e-3

    f_ex = ["F0", "F1", "F2", "F3"]
    n_ex = ["N0", "N1", "N2"]
    for i, a in enumerate(f_ex):
        for b in f_ex[i + 1:]:
            assert approx(d(a, b), 0.10), (a, b, d(a, b))
    assert approx(min(d("F4", e) for e in f_ex), 0.17)
    assert approx(d("Xn", "F4"), 0.05)
    assert 0.33 < min(d("Xn", e) for e in f_ex) < 0.40
    assert approx(min(d("FL", e) for e in f_ex), 0.28)
    assert approx(min(d("FS1", e) for e in f_ex), 0.38)
    assert approx(min(d("FS2", e) for e in f_ex), 0.42)
    assert min(d("FS3", e) for e in f_ex + n_ex) > 0.75
    assert approx(min(d("N3", e) for e in n_ex), 0.18)
    assert approx(d("Xf", "N3"), 0.05)
    assert approx(min(d("NL", e) for e in n_ex), 0.28)
    assert approx(min(d("NS1", e) for e in n_ex), 0.45)
    assert min(d("NS2", e) for e in f_ex + n_ex) > 0.75
    for far in ("OV", "RZ"):
        assert min(d(far, o) for o in vectors if o != far) > 0.95
    # Cross-cluster separation.
    assert min(d(a, b) for a in f_ex for b in n_ex) > 0.95
    # Nothing decides inside (0.5, 0.7): the tune grid must tie at the top.
    decision = [0.10, 0.17, 0.05, 0.28, 0.38, 0.42, 0.18, 0.45]
    assert all(not (0.47 < x < 0.73) for x in decision)

    # Purity filter at N=2 must keep exactly the seven tight-cluster members.
    roles = {**{r: "Frasier" for r in f_ex}, "F4": "Frasier", "Xn": "Niles",
             **{r: "Niles" for r in n_ex}, "N3": "Niles", "Xf": "Frasier"}
    ordinals = {role: i for i, (role, *_rest) in enumerate(SCRIPT)}
    candidates = [(seg_id(ordinals[r]), label) for r, label in roles.items()]
    embeddings = {
        seg_id(ordinals[r]): SpeakerEmbedding(seg_id(ordinals[r]), tuple(vectors[r]))
        for r in roles
    }
    kept = audio_purity_filter(sorted(candidates), embeddings, 2)
    kept_roles = sorted(
        r for r in roles if seg_id(ordinals[r]) in {e.segment_id for e in kept}
    )
    assert kept_roles == sorted(f_ex + n_ex), kept_roles


def main():
    vectors = build_vectors()
    check_geometry(vectors)
    OUT.mkdir(parents=True, exist_ok=True)

    segments = []
    embeddings = []
    visual = []
    reference = []
    stub = []
    t = 0.0
    for ordinal, (role, speakers, dur, text) in enumerate(SCRIPT):
        sid = seg_id(ordinal)
        start, end = round(t, 3), round(t + dur, 3)
        t = end + GAP_AFTER.get(role, GAP)
        segments.append(
            {
                "id": sid,
                "episode": EPISODE,
                "start_s": start,
                "end_s": end,
                "text": text,
                "words": words_for(text, start, end),
            }
        )
        embeddings.append({"segment_id": sid, "vector": [float(x) for x in vectors[role]]})
        for speaker in speakers:
            reference.append({"start_s": start, "end_s": end, "speaker": speaker, "text": text})
        if role in SINGLE_PEAK:
            seen, dist = SINGLE_PEAK[role]
            distances = dict(FAR_DISTANCES)
            distances[seen] = dist
            visual.append({"segment_id": sid, "peaks": [{"peak_index": 0, "distances": distances}]})
        elif role == "OV":
            peak0 = dict(FAR_DISTANCES)
            peak0["Frasier"] = 0.3
            peak1 = dict(FAR_DISTANCES)
            peak1["Niles"] = 0.32
            visual.append(
                {
                    "segment_id": sid,
                    "peaks": [
                        {"peak_index": 0, "distances": peak0},
                        {"peak_index": 1, "distances": peak1},
                    ],
                }
            )
        elif role == "NS1":
            # A single peak nobody passes the confidence gate for.
            visual.append({"segment_id": sid, "peaks": [{"peak_index": 0, "distances": dict(FAR_DISTANCES)}]})
        elif role in ("NS2", "RZ"):
            visual.append({"segment_id": sid, "peaks": []})
        # FL, NL, FS1, FS2, FS3 have no observation row at all.
        if role in STUB:
            stub.append({"segment_id": sid, "distribution": STUB[role]})

    # The overlapped segment (ordinal 11) is covered for 1.0s of its 1.2s.
    ov = segments[11]
    overlap = [
        {"episode": EPISODE, "start_s": round(ov["start_s"] + 0.1, 3), "end_s": round(ov["end_s"] - 0.1, 3)}
    ]
    # The backward neighbour (FL) must be nearer by midpoint than NL.
    fl, nl = segments[10], segments[12]
    mid = lambda s: 0.5 * (s["start_s"] + s["end_s"])
    assert abs(mid(ov) - mid(fl)) < abs(mid(nl) - mid(ov))

    def dump_jsonl(rows, name):
        with open(OUT / name, "w", encoding="utf-8") as fh:
            for row in rows:
                fh.write(json.dumps(row, ensure_ascii=False) + "\n")

    dump_jsonl(segments, "segments.jsonl")
    dump_jsonl(embeddings, "embeddings.jsonl")
    dump_jsonl(visual, "visual.jsonl")
    dump_jsonl(overlap, "overlap.jsonl")
    dump_jsonl(sorted(reference, key=lambda r: (r["start_s"], r["speaker"])), "reference.jsonl")
    dump_jsonl(stub, "stub.jsonl")
    with open(OUT / "cast.json", "w", encoding="utf-8") as fh:
        json.dump({"characters": CAST}, fh, ensure_ascii=False, indent=2)
        fh.write("\n")
    with open(OUT / "config.json", "w", encoding="utf-8") as fh:
        json.dump(CONFIG, fh, ensure_ascii=False, indent=2)
        fh.write("\n")
    print(f"fixture written to {OUT}")


if __name__ == "__main__":
    main()
