#!/usr/bin/env python3
"""Score a toy diarisation hypothesis by hand-checkable cases.

Shows the collar at work on a two-speaker timeline, overlap
multiplicity, the utterance-level CDER(op) metric, and the optimal
label-mapping mode used against name-free diarisers.
Run from the repo root: python3 demos/demo_metrics.py
"""

from castlines import TimeInterval, compute_cder, compute_der


def show(title, score):
    print(
        f"{title:<42} DER {score.der:6.3f}  "
        f"(miss {score.miss:.2f}s, fa {score.false_alarm:.2f}s, "
        f"err {score.speaker_error:.2f}s over {score.scored_speech:.2f}s)"
    )


def main():
    iv = TimeInterval
    ref = [(iv(0, 2), "Frasier"), (iv(2, 4), "Niles")]

    show("identity hypothesis", compute_der(ref, list(ref), collar=0.25))

    hyp = [(iv(0, 4), "Frasier")]
    # Collar trims 0.25s around every reference boundary, leaving
    # [0.25, 1.75] correct and [2.25, 3.75] as speaker error: DER 0.5.
    show("one speaker covering both turns", compute_der(ref, hyp, collar=0.25))

    overlapped = [(iv(0, 2), "Frasier"), (iv(0, 2), "Niles")]
    show("overlap missed by a single-speaker hyp", compute_der(overlapped, [(iv(0, 2), "Frasier")], collar=0.0))

    clustered = [(iv(0, 2), "spk1"), (iv(2, 4), "spk0")]
    show("cluster labels, identification mode", compute_der(ref, clustered, collar=0.0))
    show("cluster labels, optimal mapping", compute_der(ref, clustered, collar=0.0, mode="optimal"))

    utterances = [(iv(0, 2), "Frasier"), (iv(3, 4), "Niles"), (iv(5, 7), "Frasier")]
    wrong_last = [(iv(0, 2), "Frasier"), (iv(3, 4), "Niles"), (iv(5, 7), "Niles")]
    print(f"\nCDER(op), perfect hypothesis:  {compute_cder(utterances, utterances):.3f}")
    print(f"CDER(op), last utterance wrong: {compute_cder(utterances, wrong_last):.3f}")


if __name__ == "__main__":
    main()
