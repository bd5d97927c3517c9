"""Command line for the extraction adapters.

Mirrors the engine's subcommand style; every command writes exactly the
engine wire formats. Exit codes: 0 ok, 2 unreadable media, bad profile,
or model load failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import extractors as X
from .profile import load_profile

logger = logging.getLogger(__name__)


def _profile(args):
    return load_profile(args.profile)


def cmd_transcript(args) -> int:
    n = X.extract_transcript(args.media, _profile(args), Path(args.out_dir) / "segments.jsonl", args.episode)
    print(f"transcript: {n} segments")
    return 0


def cmd_embeddings(args) -> int:
    n = X.extract_embeddings(args.media, args.segments, _profile(args), Path(args.out_dir) / "embeddings.jsonl")
    print(f"embeddings: {n} vectors")
    return 0


def cmd_visual(args) -> int:
    n = X.extract_visual(
        args.media,
        args.audio,
        args.segments,
        args.gallery,
        args.cast,
        _profile(args),
        Path(args.out_dir) / "visual.jsonl",
    )
    print(f"visual: {n} observation rows")
    return 0


def cmd_overlap(args) -> int:
    n = X.extract_overlap(args.media, _profile(args), Path(args.out_dir) / "overlap.jsonl", args.episode)
    print(f"overlap: {n} regions")
    return 0


def cmd_convert_reference(args) -> int:
    n = X.convert_reference(args.input, Path(args.out_dir) / "reference.jsonl", args.cast)
    print(f"convert-reference: {n} entries")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="castlines-extract",
        description="Run extraction adapters over media and emit engine input files.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, episode=False):
        p.add_argument("--profile", default=None, help="JSON extraction profile")
        p.add_argument("--out-dir", required=True)
        if episode:
            p.add_argument("--episode", default=None, help="episode id (default: media stem)")

    p = sub.add_parser("transcript", help="speech segments with word timestamps")
    p.add_argument("--media", required=True, help="WAV audio")
    common(p, episode=True)
    p.set_defaults(func=cmd_transcript)

    p = sub.add_parser("embeddings", help="voice embedding per segment")
    p.add_argument("--media", required=True, help="WAV audio")
    p.add_argument("--segments", required=True, help="segments.jsonl")
    common(p)
    p.set_defaults(func=cmd_embeddings)

    p = sub.add_parser("visual", help="lip-sync peaks with cast distances")
    p.add_argument("--media", required=True, help="video file")
    p.add_argument("--audio", required=True, help="WAV audio")
    p.add_argument("--segments", required=True)
    p.add_argument("--gallery", required=True, help="directory with one folder per character")
    p.add_argument("--cast", required=True, help="cast.json")
    common(p)
    p.set_defaults(func=cmd_visual)

    p = sub.add_parser("overlap", help="overlapping-speech regions")
    p.add_argument("--media", required=True, help="WAV audio")
    common(p, episode=True)
    p.set_defaults(func=cmd_overlap)

    p = sub.add_parser("convert-reference", help="native annotation CSV to reference.jsonl")
    p.add_argument("--input", required=True, help="CSV with speaker,start_s,end_s[,text]")
    p.add_argument("--cast", default=None, help="cast.json for alias canonicalisation")
    common(p)
    p.set_defaults(func=cmd_convert_reference)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (OSError, ValueError) as exc:
        logger.error("%s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
