"""Command-line entry point.

Subcommands: build-exemplars, assign, eval, tune, curve, validate. Runs
are driven by a JSON config file whose fields individual flags can
override; every data-producing command writes a manifest recording the
config snapshot, input digests and stage counts (the manifest also
records wall-clock timings, so it is the one output that is not
byte-reproducible). Exit codes: 0 ok, 1 undefined metric, 2 invalid
input, 3 oracle transport exhaustion.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import io as cio
from .assigner import Stage2Result, run_stage2
from .core import PipelineConfig, SegmentRecord, TimeInterval
from .errors import CastlinesError, OracleError, ValidationError
from .exemplars import build_exemplars, exemplars_from_labels
from .metrics import (
    compute_cder,
    compute_der,
    curve_csv,
    hypothesis_turns,
    precision_pocs_sweep,
    recognition_report,
)
from .oracle import HttpChatOracle, ScriptedStubOracle

logger = logging.getLogger(__name__)

CONFIG_FLAGS = {
    "n_local": int,
    "n_llm": int,
    "purity_neighbors": int,
    "assign_threshold": float,
    "high_confidence_threshold": float,
    "long_segment_seconds": float,
    "silence_split_seconds": float,
    "der_collar_seconds": float,
    "visual_confidence_threshold": float,
    "gallery_images_per_character": int,
    "crop_width_px": int,
    "crop_height_px": int,
}


def _add_config_args(parser: argparse.ArgumentParser):
    parser.add_argument("--config", help="JSON config file (flags below override fields)")
    for name, typ in CONFIG_FLAGS.items():
        parser.add_argument(f"--{name.replace('_', '-')}", type=typ, default=None)


def _config_from_args(args) -> PipelineConfig:
    config = cio.load_config(args.config) if args.config else PipelineConfig()
    overrides = {}
    for name in CONFIG_FLAGS:
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = value
    return config.replace(**overrides) if overrides else config


def _add_bundle_args(parser: argparse.ArgumentParser, reference: bool = False):
    parser.add_argument("--segments", required=True)
    parser.add_argument("--embeddings", required=True)
    parser.add_argument("--cast", required=True)
    parser.add_argument("--visual", default=None)
    parser.add_argument("--overlap", default=None)
    parser.add_argument("--reference", required=reference, default=None)
    parser.add_argument("--episode", default=None, help="restrict to one episode")
    parser.add_argument("--embedding-dim", type=int, default=None)


def _load_bundles(args) -> list[cio.EpisodeBundle]:
    return cio.load_bundles(
        segments_path=args.segments,
        embeddings_path=args.embeddings,
        cast_path=args.cast,
        visual_path=args.visual,
        overlap_path=args.overlap,
        reference_path=getattr(args, "reference", None),
        episode=args.episode,
        expected_dim=args.embedding_dim,
    )


def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return "sha256:" + h.hexdigest()


def _input_digests(args, names=("segments", "embeddings", "cast", "visual", "overlap", "reference", "exemplars", "config")) -> dict:
    digests = {}
    for name in names:
        path = getattr(args, name, None)
        if path and Path(path).exists():
            digests[path] = _sha256(path)
    return digests


class ManifestWriter:
    """Collects run metadata; flushed even when the command fails."""

    def __init__(self, command: str, out_path: Path, config: PipelineConfig | None, digests: dict, seed):
        self.data = {
            "command": command,
            "format_version": cio.FORMAT_VERSION,
            "config": config.to_dict() if config else None,
            "inputs": digests,
            "seed": seed,
            "counts": {},
            "timings_s": {},
            "status": "error",
            "error": None,
        }
        self.out_path = out_path
        self._t0 = time.monotonic()
        self._last = self._t0

    def lap(self, stage: str):
        now = time.monotonic()
        self.data["timings_s"][stage] = round(now - self._last, 6)
        self._last = now

    def finish(self, error: str | None = None):
        self.data["timings_s"]["total"] = round(time.monotonic() - self._t0, 6)
        self.data["status"] = "ok" if error is None else "error"
        self.data["error"] = error
        self.out_path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.out_path, "w", encoding="utf-8") as fh:
            json.dump(self.data, fh, ensure_ascii=False, indent=2)
            fh.write("\n")


def _episode_dir(out_dir: Path, episodes: list[str], episode: str) -> Path:
    return out_dir if len(episodes) <= 1 else out_dir / episode


def _dump_json(obj, path: Path):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, ensure_ascii=False, indent=2)
        fh.write("\n")


# ---------------------------------------------------------------------------
# build-exemplars
# ---------------------------------------------------------------------------


def cmd_build_exemplars(args) -> int:
    config = _config_from_args(args)
    out_dir = Path(args.out_dir)
    manifest = ManifestWriter(
        "build-exemplars", out_dir / "manifest.json", config, _input_digests(args), args.seed
    )
    try:
        bundles = _load_bundles(args)
        manifest.lap("load")
        episodes = [b.episode for b in bundles]
        if not args.visual:
            logger.warning("no visual observations supplied; expect zero exemplars")

        def one(bundle):
            return bundle.episode, build_exemplars(bundle, config)

        if args.jobs > 1:
            with ThreadPoolExecutor(max_workers=args.jobs) as pool:
                results = dict(pool.map(one, bundles))
        else:
            results = dict(one(b) for b in bundles)
        manifest.lap("stage1")

        totals = {"segments": 0, "av_recognised": 0, "exemplars": 0}
        per_episode = {}
        for episode in episodes:
            result = results[episode]
            pairs = [(e.segment_id, e.character) for e in result.exemplars]
            cio.write_exemplar_labels(pairs, _episode_dir(out_dir, episodes, episode) / "exemplars.jsonl")
            counts = {
                "segments": result.n_segments,
                "av_recognised": result.n_av_recognised,
                "exemplars": result.n_exemplars,
            }
            per_episode[episode] = counts
            for key in totals:
                totals[key] += counts[key]
        manifest.data["counts"] = dict(totals)
        if len(episodes) > 1:
            manifest.data["counts"]["per_episode"] = per_episode
        manifest.data["episodes"] = episodes
        manifest.lap("write")
        manifest.finish()
        print(
            f"build-exemplars: {totals['segments']} segments -> "
            f"{totals['av_recognised']} AV-recognised -> {totals['exemplars']} exemplars"
        )
        return 0
    except CastlinesError as exc:
        manifest.finish(error=str(exc))
        raise


# ---------------------------------------------------------------------------
# assign
# ---------------------------------------------------------------------------


def _make_oracle(spec: str):
    if spec == "off":
        return None
    if spec.startswith("stub:"):
        return ScriptedStubOracle(cio.load_stub(spec[len("stub:"):]))
    if spec == "http":
        return HttpChatOracle.from_env()
    raise ValidationError(f"unknown oracle mode {spec!r} (expected off, stub:PATH or http)")


def cmd_assign(args) -> int:
    config = _config_from_args(args)
    out_dir = Path(args.out_dir)
    manifest = ManifestWriter("assign", out_dir / "manifest.json", config, _input_digests(args), args.seed)
    try:
        oracle = _make_oracle(args.oracle)
        use_llm = oracle is not None
        bundles = _load_bundles(args)
        episodes = [b.episode for b in bundles]
        manifest.lap("load")

        def one(bundle):
            pairs = cio.load_exemplar_labels(args.exemplars)
            known = {s.id for s in bundle.segments}
            pairs = [(sid, char) for sid, char in pairs if sid in known]
            exemplars = exemplars_from_labels(pairs, bundle)
            return bundle.episode, run_stage2(bundle, exemplars, config, oracle, use_llm=use_llm)

        if args.jobs > 1:
            with ThreadPoolExecutor(max_workers=args.jobs) as pool:
                results = dict(pool.map(one, bundles))
        else:
            results = dict(one(b) for b in bundles)
        manifest.lap("stage2")

        provenance_totals: dict[str, int] = {}
        totals = {"segments": 0, "final_segments": 0, "oracle_calls": 0, "unknown": 0}
        for bundle in bundles:
            result: Stage2Result = results[bundle.episode]
            dest = _episode_dir(out_dir, episodes, bundle.episode)
            cio.write_assignments(result.assignments, result.segments, dest / "assignments.jsonl")
            cio.write_subtitles(result.assignments, result.segments, dest / "subtitles.srt", format="srt")
            totals["segments"] += len(bundle.segments)
            totals["final_segments"] += len(result.segments)
            totals["oracle_calls"] += result.oracle_calls
            totals["unknown"] += sum(1 for a in result.assignments if a.label is None)
            for key, value in result.provenance_counts().items():
                provenance_totals[key] = provenance_totals.get(key, 0) + value
        manifest.data["counts"] = {**totals, "provenance": dict(sorted(provenance_totals.items()))}
        manifest.data["episodes"] = episodes
        manifest.lap("write")
        manifest.finish()
        print(
            f"assign: {totals['final_segments']} segments labeled "
            f"({totals['unknown']} unknown, {totals['oracle_calls']} oracle calls)"
        )
        return 0
    except CastlinesError as exc:
        manifest.finish(error=str(exc))
        raise


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------


def _merged_eval_inputs(rows: list[cio.AssignmentRow], reference: cio.ReferenceAnnotation):
    """Shift each episode onto a disjoint stretch of one global timeline."""
    episodes = sorted({row.episode for row in rows})
    ref_has_episode = any(e.episode is not None for e in reference.entries)
    if len(episodes) > 1 and not ref_has_episode:
        raise ValidationError("reference must carry episodes (RTTM) when scoring multiple episodes")
    offset = 0.0
    hyp_turns = []
    ref_turns = []
    assignments = []
    intervals = {}
    for episode in episodes:
        ep_rows = [r for r in rows if r.episode == episode]
        ep_ref = [e for e in reference.entries if e.episode in (None, episode)]
        if not ep_ref:
            raise ValidationError(f"reference has no entries for episode {episode!r}")
        span = max(
            max(r.interval.end for r in ep_rows),
            max(e.interval.end for e in ep_ref),
        )
        for r in ep_rows:
            interval = TimeInterval(r.interval.start + offset, r.interval.end + offset)
            intervals[r.assignment.segment_id] = interval
            assignments.append(r.assignment)
            for label in r.assignment.labels:
                hyp_turns.append((interval, label))
        for e in ep_ref:
            ref_turns.append(
                (TimeInterval(e.interval.start + offset, e.interval.end + offset), e.speaker)
            )
        offset += span + 100.0
    return assignments, intervals, hyp_turns, ref_turns


def cmd_eval(args) -> int:
    cast = cio.load_cast(args.cast)
    rows = cio.load_assignments(args.assignments)
    if args.episode:
        rows = [r for r in rows if r.episode == args.episode]
    if not rows:
        raise ValidationError("no assignments to score")
    reference = cio.load_reference(args.reference).resolved(cast, permissive=True)
    if args.episode:
        reference = reference.for_episode(args.episode)
    config = _config_from_args(args)
    collar = args.collar if args.collar is not None else config.der_collar_seconds

    assignments, intervals, hyp_turns, ref_turns = _merged_eval_inputs(rows, reference)
    der = compute_der(ref_turns, hyp_turns, collar=collar, mode=args.der_mode)
    cder = compute_cder(ref_turns, hyp_turns)

    # recognition_report wants segment records; rebuild minimal ones on
    # the merged timeline.
    segments = [
        SegmentRecord(
            id=a.segment_id,
            episode="merged",
            interval=intervals[a.segment_id],
            text="",
            words=(),
            ordinal=i,
        )
        for i, a in enumerate(assignments)
    ]
    ref_annotation = cio.ReferenceAnnotation(
        entries=tuple(
            cio.ReferenceEntry(interval=iv, speaker=spk) for iv, spk in ref_turns
        )
    )
    report = recognition_report(ref_annotation, assignments, segments, cast)

    metrics = {
        "der": {
            "der": der.der,
            "miss_s": der.miss,
            "false_alarm_s": der.false_alarm,
            "speaker_error_s": der.speaker_error,
            "scored_speech_s": der.scored_speech,
            "collar_s": collar,
            "mode": args.der_mode,
        },
        "cder_op": cder,
        "recognition": {
            "accuracy": report.accuracy,
            "precision": report.precision,
            "recall": report.recall,
            "precision_main": report.precision_main,
            "recall_main": report.recall_main,
            "unknown_rate": report.unknown_rate,
        },
        "confusion": report.confusion,
    }
    _dump_json(metrics, Path(args.out))
    print(
        f"eval: DER {der.der:.4f}  CDER(op) {cder:.4f}  "
        f"Acc {report.accuracy:.4f}  Prec {report.precision:.4f}  Rec {report.recall:.4f}"
    )
    return 0


# ---------------------------------------------------------------------------
# tune
# ---------------------------------------------------------------------------


def _parse_grid(spec: str) -> list[float]:
    try:
        grid = [float(x) for x in spec.split(",") if x.strip() != ""]
    except ValueError as exc:
        raise ValidationError(f"bad grid {spec!r}: values must be numbers") from exc
    if not grid:
        raise ValidationError("grid must contain at least one threshold")
    return grid


def cmd_tune(args) -> int:
    config = _config_from_args(args)
    grid = _parse_grid(args.grid)
    bundles = _load_bundles(args)
    for bundle in bundles:
        if bundle.reference is None or not len(bundle.reference):
            raise ValidationError(f"episode {bundle.episode!r} has no reference annotation")
    pairs = cio.load_exemplar_labels(args.exemplars)
    ratio = config.high_confidence_threshold / config.assign_threshold

    results = []
    for threshold in grid:
        trial = config.replace(
            assign_threshold=threshold, high_confidence_threshold=threshold * ratio
        )
        correct = 0
        matched = 0
        for bundle in bundles:
            known = {s.id for s in bundle.segments}
            exemplars = exemplars_from_labels(
                [(sid, char) for sid, char in pairs if sid in known], bundle
            )
            stage2 = run_stage2(bundle, exemplars, trial, oracle=None, use_llm=False)
            report = recognition_report(
                bundle.reference, stage2.assignments, stage2.segments, bundle.cast
            )
            total = sum(sum(row.values()) for row in report.confusion.values())
            diag = sum(report.confusion.get(name, {}).get(name, 0) for name in report.confusion)
            correct += diag
            matched += total
        accuracy = correct / matched if matched else 0.0
        results.append({"assign_threshold": threshold, "high_confidence_threshold": threshold * ratio, "accuracy": accuracy})

    best = max(results, key=lambda r: (r["accuracy"], -r["assign_threshold"]))
    out = {"best": best, "grid": results}
    _dump_json(out, Path(args.out))
    print(
        f"tune: best D={best['assign_threshold']} D_high={best['high_confidence_threshold']} "
        f"accuracy={best['accuracy']:.4f}"
    )
    return 0


# ---------------------------------------------------------------------------
# curve
# ---------------------------------------------------------------------------


def cmd_curve(args) -> int:
    config = _config_from_args(args)
    grid = _parse_grid(args.grid)
    bundles = _load_bundles(args)
    if len(bundles) != 1:
        raise ValidationError("curve expects exactly one episode; use --episode")
    bundle = bundles[0]
    pairs = cio.load_exemplar_labels(args.exemplars)
    known = {s.id for s in bundle.segments}
    exemplars = exemplars_from_labels([(sid, char) for sid, char in pairs if sid in known], bundle)
    points = precision_pocs_sweep(bundle, exemplars, config, grid, mode=args.mode)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(curve_csv(points))
    print(f"curve: wrote {len(points)} points to {out}")
    return 0


# ---------------------------------------------------------------------------
# validate
# ---------------------------------------------------------------------------

_KIND_HINTS = (
    ("segments", "segments"),
    ("embedding", "embeddings"),
    ("visual", "visual"),
    ("overlap", "overlap"),
    ("cast", "cast"),
    ("exemplar", "exemplars"),
    ("assignment", "assignments"),
    ("stub", "stub"),
    ("reference", "reference"),
    ("config", "config"),
)


def _infer_kind(path: str) -> str:
    name = Path(path).name.lower()
    if name.endswith(".rttm"):
        return "reference"
    for hint, kind in _KIND_HINTS:
        if hint in name:
            return kind
    raise ValidationError(f"cannot infer file kind from {path!r}; pass --kind")


def _validate_one(path: str, kind: str, cast, dim) -> str:
    if kind == "segments":
        records = cio.load_segments(path)
    elif kind == "embeddings":
        records = cio.load_embeddings(path, expected_dim=dim)
    elif kind == "visual":
        records = cio.load_visual(path, cast=cast)
    elif kind == "overlap":
        records = [iv for sets in cio.load_overlap(path).values() for iv in sets]
    elif kind == "cast":
        records = cio.load_cast(path).characters
    elif kind == "reference":
        records = cio.load_reference(path).entries
    elif kind == "exemplars":
        records = cio.load_exemplar_labels(path)
        if cast is not None:
            for _, character in records:
                if character not in cast:
                    raise ValidationError(f"{path}: exemplar character {character!r} not in cast")
    elif kind == "assignments":
        records = cio.load_assignments(path)
    elif kind == "stub":
        records = cio.load_stub(path)
    elif kind == "config":
        cio.load_config(path)
        records = [1]
    else:
        raise ValidationError(f"unknown kind {kind!r}")
    return f"OK {path} ({kind}, {len(records)} records)"


def cmd_validate(args) -> int:
    cast = cio.load_cast(args.cast) if args.cast else None
    for path in args.paths:
        kind = args.kind or _infer_kind(path)
        print(_validate_one(path, kind, cast, args.embedding_dim))
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="castlines",
        description="Character-aware subtitling: exemplar mining, speaker assignment, scoring.",
    )
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-exemplars", help="mine labeled audio exemplars (stage 1)")
    _add_bundle_args(p)
    _add_config_args(p)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_build_exemplars)

    p = sub.add_parser("assign", help="assign speakers to every segment (stage 2)")
    _add_bundle_args(p)
    _add_config_args(p)
    p.add_argument("--exemplars", required=True, help="exemplars.jsonl from build-exemplars")
    p.add_argument("--oracle", default="off", help="off, stub:PATH, or http (env CASTLINES_ORACLE_URL)")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_assign)

    p = sub.add_parser("eval", help="score assignments against a reference")
    p.add_argument("--reference", required=True)
    p.add_argument("--assignments", required=True)
    p.add_argument("--cast", required=True)
    p.add_argument("--episode", default=None)
    p.add_argument("--collar", type=float, default=None)
    p.add_argument("--der-mode", choices=("identification", "optimal"), default="identification")
    p.add_argument("--out", required=True, help="metrics.json path")
    _add_config_args(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("tune", help="grid-search the assignment threshold on validation data")
    _add_bundle_args(p, reference=True)
    _add_config_args(p)
    p.add_argument("--exemplars", required=True)
    p.add_argument("--grid", required=True, help="comma-separated thresholds, e.g. 0.3,0.5,0.7")
    p.add_argument("--out", required=True, help="tune.json path")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("curve", help="precision vs proportion-of-classified sweep")
    _add_bundle_args(p, reference=True)
    _add_config_args(p)
    p.add_argument("--exemplars", required=True)
    p.add_argument("--grid", required=True)
    p.add_argument("--mode", choices=("cascade", "forced"), default="cascade")
    p.add_argument("--out", required=True, help="curve.csv path")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_curve)

    p = sub.add_parser("validate", help="schema-check data files")
    p.add_argument("paths", nargs="+")
    p.add_argument("--kind", default=None, choices=tuple(k for _, k in _KIND_HINTS))
    p.add_argument("--cast", default=None, help="cast.json for cross-checks")
    p.add_argument("--embedding-dim", type=int, default=None)
    p.set_defaults(func=cmd_validate)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except OracleError as exc:
        logger.error("oracle failure: %s", exc)
        return exc.exit_code
    except CastlinesError as exc:
        logger.error("%s", exc)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
