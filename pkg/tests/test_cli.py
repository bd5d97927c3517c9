import json
import shutil

from castlines.cli import main

FIXTURE_FILES = [
    "segments.jsonl",
    "embeddings.jsonl",
    "visual.jsonl",
    "overlap.jsonl",
    "cast.json",
    "reference.jsonl",
    "stub.jsonl",
    "config.json",
]


def fixture_args(fixture_dir, *, visual=True, overlap=True, reference=False):
    args = [
        "--segments", str(fixture_dir / "segments.jsonl"),
        "--embeddings", str(fixture_dir / "embeddings.jsonl"),
        "--cast", str(fixture_dir / "cast.json"),
        "--config", str(fixture_dir / "config.json"),
    ]
    if visual:
        args += ["--visual", str(fixture_dir / "visual.jsonl")]
    if overlap:
        args += ["--overlap", str(fixture_dir / "overlap.jsonl")]
    if reference:
        args += ["--reference", str(fixture_dir / "reference.jsonl")]
    return args


def run_build(fixture_dir, out_dir, **kw):
    return main(["build-exemplars", *fixture_args(fixture_dir, **kw), "--out-dir", str(out_dir)])


def run_assign(fixture_dir, out_dir, exemplars, oracle):
    return main(
        [
            "assign",
            *fixture_args(fixture_dir),
            "--exemplars", str(exemplars),
            "--oracle", oracle,
            "--out-dir", str(out_dir),
        ]
    )


class TestBuildExemplars:
    def test_fixture_counts(self, fixture_dir, tmp_path):
        assert run_build(fixture_dir, tmp_path) == 0
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        counts = manifest["counts"]
        assert (counts["segments"], counts["av_recognised"], counts["exemplars"]) == (20, 11, 7)
        assert manifest["status"] == "ok"
        assert manifest["inputs"]  # digests recorded

    def test_yield_ordering(self, fixture_dir, tmp_path):
        run_build(fixture_dir, tmp_path)
        counts = json.loads((tmp_path / "manifest.json").read_text())["counts"]
        assert counts["exemplars"] <= counts["av_recognised"] <= counts["segments"]

    def test_no_visual_means_zero_exemplars_exit_zero(self, fixture_dir, tmp_path):
        assert run_build(fixture_dir, tmp_path, visual=False) == 0
        assert (tmp_path / "exemplars.jsonl").read_text() == ""
        counts = json.loads((tmp_path / "manifest.json").read_text())["counts"]
        assert counts["exemplars"] == 0

    def test_corrupt_embeddings_exit_2_no_partial_output(self, fixture_dir, tmp_path):
        broken_dir = tmp_path / "inputs"
        broken_dir.mkdir()
        for name in FIXTURE_FILES:
            shutil.copy(fixture_dir / name, broken_dir / name)
        with open(broken_dir / "embeddings.jsonl", "a") as fh:
            fh.write("{not json\n")
        out = tmp_path / "out"
        assert run_build(broken_dir, out) == 2
        assert not (out / "exemplars.jsonl").exists()
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["status"] == "error"


class TestAssign:
    def test_byte_identical_runs(self, fixture_dir, tmp_path):
        run_build(fixture_dir, tmp_path / "stage1")
        exemplars = tmp_path / "stage1" / "exemplars.jsonl"
        oracle = f"stub:{fixture_dir / 'stub.jsonl'}"
        assert run_assign(fixture_dir, tmp_path / "a", exemplars, oracle) == 0
        assert run_assign(fixture_dir, tmp_path / "b", exemplars, oracle) == 0
        for name in ("assignments.jsonl", "subtitles.srt"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_unknown_oracle_mode_rejected(self, fixture_dir, tmp_path):
        run_build(fixture_dir, tmp_path / "stage1")
        rc = run_assign(fixture_dir, tmp_path / "out", tmp_path / "stage1" / "exemplars.jsonl", "psychic")
        assert rc == 2

    def test_http_oracle_without_url_exits_3(self, fixture_dir, tmp_path, monkeypatch):
        monkeypatch.delenv("CASTLINES_ORACLE_URL", raising=False)
        run_build(fixture_dir, tmp_path / "stage1")
        rc = run_assign(fixture_dir, tmp_path / "out", tmp_path / "stage1" / "exemplars.jsonl", "http")
        assert rc == 3

    def test_unreachable_oracle_tolerated_exit_0(self, fixture_dir, tmp_path, monkeypatch):
        # Transport exhaustion downgrades segments to UNRESOLVED; the
        # pipeline itself succeeds.
        monkeypatch.setenv("CASTLINES_ORACLE_URL", "http://127.0.0.1:9/v1/chat")
        monkeypatch.setenv("CASTLINES_ORACLE_BACKOFF", "0.0")
        run_build(fixture_dir, tmp_path / "stage1")
        rc = run_assign(fixture_dir, tmp_path / "out", tmp_path / "stage1" / "exemplars.jsonl", "http")
        assert rc == 0
        rows = [json.loads(l) for l in (tmp_path / "out" / "assignments.jsonl").read_text().splitlines()]
        unresolved = [r for r in rows if r["provenance"] == "UNRESOLVED"]
        assert len(unresolved) >= 1


class TestGolden:
    def test_end_to_end_reproduces_golden_bytes(self, fixture_dir, golden_dir, tmp_path):
        run_build(fixture_dir, tmp_path)
        assert (tmp_path / "exemplars.jsonl").read_bytes() == (golden_dir / "exemplars.jsonl").read_bytes()
        oracle = f"stub:{fixture_dir / 'stub.jsonl'}"
        run_assign(fixture_dir, tmp_path, tmp_path / "exemplars.jsonl", oracle)
        for name in ("assignments.jsonl", "subtitles.srt"):
            assert (tmp_path / name).read_bytes() == (golden_dir / name).read_bytes()
        rc = main(
            [
                "eval",
                "--reference", str(fixture_dir / "reference.jsonl"),
                "--assignments", str(tmp_path / "assignments.jsonl"),
                "--cast", str(fixture_dir / "cast.json"),
                "--config", str(fixture_dir / "config.json"),
                "--out", str(tmp_path / "metrics.json"),
            ]
        )
        assert rc == 0
        assert (tmp_path / "metrics.json").read_bytes() == (golden_dir / "metrics.json").read_bytes()


class TestTune:
    def test_grid_selects_middle_point(self, fixture_dir, golden_dir, tmp_path):
        run_build(fixture_dir, tmp_path)
        rc = main(
            [
                "tune",
                *fixture_args(fixture_dir, reference=True),
                "--exemplars", str(tmp_path / "exemplars.jsonl"),
                "--grid", "0.3,0.5,0.7",
                "--out", str(tmp_path / "tune.json"),
            ]
        )
        assert rc == 0
        result = json.loads((tmp_path / "tune.json").read_text())
        assert result["best"]["assign_threshold"] == 0.5
        assert result["best"]["high_confidence_threshold"] == 0.25
        accs = [row["accuracy"] for row in result["grid"]]
        assert accs[0] < accs[1] == accs[2]  # tie broken toward smaller D
        assert (tmp_path / "tune.json").read_bytes() == (golden_dir / "tune.json").read_bytes()

    def test_single_point_grid(self, fixture_dir, tmp_path):
        run_build(fixture_dir, tmp_path)
        rc = main(
            [
                "tune",
                *fixture_args(fixture_dir, reference=True),
                "--exemplars", str(tmp_path / "exemplars.jsonl"),
                "--grid", "0.4",
                "--out", str(tmp_path / "tune.json"),
            ]
        )
        assert rc == 0
        assert json.loads((tmp_path / "tune.json").read_text())["best"]["assign_threshold"] == 0.4

    def test_empty_grid_usage_error(self, fixture_dir, tmp_path):
        run_build(fixture_dir, tmp_path)
        rc = main(
            [
                "tune",
                *fixture_args(fixture_dir, reference=True),
                "--exemplars", str(tmp_path / "exemplars.jsonl"),
                "--grid", "",
                "--out", str(tmp_path / "tune.json"),
            ]
        )
        assert rc == 2


class TestCurve:
    def test_writes_csv(self, fixture_dir, tmp_path):
        run_build(fixture_dir, tmp_path)
        rc = main(
            [
                "curve",
                *fixture_args(fixture_dir, reference=True),
                "--exemplars", str(tmp_path / "exemplars.jsonl"),
                "--grid", "0.0,0.5,2.0",
                "--out", str(tmp_path / "curve.csv"),
            ]
        )
        assert rc == 0
        lines = (tmp_path / "curve.csv").read_text().strip().split("\n")
        assert lines[0] == "stratum,D,precision,pocs"
        assert len(lines) == 1 + 3 * 3


class TestValidate:
    def test_all_fixture_files_pass(self, fixture_dir):
        paths = [str(fixture_dir / name) for name in FIXTURE_FILES]
        rc = main(["validate", *paths, "--cast", str(fixture_dir / "cast.json")])
        assert rc == 0

    def test_golden_outputs_pass(self, golden_dir, fixture_dir):
        rc = main(
            [
                "validate",
                str(golden_dir / "exemplars.jsonl"),
                str(golden_dir / "assignments.jsonl"),
                "--cast", str(fixture_dir / "cast.json"),
            ]
        )
        assert rc == 0

    def test_broken_file_exit_2(self, tmp_path):
        bad = tmp_path / "segments.jsonl"
        bad.write_text('{"id": "x"}\n')
        assert main(["validate", str(bad)]) == 2

    def test_unknown_kind_exit_2(self, tmp_path):
        mystery = tmp_path / "mystery.dat"
        mystery.write_text("")
        assert main(["validate", str(mystery)]) == 2

    def test_rttm_kind_inferred(self, tmp_path):
        rttm = tmp_path / "episode.rttm"
        rttm.write_text("SPEAKER ep 1 0.0 2.0 <NA> <NA> A <NA> <NA>\n")
        assert main(["validate", str(rttm)]) == 0


class TestEpisodeFilter:
    def test_unknown_episode_rejected(self, fixture_dir, tmp_path):
        rc = main(
            [
                "build-exemplars",
                *fixture_args(fixture_dir),
                "--episode", "nope",
                "--out-dir", str(tmp_path),
            ]
        )
        assert rc == 2

    def test_named_episode_accepted(self, fixture_dir, tmp_path):
        rc = main(
            [
                "build-exemplars",
                *fixture_args(fixture_dir),
                "--episode", "frasier-s01e01",
                "--out-dir", str(tmp_path),
            ]
        )
        assert rc == 0


class TestExitCodeOne:
    def test_undefined_metric_exits_1(self, fixture_dir, tmp_path):
        # A reference whose only entry is swallowed whole by the collar
        # leaves no scored speech: the metric is undefined.
        run_build(fixture_dir, tmp_path)
        oracle = f"stub:{fixture_dir / 'stub.jsonl'}"
        run_assign(fixture_dir, tmp_path, tmp_path / "exemplars.jsonl", oracle)
        tiny_ref = tmp_path / "reference.jsonl"
        tiny_ref.write_text('{"start_s": 0.1, "end_s": 0.2, "speaker": "Frasier"}\n')
        rc = main(
            [
                "eval",
                "--reference", str(tiny_ref),
                "--assignments", str(tmp_path / "assignments.jsonl"),
                "--cast", str(fixture_dir / "cast.json"),
                "--collar", "0.25",
                "--out", str(tmp_path / "metrics.json"),
            ]
        )
        assert rc == 1


class TestMultiEpisode:
    def make_inputs(self, tmp_path):
        segments = []
        embeddings = []
        for ep in ("ep1", "ep2"):
            for k in range(3):
                sid = f"{ep}-s{k}"
                start, end = k * 2.0, k * 2.0 + 1.5
                segments.append(
                    {
                        "id": sid, "episode": ep, "start_s": start, "end_s": end,
                        "text": "hi there",
                        "words": [{"w": "hi", "start_s": start, "end_s": start + 0.5}],
                    }
                )
                embeddings.append({"segment_id": sid, "vector": [1.0, float(k)]})
        seg_path = tmp_path / "segments.jsonl"
        emb_path = tmp_path / "embeddings.jsonl"
        with open(seg_path, "w") as fh:
            fh.writelines(json.dumps(r) + "\n" for r in segments)
        with open(emb_path, "w") as fh:
            fh.writelines(json.dumps(r) + "\n" for r in embeddings)
        cast_path = tmp_path / "cast.json"
        cast_path.write_text(json.dumps({"characters": [{"name": "A"}]}))
        (tmp_path / "exemplars.jsonl").write_text("")
        return seg_path, emb_path, cast_path

    def test_per_episode_output_dirs_with_jobs(self, tmp_path):
        seg, emb, cast = self.make_inputs(tmp_path)
        out = tmp_path / "out"
        rc = main(
            [
                "assign",
                "--segments", str(seg),
                "--embeddings", str(emb),
                "--cast", str(cast),
                "--exemplars", str(tmp_path / "exemplars.jsonl"),
                "--oracle", "off",
                "--jobs", "2",
                "--out-dir", str(out),
            ]
        )
        assert rc == 0
        for ep in ("ep1", "ep2"):
            assert (out / ep / "assignments.jsonl").exists()
            assert (out / ep / "subtitles.srt").exists()
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["episodes"] == ["ep1", "ep2"]
        assert manifest["counts"]["segments"] == 6

    def test_episode_flag_filters(self, tmp_path):
        seg, emb, cast = self.make_inputs(tmp_path)
        out = tmp_path / "only"
        rc = main(
            [
                "assign",
                "--segments", str(seg),
                "--embeddings", str(emb),
                "--cast", str(cast),
                "--exemplars", str(tmp_path / "exemplars.jsonl"),
                "--oracle", "off",
                "--episode", "ep2",
                "--out-dir", str(out),
            ]
        )
        assert rc == 0
        assert (out / "assignments.jsonl").exists()
        rows = [json.loads(l) for l in (out / "assignments.jsonl").read_text().splitlines()]
        assert {r["episode"] for r in rows} == {"ep2"}
