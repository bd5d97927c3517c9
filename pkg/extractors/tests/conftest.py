import subprocess
import sys
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parent.parent
MEDIA = ROOT / "media"
GALLERY = ROOT / "gallery"


def _ensure_media():
    if not (MEDIA / "sample.wav").exists() or not (MEDIA / "sample.avi").exists():
        subprocess.run(
            [sys.executable, str(ROOT / "tools" / "make_sample_media.py")],
            check=True,
            cwd=ROOT,
        )


@pytest.fixture(scope="session")
def media_dir() -> Path:
    _ensure_media()
    return MEDIA


@pytest.fixture(scope="session")
def gallery_dir() -> Path:
    _ensure_media()
    return GALLERY


@pytest.fixture(scope="session")
def extracted(media_dir, gallery_dir, tmp_path_factory) -> Path:
    """Run the whole extraction chain once; tests share the outputs."""
    from castlines_extractors.cli import main

    out = tmp_path_factory.mktemp("extracted")
    assert main(["transcript", "--media", str(media_dir / "sample.wav"), "--out-dir", str(out)]) == 0
    assert (
        main(
            [
                "embeddings",
                "--media", str(media_dir / "sample.wav"),
                "--segments", str(out / "segments.jsonl"),
                "--out-dir", str(out),
            ]
        )
        == 0
    )
    assert (
        main(
            [
                "visual",
                "--media", str(media_dir / "sample.avi"),
                "--audio", str(media_dir / "sample.wav"),
                "--segments", str(out / "segments.jsonl"),
                "--gallery", str(gallery_dir),
                "--cast", str(media_dir / "cast.json"),
                "--out-dir", str(out),
            ]
        )
        == 0
    )
    assert main(["overlap", "--media", str(media_dir / "sample.wav"), "--out-dir", str(out)]) == 0
    assert (
        main(
            [
                "convert-reference",
                "--input", str(media_dir / "native_annotation.csv"),
                "--cast", str(media_dir / "cast.json"),
                "--out-dir", str(out),
            ]
        )
        == 0
    )
    return out


def engine_validate(*args) -> subprocess.CompletedProcess:
    """Invoke the engine's validate subcommand (the external interface)."""
    return subprocess.run(
        [sys.executable, "-m", "castlines.cli", "validate", *map(str, args)],
        capture_output=True,
        text=True,
    )
