"""Session fixtures: one fake archive on disk, one full export of it."""

import pytest

from fakearchive import build_archive


@pytest.fixture(scope="session")
def archive_path(tmp_path_factory):
    path = tmp_path_factory.mktemp("archive") / "fake-nb201.pth"
    build_archive(path)
    return path


@pytest.fixture(scope="session")
def exported_all(archive_path, tmp_path_factory):
    """Benchmark file with every epoch column, shared by read-back tests."""
    from nb201_export.export import ExportManifest, export

    out = tmp_path_factory.mktemp("export") / "bench-all.jsonl"
    export(ExportManifest(upstream=str(archive_path), out=str(out)))
    return out
