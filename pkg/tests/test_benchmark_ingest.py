import json

import pytest

from src.domain.models.benchmark_models import UNKNOWN_DOMAIN
from src.domain.models.errors import FormatError, InvalidArgumentError
from src.use_cases.benchmark_ingest import (
    ingest_external_benchmark,
    natural_key,
    read_pairs_manifest,
    write_pairs_manifest,
)

from .conftest import put_image as put


@pytest.fixture
def docunet_dir(tmp_path):
    root = tmp_path / "docunet"
    for seed, name in enumerate(["1_1", "1_2", "2_1", "10_1"]):
        put(root / "crop" / f"{name}.png", seed)
    for seed, page in enumerate(["1", "2", "10"]):
        put(root / "scan" / f"{page}.png", seed)
    (root / "crop" / "notes.txt").write_text("ignored")
    return root


def test_docunet_pairs(docunet_dir):
    manifest = ingest_external_benchmark(docunet_dir, "docunet_style")
    assert [p.id for p in manifest.pairs] == ["1_1", "1_2", "2_1", "10_1"]
    by_id = {p.id: p for p in manifest.pairs}
    assert by_id["10_1"].gt.endswith("10.png")
    assert by_id["1_2"].gt == by_id["1_1"].gt
    assert all(value == UNKNOWN_DOMAIN for value in by_id["2_1"].domains.values())


def test_ingest_is_stable(docunet_dir):
    first = ingest_external_benchmark(docunet_dir, "docunet_style")
    second = ingest_external_benchmark(docunet_dir, "docunet_style")
    assert first.model_dump() == second.model_dump()


def test_file_without_partner_is_named(docunet_dir):
    put(docunet_dir / "crop" / "3_1.png")
    put(docunet_dir / "scan" / "7.png")
    with pytest.raises(FormatError) as err:
        ingest_external_benchmark(docunet_dir, "docunet_style")
    assert "3_1.png" in str(err.value)
    assert "7.png" in str(err.value)
    assert "2 files" in str(err.value)


def test_dir300_pairs(tmp_path):
    root = tmp_path / "dir300"
    for name in ("1", "2"):
        put(root / "dist" / f"{name}.jpg")
        put(root / "gt" / f"{name}.png")
    manifest = ingest_external_benchmark(root, "dir300_style")
    assert [p.id for p in manifest.pairs] == ["1", "2"]
    assert manifest.layout == "dir300_style"


def test_missing_subdirectory(tmp_path):
    put(tmp_path / "bench" / "dist" / "1.png")
    with pytest.raises(FormatError) as err:
        ingest_external_benchmark(tmp_path / "bench", "dir300_style")
    assert err.value.path.endswith("gt")


def test_bad_layout_and_directory(tmp_path, docunet_dir):
    with pytest.raises(InvalidArgumentError):
        ingest_external_benchmark(docunet_dir, "uvdoc_style")
    with pytest.raises(InvalidArgumentError):
        ingest_external_benchmark(tmp_path / "nowhere", "docunet_style")


def test_manifest_round_trip(tmp_path, docunet_dir):
    manifest = ingest_external_benchmark(docunet_dir, "docunet_style")
    path = write_pairs_manifest(manifest, tmp_path / "out" / "pairs.json")
    assert read_pairs_manifest(path).model_dump() == manifest.model_dump()


def test_manifest_escape_hatch_resolves_relative_paths(tmp_path):
    put(tmp_path / "shots" / "a.png")
    put(tmp_path / "flat" / "a.png")
    path = tmp_path / "pairs.json"
    path.write_text(json.dumps({
        "layout": "custom",
        "source": "hand-made",
        "pairs": [{"id": "a", "distorted": "shots/a.png", "gt": "flat/a.png",
                   "domains": {"layout": "complex"}}],
    }))
    manifest = ingest_external_benchmark(None, "docunet_style", manifest=path)
    pair = manifest.pairs[0]
    assert pair.distorted == str((tmp_path / "shots" / "a.png").resolve())
    assert pair.domains["layout"] == "complex"
    assert pair.domains["lighting"] == UNKNOWN_DOMAIN


def test_manifest_with_missing_file(tmp_path):
    path = tmp_path / "pairs.json"
    path.write_text(json.dumps({
        "layout": "custom", "source": "x",
        "pairs": [{"id": "a", "distorted": "gone.png", "gt": "gone_too.png"}],
    }))
    with pytest.raises(FormatError, match="gone.png"):
        read_pairs_manifest(path)

    path.write_text("[1, 2")
    with pytest.raises(FormatError):
        read_pairs_manifest(path)


def test_natural_key_orders_numbers():
    assert sorted(["10_1", "2_1", "1_10", "1_2"], key=natural_key) == ["1_2", "1_10", "2_1", "10_1"]
