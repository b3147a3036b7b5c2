import json

import pytest
from click.testing import CliRunner

from src.app import cli
from src.infrastructure.mapping_codec import read_mapping

from .conftest import put_image as put


def invoke(*args):
    return CliRunner().invoke(cli, ["--log-level", "WARNING", *[str(a) for a in args]])


def tree_bytes(root):
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


@pytest.fixture
def config_file(tmp_path, tiny_config):
    path = tmp_path / "tiny.json"
    path.write_text(json.dumps(tiny_config.model_dump(mode="json")))
    return path


def test_version():
    result = invoke("--version")
    assert result.exit_code == 0
    assert "1.0.0" in result.output


def test_synth_rejects_zero_count(tmp_path):
    result = invoke("synth", "--out", tmp_path / "d", "--count", 0, "--no-progress")
    assert result.exit_code == 2


def test_synth_is_byte_reproducible(tmp_path):
    args = ["--count", 3, "--size", 64, "--latent", 8, "--seed", 1, "--no-progress"]
    assert invoke("synth", "--out", tmp_path / "a", *args).exit_code == 0
    assert invoke("synth", "--out", tmp_path / "b", *args).exit_code == 0
    first, second = tree_bytes(tmp_path / "a"), tree_bytes(tmp_path / "b")
    assert first == second
    assert len(json.loads(first["index.json"])["ids"]) == 3


def test_synth_refuses_non_empty_output(tmp_path):
    out = tmp_path / "taken"
    out.mkdir()
    (out / "keep.txt").write_text("mine")
    args = ["synth", "--out", out, "--count", 1, "--size", 64, "--latent", 8, "--no-progress"]
    assert invoke(*args).exit_code == 2
    assert (out / "keep.txt").exists()
    assert invoke(*args, "--force").exit_code == 0
    assert not (out / "keep.txt").exists()


def test_ingest(tmp_path):
    root = tmp_path / "bench"
    for name in ("1_1", "1_2", "2_1", "2_2"):
        put(root / "crop" / f"{name}.png")
    for page in ("1", "2"):
        put(root / "scan" / f"{page}.png")
    result = invoke("ingest", "--dir", root, "--out", tmp_path / "pairs.json")
    assert result.exit_code == 0, result.output
    assert len(json.loads((tmp_path / "pairs.json").read_text())["pairs"]) == 4

    put(root / "crop" / "9_1.png")
    result = invoke("ingest", "--dir", root, "--out", tmp_path / "pairs2.json")
    assert result.exit_code == 3
    assert "9_1.png" in result.output


def test_eval_id_mismatch_exit_code(tmp_path, config_file):
    data = tmp_path / "data"
    assert invoke("synth", "--out", data, "--config", config_file, "--count", 2, "--no-progress").exit_code == 0
    pred = tmp_path / "pred"
    pred.mkdir()
    put(pred / "00000.png")
    result = invoke("eval", "--pred", pred, "--gt", data, "--report-out", tmp_path / "r",
                    "--config", config_file, "--no-progress")
    assert result.exit_code == 3
    assert "00001" in result.output


def test_dewarp_missing_checkpoint(tmp_path):
    photos = tmp_path / "photos"
    photos.mkdir()
    result = invoke("dewarp", "--ckpt", tmp_path / "none.ckpt", "--input", photos, "--output", tmp_path / "o")
    assert result.exit_code == 3


def test_train_dewarp_eval(tmp_path, config_file):
    data, ckpt = tmp_path / "data", tmp_path / "model.ckpt"
    assert invoke("synth", "--out", data, "--config", config_file, "--no-progress").exit_code == 0

    result = invoke("train", "--data", data, "--ckpt-out", ckpt, "--config", config_file, "--no-progress")
    assert result.exit_code == 0, result.output
    rows = (tmp_path / "model.train.jsonl").read_text().splitlines()
    updates = [json.loads(row)["update"] for row in rows]
    assert updates == sorted(set(updates)) and updates[-1] == 2

    outputs = []
    for name in ("o1", "o2"):
        result = invoke("dewarp", "--ckpt", ckpt, "--input", data, "--output", tmp_path / name, "--no-progress")
        assert result.exit_code == 0, result.output
        outputs.append(tmp_path / name)
    mappings = sorted(outputs[0].glob("*.dvdm"))
    assert len(mappings) == 6
    for path in mappings:
        assert path.read_bytes() == (outputs[1] / path.name).read_bytes()
        assert read_mapping(path).coords.shape == (64, 64, 2)

    result = invoke("eval", "--pred", outputs[0], "--gt", data, "--report-out", tmp_path / "report",
                    "--config", config_file, "--no-progress")
    assert result.exit_code == 0, result.output
    report = json.loads((tmp_path / "report" / "report.json").read_text())
    assert report["overall"]["count"] == 6
    assert (tmp_path / "report" / "plots" / "layout.png").is_file()


def test_dewarp_single_image(tmp_path, config_file):
    data, ckpt = tmp_path / "data", tmp_path / "model.ckpt"
    assert invoke("synth", "--out", data, "--config", config_file, "--count", 2, "--no-progress").exit_code == 0
    assert invoke("train", "--data", data, "--ckpt-out", ckpt, "--config", config_file,
                  "--updates", 1, "--no-progress").exit_code == 0
    photo = tmp_path / "photo.png"
    put(photo)
    result = invoke("dewarp", "--ckpt", ckpt, "--input", photo, "--output", tmp_path / "out",
                    "--steps", 1, "--single", "--no-progress")
    assert result.exit_code == 0, result.output
    meta = json.loads((tmp_path / "out" / "photo.json").read_text())
    assert meta["steps"] == 1 and meta["dual_hypothesis"] is False
