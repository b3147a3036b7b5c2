import json

import httpx
import pytest

from src.domain.models.errors import IdMismatchError, InvalidArgumentError
from src.infrastructure.dataset_store import save_image
from src.use_cases.benchmark_ingest import ingest_external_benchmark, write_pairs_manifest
from src.use_cases.evaluation_runner import (
    MIXED_HASH,
    EvaluationRunner,
    load_ground_truth,
    load_predictions,
)

from .conftest import textured_image


class EchoRecognizer:
    name = "echo"

    def transcribe(self, image):
        return "the quick brown fox"


def predict_perfectly(gt_dir, out, hashes=None):
    """Writes each relit ground-truth page as its own prediction."""
    truth = load_ground_truth(gt_dir)
    out.mkdir(parents=True, exist_ok=True)
    for index, sample_id in enumerate(sorted(truth.images)):
        save_image(truth.image(sample_id), out / f"{sample_id}.png")
        if hashes:
            meta = {"config_hash": hashes[index % len(hashes)]}
            (out / f"{sample_id}.json").write_text(json.dumps(meta))
    return out


def test_ground_truth_from_dataset(dataset_dir, small_records):
    truth = load_ground_truth(dataset_dir)
    assert sorted(truth.images) == sorted(r.id for r in small_records)
    assert truth.source == "dataset"
    assert truth.config_hash == "c0ffee00c0ffee00"
    record = small_records[0]
    assert truth.domains[record.id] == record.domains.as_dict()


def test_perfect_predictions(tmp_path, tiny_config, dataset_dir):
    pred = predict_perfectly(dataset_dir, tmp_path / "pred", hashes=["feedfacefeedface"])
    runner = EvaluationRunner(tiny_config, recognizer=EchoRecognizer())
    result = runner.run(pred, dataset_dir, tmp_path / "report", progress=False)

    report = result.report
    assert report.overall.count == 6
    assert report.overall.means["ms_ssim"] == pytest.approx(1.0, abs=1e-2)
    for metrics in report.per_sample.values():
        assert metrics.ld is not None and metrics.ld < 0.25
        assert metrics.ed == 0.0 and metrics.cer == 0.0
    assert report.meta.config_hash == "feedfacefeedface"
    assert report.meta.extra["gt_config_hash"] == "c0ffee00c0ffee00"
    assert report.meta.extra["text_backend"] == "echo"

    assert result.report_json.is_file() and result.report_csv.is_file()
    assert sorted(p.name for p in result.plots) == ["angle.png", "layout.png", "lighting.png", "warp_kind.png"]
    assert json.loads(result.report_json.read_text())["overall"]["count"] == 6


def test_missing_ground_truth_file_is_a_mismatch(tmp_path, tiny_config, dataset_dir):
    pred = predict_perfectly(dataset_dir, tmp_path / "pred")
    removed = sorted(load_predictions(pred))[2]
    (pred / f"{removed}.png").unlink()
    save_image(textured_image(size=64), pred / "stray.png")
    with pytest.raises(IdMismatchError) as err:
        EvaluationRunner(tiny_config).evaluate(pred, dataset_dir, progress=False)
    assert err.value.missing_pred == [removed]
    assert err.value.missing_gt == ["stray"]


def test_mixed_configs_need_permission(tmp_path, tiny_config, dataset_dir):
    pred = predict_perfectly(dataset_dir, tmp_path / "pred", hashes=["aaaa", "bbbb"])
    with pytest.raises(InvalidArgumentError, match="allow-mixed"):
        EvaluationRunner(tiny_config).evaluate(pred, dataset_dir, progress=False)
    report = EvaluationRunner(tiny_config, allow_mixed=True).evaluate(pred, dataset_dir, progress=False)
    assert report.meta.config_hash == MIXED_HASH


def test_domain_index_overrides_ground_truth_tags(tmp_path, tiny_config, dataset_dir):
    pred = predict_perfectly(dataset_dir, tmp_path / "pred")
    index = {sample_id: {"layout": "complex", "lighting": "dim", "angle": "frontal", "warp_kind": "fold"}
             for sample_id in load_predictions(pred)}
    domains = tmp_path / "domains.json"
    domains.write_text(json.dumps(index))
    report = EvaluationRunner(tiny_config).evaluate(pred, dataset_dir, domains=domains, progress=False)
    assert [row.group["layout"] for row in report.marginals["layout"]] == ["complex"]
    assert report.overall.counts["ed"] == 0


def test_mock_ocr_scores_identical_transcripts(tmp_path, tiny_config, dataset_dir):
    calls = []

    def handler(request):
        calls.append(request.url.path)
        return httpx.Response(200, json={"text": "same words"})

    config = tiny_config.model_copy(update={"eval": tiny_config.eval.model_copy(update={
        "ocr": tiny_config.eval.ocr.model_copy(update={"endpoint": "http://ocr.test/v1"}),
    })})
    pred = predict_perfectly(dataset_dir, tmp_path / "pred")
    runner = EvaluationRunner(config, ocr_transport=httpx.MockTransport(handler))
    report = runner.evaluate(pred, dataset_dir, progress=False)
    assert len(calls) == 12
    assert report.overall.means["mmed"] == 0.0
    assert report.overall.means["mmcer"] == 0.0
    assert report.meta.ocr_backend == "http://ocr.test/v1"


def test_manifest_ground_truth(tmp_path, tiny_config):
    root = tmp_path / "bench"
    for name in ("1", "2"):
        (root / "dist").mkdir(parents=True, exist_ok=True)
        (root / "gt").mkdir(parents=True, exist_ok=True)
        save_image(textured_image(size=64, seed=int(name), channels=3), root / "dist" / f"{name}.png")
        save_image(textured_image(size=64, seed=int(name), channels=3), root / "gt" / f"{name}.png")
    manifest = write_pairs_manifest(ingest_external_benchmark(root, "dir300_style"), tmp_path / "pairs.json")

    truth = load_ground_truth(manifest)
    assert truth.source == "manifest:dir300_style"
    assert truth.domains["1"]["layout"] == "unknown"

    report = EvaluationRunner(tiny_config).evaluate(root / "gt", manifest, progress=False)
    assert report.overall.means["ms_ssim"] == pytest.approx(1.0)
    assert [row.group["layout"] for row in report.marginals["layout"]] == ["unknown"]


def test_bad_locations(tmp_path):
    with pytest.raises(InvalidArgumentError):
        load_ground_truth(tmp_path)
    with pytest.raises(InvalidArgumentError):
        load_predictions(tmp_path / "absent")
