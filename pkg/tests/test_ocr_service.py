import json

import httpx
import numpy as np
import pytest
import pytesseract

from src.domain.models.errors import InvalidArgumentError, MetricUnavailableError, OcrServiceError
from src.domain.models.mapping_models import DocumentImage
from src.domain.models.run_config import OcrConfig
from src.infrastructure.ocr_service import OCR_PROMPT, OcrClient, encode_png, mllm_ocr_metrics
from src.infrastructure.text_recognizer import TesseractRecognizer, text_metrics

DEWARPED = DocumentImage(np.full((16, 16), 0.25))
FLAT = DocumentImage(np.full((16, 16), 0.75))


def transcript_transport(transcripts, calls):
    """Answers with the transcript registered for the posted image."""
    def handler(request: httpx.Request) -> httpx.Response:
        body = json.loads(request.content)
        calls.append(body)
        return httpx.Response(200, json={"text": transcripts[body["image"]]})
    return httpx.MockTransport(handler)


def status_transport(status, calls):
    def handler(request: httpx.Request) -> httpx.Response:
        calls.append(request)
        return httpx.Response(status, json={"detail": "nope"})
    return httpx.MockTransport(handler)


@pytest.mark.asyncio
async def test_identical_transcripts_score_zero():
    calls = []
    transport = transcript_transport({encode_png(DEWARPED): "hello", encode_png(FLAT): "hello"}, calls)
    async with OcrClient("http://ocr.test/v1", api_key="k", transport=transport) as client:
        result = await mllm_ocr_metrics(DEWARPED, FLAT, client)
    assert (result.mmed, result.mmcer, result.error) == (0.0, 0.0, None)
    assert len(calls) == 2
    assert all(call["prompt"] == OCR_PROMPT for call in calls)


@pytest.mark.asyncio
async def test_one_substitution():
    transport = transcript_transport({encode_png(DEWARPED): "abd", encode_png(FLAT): "abc"}, [])
    async with OcrClient("http://ocr.test/v1", transport=transport) as client:
        result = await mllm_ocr_metrics(DEWARPED, FLAT, client)
    assert result.mmed == 1.0
    assert result.mmcer == pytest.approx(1 / 3)


@pytest.mark.asyncio
async def test_empty_flat_transcript_leaves_mmcer_undefined():
    transport = transcript_transport({encode_png(DEWARPED): "abc", encode_png(FLAT): ""}, [])
    async with OcrClient("http://ocr.test/v1", transport=transport) as client:
        result = await mllm_ocr_metrics(DEWARPED, FLAT, client)
    assert result.mmed == 3.0
    assert result.mmcer is None
    assert "empty" in result.error


@pytest.mark.asyncio
async def test_server_errors_are_retried_then_reported():
    calls = []
    async with OcrClient("http://ocr.test/v1", max_retries=2, backoff_seconds=0.0,
                         transport=status_transport(503, calls)) as client:
        with pytest.raises(OcrServiceError, match="3 attempts"):
            await client.transcribe(FLAT)
    assert len(calls) == 3


@pytest.mark.asyncio
async def test_failed_service_yields_missing_metrics():
    async with OcrClient("http://ocr.test/v1", max_retries=1, backoff_seconds=0.0,
                         transport=status_transport(500, [])) as client:
        result = await mllm_ocr_metrics(DEWARPED, FLAT, client)
    assert result.mmed is None and result.mmcer is None
    assert "HTTP 500" in result.error


@pytest.mark.asyncio
async def test_client_errors_are_not_retried():
    calls = []
    async with OcrClient("http://ocr.test/v1", max_retries=3, backoff_seconds=0.0,
                         transport=status_transport(401, calls)) as client:
        with pytest.raises(OcrServiceError, match="401"):
            await client.transcribe(FLAT)
    assert len(calls) == 1


@pytest.mark.asyncio
async def test_bearer_token_is_sent():
    seen = []

    def handler(request):
        seen.append(request.headers.get("Authorization"))
        return httpx.Response(200, json={"text": "x"})

    client = OcrClient.from_config(OcrConfig(endpoint="http://ocr.test/v1"), api_key="secret",
                                   transport=httpx.MockTransport(handler))
    try:
        assert await client.transcribe(FLAT) == "x"
    finally:
        await client.aclose()
    assert seen == ["Bearer secret"]


@pytest.mark.asyncio
async def test_malformed_response():
    transport = httpx.MockTransport(lambda request: httpx.Response(200, json={"txt": "x"}))
    async with OcrClient("http://ocr.test/v1", transport=transport) as client:
        with pytest.raises(OcrServiceError, match="malformed"):
            await client.transcribe(FLAT)


def test_endpoint_is_required():
    with pytest.raises(InvalidArgumentError):
        OcrClient("")


class FakeRecognizer:
    name = "fake"

    def __init__(self, texts):
        self.texts = texts

    def transcribe(self, image):
        return self.texts[float(image.pixels.mean())]


def test_text_metrics_against_reference():
    recognizer = FakeRecognizer({0.25: "kitten", 0.75: "sitting"})
    ed, cer = text_metrics(recognizer, DEWARPED, FLAT)
    assert ed == 3.0
    assert cer == pytest.approx(3 / 7)

    ed, cer = text_metrics(FakeRecognizer({0.25: "abc", 0.75: ""}), DEWARPED, FLAT)
    assert (ed, cer) == (3.0, None)


def test_missing_tesseract_is_reported(mocker):
    mocker.patch("src.infrastructure.text_recognizer.pytesseract.get_tesseract_version",
                 side_effect=pytesseract.TesseractNotFoundError())
    recognizer = TesseractRecognizer()
    assert recognizer.available() is False
    with pytest.raises(MetricUnavailableError):
        recognizer.transcribe(FLAT)


def test_tesseract_transcript_is_stripped(mocker):
    mocker.patch("src.infrastructure.text_recognizer.pytesseract.get_tesseract_version", return_value="5.3.0")
    image_to_string = mocker.patch("src.infrastructure.text_recognizer.pytesseract.image_to_string",
                                   return_value="  some words \n")
    recognizer = TesseractRecognizer(lang="deu")
    assert recognizer.transcribe(FLAT) == "some words"
    assert image_to_string.call_args.kwargs["lang"] == "deu"
