"""
OCR Service
Async HTTP client for an external MLLM OCR endpoint and the MMED/MMCER
metrics computed from its transcripts.
"""

import asyncio
import base64
import io
import logging
from dataclasses import dataclass
from typing import Optional

import httpx
from tenacity import (
    AsyncRetrying,
    RetryError,
    retry_if_exception_type,
    stop_after_attempt,
    wait_exponential,
)

from ..domain.models.errors import InvalidArgumentError, OcrServiceError
from ..domain.models.mapping_models import DocumentImage
from ..domain.models.run_config import OcrConfig
from .dataset_store import save_image
from .metrics.text_distance import char_error_rate, edit_distance

logger = logging.getLogger(__name__)

OCR_PROMPT = "OCR the plain text"


class _RetryableStatus(Exception):
    def __init__(self, status_code: int):
        super().__init__(f"HTTP {status_code}")
        self.status_code = status_code


def encode_png(image: DocumentImage) -> str:
    buffer = io.BytesIO()
    save_image(image, buffer)
    return base64.b64encode(buffer.getvalue()).decode("ascii")


class OcrClient:
    """
    Posts {image, prompt} to the OCR endpoint and reads back {text}.

    Timeouts, transport errors and 5xx responses are retried with exponential
    backoff; a semaphore bounds the number of requests in flight. One client
    can be shared by concurrent tasks.
    """

    def __init__(self, endpoint: str, api_key: Optional[str] = None,
                 timeout_seconds: float = 30.0, max_concurrency: int = 2,
                 max_retries: int = 2, prompt: str = OCR_PROMPT,
                 backoff_seconds: float = 0.5,
                 transport: Optional[httpx.AsyncBaseTransport] = None):
        if not endpoint:
            raise InvalidArgumentError("OCR endpoint is not configured")
        self.endpoint = endpoint
        self.prompt = prompt
        self.max_retries = max_retries
        self.backoff_seconds = backoff_seconds
        self._semaphore = asyncio.Semaphore(max_concurrency)
        headers = {"Authorization": f"Bearer {api_key}"} if api_key else {}
        self._client = httpx.AsyncClient(timeout=timeout_seconds, headers=headers, transport=transport)
        logger.info(f"OcrClient initialized for {endpoint} (concurrency {max_concurrency}, "
                    f"retries {max_retries})")

    @classmethod
    def from_config(cls, config: OcrConfig, api_key: Optional[str] = None,
                    **kwargs) -> "OcrClient":
        return cls(
            endpoint=config.endpoint,
            api_key=api_key,
            timeout_seconds=config.timeout_seconds,
            max_concurrency=config.max_concurrency,
            max_retries=config.max_retries,
            prompt=config.prompt,
            **kwargs,
        )

    async def __aenter__(self) -> "OcrClient":
        return self

    async def __aexit__(self, *exc) -> None:
        await self.aclose()

    async def aclose(self) -> None:
        await self._client.aclose()

    async def _post_once(self, payload: dict) -> str:
        response = await self._client.post(self.endpoint, json=payload)
        if response.status_code >= 500:
            raise _RetryableStatus(response.status_code)
        if response.status_code >= 400:
            raise OcrServiceError(f"OCR service rejected the request: HTTP {response.status_code}")
        try:
            text = response.json()["text"]
        except (ValueError, KeyError, TypeError) as e:
            raise OcrServiceError(f"malformed OCR response: {e}")
        if not isinstance(text, str):
            raise OcrServiceError("malformed OCR response: text is not a string")
        return text

    async def transcribe(self, image: DocumentImage) -> str:
        """
        Raises:
            OcrServiceError: the request failed after all retries
        """
        payload = {"image": encode_png(image), "prompt": self.prompt}
        retrying = AsyncRetrying(
            stop=stop_after_attempt(self.max_retries + 1),
            wait=wait_exponential(multiplier=self.backoff_seconds, max=10),
            retry=retry_if_exception_type((httpx.TimeoutException, httpx.TransportError, _RetryableStatus)),
            reraise=False,
        )
        async with self._semaphore:
            try:
                async for attempt in retrying:
                    with attempt:
                        return await self._post_once(payload)
            except RetryError as e:
                cause = e.last_attempt.exception()
                logger.error(f"OCR request failed after {self.max_retries + 1} attempts: {cause}")
                raise OcrServiceError(f"OCR request failed after {self.max_retries + 1} attempts: {cause}")


@dataclass
class OcrMetrics:
    """MMED/MMCER of one sample; both None when the service failed."""
    mmed: Optional[float]
    mmcer: Optional[float]
    error: Optional[str] = None


async def mllm_ocr_metrics(dewarped: DocumentImage, flat: DocumentImage,
                           client: OcrClient) -> OcrMetrics:
    """Edit distance and CER of the dewarped transcript against the flat-page transcript."""
    try:
        hyp, ref = await asyncio.gather(client.transcribe(dewarped), client.transcribe(flat))
    except OcrServiceError as e:
        return OcrMetrics(None, None, str(e))
    mmed = float(edit_distance(hyp, ref))
    if not ref:
        return OcrMetrics(mmed, None, "flat transcript is empty; mmcer undefined")
    return OcrMetrics(mmed, char_error_rate(hyp, ref))
