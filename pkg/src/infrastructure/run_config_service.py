"""
Run Configuration Service
Resolves RunConfig from defaults, a JSON file, command-line overrides and the
environment, and computes the config hash every artifact embeds.
"""

import hashlib
import json
import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Optional, Union

from dotenv import load_dotenv
from pydantic import ValidationError

from ..domain.models.errors import FormatError, InvalidArgumentError
from ..domain.models.run_config import NetConfig, RunConfig

load_dotenv()

logger = logging.getLogger(__name__)

HASH_LENGTH = 16


@dataclass
class OcrEnvironment:
    """OCR settings that come from the environment rather than the config file."""
    endpoint: Optional[str] = None
    api_key: Optional[str] = None
    timeout_seconds: Optional[float] = None
    max_concurrency: Optional[int] = None

    @classmethod
    def from_env(cls) -> "OcrEnvironment":
        timeout = os.getenv('OCR_TIMEOUT_SECONDS')
        concurrency = os.getenv('OCR_MAX_CONCURRENCY')
        try:
            return cls(
                endpoint=os.getenv('OCR_ENDPOINT') or None,
                api_key=os.getenv('OCR_API_KEY') or None,
                timeout_seconds=float(timeout) if timeout else None,
                max_concurrency=int(concurrency) if concurrency else None,
            )
        except ValueError as e:
            raise InvalidArgumentError(f"invalid OCR environment setting: {e}")


def _merge(base: Dict[str, Any], overrides: Dict[str, Any]) -> Dict[str, Any]:
    """Recursive dict merge; None values in overrides are ignored."""
    merged = dict(base)
    for key, value in overrides.items():
        if value is None:
            continue
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def _validation_message(error: ValidationError) -> str:
    return "; ".join(
        f"{'.'.join(str(p) for p in item['loc']) or 'config'}: {item['msg']}"
        for item in error.errors()
    )


def parse_run_config(data: Dict[str, Any]) -> RunConfig:
    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        raise InvalidArgumentError(f"invalid configuration: {_validation_message(e)}")


def parse_net_config(data: Dict[str, Any]) -> NetConfig:
    try:
        return NetConfig.model_validate(data)
    except ValidationError as e:
        raise InvalidArgumentError(f"invalid network configuration: {_validation_message(e)}")


def read_config_file(path: Union[str, Path]) -> Dict[str, Any]:
    path = Path(path)
    if not path.is_file():
        raise InvalidArgumentError(f"config file not found: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise FormatError(f"config is not valid JSON: {e}", str(path))
    if not isinstance(data, dict):
        raise FormatError("config must be a JSON object", str(path))
    return data


class RunConfigService:
    """Builds the resolved RunConfig of one command invocation."""

    def __init__(self, env: Optional[OcrEnvironment] = None):
        self.env = env or OcrEnvironment.from_env()
        logger.info("RunConfigService initialized")

    def load(self, config_path: Optional[Union[str, Path]] = None,
             overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
        """
        Resolve a configuration.

        Args:
            config_path: optional JSON file
            overrides: nested dict from command-line flags (None values skipped)

        Returns:
            Validated RunConfig
        """
        data = RunConfig().model_dump(mode="json")
        if config_path:
            data = _merge(data, read_config_file(config_path))
        data = _merge(data, overrides or {})
        data = _merge(data, {"eval": {"ocr": {
            "endpoint": None if data["eval"]["ocr"].get("endpoint") else self.env.endpoint,
            "timeout_seconds": self.env.timeout_seconds,
            "max_concurrency": self.env.max_concurrency,
        }}})
        config = parse_run_config(data)

        failed = [name for name, ok in validate_config(config).items() if not ok]
        if failed:
            logger.error(f"Configuration checks failed: {failed}")
            raise InvalidArgumentError(f"configuration checks failed: {', '.join(failed)}")
        logger.info(f"Resolved configuration {config_hash(config)}")
        return config

    @property
    def ocr_api_key(self) -> Optional[str]:
        return self.env.api_key


def canonical_json(config: RunConfig) -> str:
    return json.dumps(config.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))


def config_hash(config: RunConfig) -> str:
    """First 16 hex chars of SHA-256 over the canonical JSON (secrets never enter RunConfig)."""
    return hashlib.sha256(canonical_json(config).encode("utf-8")).hexdigest()[:HASH_LENGTH]


def validate_config(config: RunConfig) -> Dict[str, bool]:
    """Cross-field checks pydantic field validators cannot express."""
    schedule = config.schedule
    return {
        'beta_range_valid': 0.0 < schedule.beta_start <= schedule.beta_end < 1.0,
        'rollout_within_schedule': config.training.rollout_steps <= schedule.T,
        'sampling_within_schedule': config.sampling.steps <= schedule.T,
        'latent_below_input': config.net.latent_size <= config.net.input_size,
        'latent_below_image': config.net.latent_size <= config.synth.size,
        'layouts_known': all(
            layout in ("single-column", "two-column", "complex") for layout in config.synth.layouts
        ) and len(config.synth.layouts) > 0,
    }
