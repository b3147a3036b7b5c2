"""
DVDM mapping file codec.

Layout (little-endian): magic b"DVDM", version u8, dtype u8 (1 = float32),
reserved u16, height u32, width u32, channels u32 (2), then
height * width * 2 float32 values row-major with x before y.
"""

import logging
import struct
from pathlib import Path
from typing import Union

import numpy as np

from ..domain.models.errors import FormatError
from ..domain.models.mapping_models import GridMapping

logger = logging.getLogger(__name__)

MAGIC = b"DVDM"
VERSION = 1
DTYPE_FLOAT32 = 1
CHANNELS = 2
_HEADER = struct.Struct("<4sBBHIII")


def encode_mapping(mapping: GridMapping) -> bytes:
    header = _HEADER.pack(MAGIC, VERSION, DTYPE_FLOAT32, 0,
                          mapping.height, mapping.width, CHANNELS)
    payload = np.ascontiguousarray(mapping.coords, dtype="<f4").tobytes()
    return header + payload


def decode_mapping(data: bytes, source: str = "<bytes>") -> GridMapping:
    if len(data) < _HEADER.size:
        raise FormatError("truncated DVDM header", source)
    magic, version, dtype, _reserved, height, width, channels = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FormatError(f"bad DVDM magic {magic!r}", source)
    if version != VERSION:
        raise FormatError(f"unsupported DVDM version {version}", source)
    if dtype != DTYPE_FLOAT32:
        raise FormatError(f"unsupported DVDM dtype {dtype}", source)
    if channels != CHANNELS:
        raise FormatError(f"DVDM channel count must be 2, got {channels}", source)
    expected = height * width * CHANNELS * 4
    payload = data[_HEADER.size:]
    if len(payload) != expected or height == 0 or width == 0:
        raise FormatError(
            f"DVDM payload is {len(payload)} bytes, expected {expected} for {height}x{width}",
            source,
        )
    coords = np.frombuffer(payload, dtype="<f4").reshape(height, width, CHANNELS)
    return GridMapping(coords.astype(np.float32))


def write_mapping(mapping: GridMapping, path: Union[str, Path]) -> None:
    Path(path).write_bytes(encode_mapping(mapping))


def read_mapping(path: Union[str, Path]) -> GridMapping:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as e:
        logger.error(f"Cannot read mapping file {path}: {str(e)}")
        raise FormatError(f"cannot read mapping file: {e}", str(path))
    return decode_mapping(data, str(path))
