"""
Dataset Store
Persists SampleRecords in the corpus directory layout:

    <root>/index.json
    <root>/samples/<id>/{warped.png, flat.png, gt_full.dvdm, gt_latent.dvdm,
                         fg_mask.png, textline.png, meta.json}
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Union

import numpy as np
from PIL import Image

from ..domain.models.errors import FormatError
from ..domain.models.mapping_models import DocumentImage
from ..domain.models.sample_models import DomainTags, SampleRecord
from .mapping_codec import read_mapping, write_mapping

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
INDEX_FILE = "index.json"
META_KEYS = ("id", "layout", "lighting", "angle", "warp_kind", "amplitude", "seed")


def save_image(image: DocumentImage, path: Path) -> None:
    pixels = np.round(np.clip(image.pixels, 0.0, 1.0) * 255.0).astype(np.uint8)
    mode = "L" if image.channels == 1 else "RGB"
    Image.fromarray(pixels[:, :, 0] if mode == "L" else pixels, mode=mode).save(path, format="PNG")


def load_image(path: Path) -> DocumentImage:
    try:
        with Image.open(path) as img:
            img = img.convert("L") if img.mode in ("L", "1", "I", "I;16") else img.convert("RGB")
            pixels = np.asarray(img, dtype=np.float32) / 255.0
    except (OSError, ValueError) as e:
        raise FormatError(f"cannot read image: {e}", str(path))
    return DocumentImage(pixels)


def save_mask(mask: np.ndarray, path: Path) -> None:
    Image.fromarray((np.asarray(mask) > 0).astype(np.uint8) * 255, mode="L").save(path, format="PNG")


def load_mask(path: Path) -> np.ndarray:
    try:
        with Image.open(path) as img:
            return (np.asarray(img.convert("L")) > 127).astype(np.uint8)
    except (OSError, ValueError) as e:
        raise FormatError(f"cannot read mask: {e}", str(path))


def _dump_json(data: Dict[str, Any], path: Path) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _load_json(path: Path) -> Dict[str, Any]:
    if not path.is_file():
        raise FormatError(f"missing {path.name}", str(path))
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise FormatError(f"invalid JSON: {e}", str(path))


class DatasetStore:
    """
    Reads and writes one corpus directory.
    Record files are written independently; the index is written once at the end.
    """

    def __init__(self, root: Union[str, Path]):
        self.root = Path(root)
        self.samples_dir = self.root / "samples"

    def record_dir(self, record_id: str) -> Path:
        return self.samples_dir / record_id

    def write_record(self, record: SampleRecord) -> None:
        target = self.record_dir(record.id)
        target.mkdir(parents=True, exist_ok=True)
        save_image(record.warped, target / "warped.png")
        save_image(record.flat, target / "flat.png")
        write_mapping(record.gt_map_full, target / "gt_full.dvdm")
        write_mapping(record.gt_map_latent, target / "gt_latent.dvdm")
        save_mask(record.fg_mask, target / "fg_mask.png")
        save_mask(record.textline_mask, target / "textline.png")
        _dump_json(record.meta(), target / "meta.json")

    def write_index(self, ids: List[str], latent_size: int, seed: int,
                    extra: Optional[Dict[str, Any]] = None) -> None:
        index = {
            "schema_version": SCHEMA_VERSION,
            "count": len(ids),
            "latent_size": latent_size,
            "seed": seed,
            "ids": sorted(ids),
            **(extra or {}),
        }
        self.root.mkdir(parents=True, exist_ok=True)
        _dump_json(index, self.root / INDEX_FILE)
        logger.info(f"Wrote corpus index with {len(ids)} records to {self.root}")

    def read_index(self) -> Dict[str, Any]:
        index = _load_json(self.root / INDEX_FILE)
        if index.get("schema_version") != SCHEMA_VERSION:
            raise FormatError(
                f"unsupported schema version {index.get('schema_version')}",
                str(self.root / INDEX_FILE),
            )
        for key in ("count", "latent_size", "seed"):
            if key not in index:
                raise FormatError(f"index is missing '{key}'", str(self.root / INDEX_FILE))
        return index

    def ids(self) -> List[str]:
        index = self.read_index()
        if "ids" in index:
            return list(index["ids"])
        if not self.samples_dir.is_dir():
            raise FormatError("missing samples directory", str(self.samples_dir))
        return sorted(p.name for p in self.samples_dir.iterdir() if p.is_dir())

    def read_meta(self, record_id: str) -> Dict[str, Any]:
        path = self.record_dir(record_id) / "meta.json"
        meta = _load_json(path)
        missing = [key for key in META_KEYS if key not in meta]
        if missing:
            raise FormatError(f"meta.json is missing keys {missing}", str(path))
        return meta

    def read_domains(self, record_id: str) -> DomainTags:
        meta = self.read_meta(record_id)
        try:
            return DomainTags.from_dict(meta)
        except ValueError as e:
            raise FormatError(f"unknown domain tag: {e}", str(self.record_dir(record_id) / "meta.json"))

    def read_record(self, record_id: str) -> SampleRecord:
        target = self.record_dir(record_id)
        if not target.is_dir():
            raise FormatError("missing sample directory", str(target))
        meta = self.read_meta(record_id)
        for name in ("warped.png", "flat.png", "gt_full.dvdm", "gt_latent.dvdm",
                     "fg_mask.png", "textline.png"):
            if not (target / name).is_file():
                raise FormatError(f"missing {name}", str(target / name))
        return SampleRecord(
            id=meta["id"],
            warped=load_image(target / "warped.png"),
            flat=load_image(target / "flat.png"),
            gt_map_latent=read_mapping(target / "gt_latent.dvdm"),
            gt_map_full=read_mapping(target / "gt_full.dvdm"),
            fg_mask=load_mask(target / "fg_mask.png"),
            textline_mask=load_mask(target / "textline.png"),
            domains=self.read_domains(record_id),
            amplitude=float(meta["amplitude"]),
            seed=int(meta["seed"]),
        )

    def read_all(self) -> List[SampleRecord]:
        return [self.read_record(record_id) for record_id in self.ids()]


def write_dataset(records: Iterable[SampleRecord], root: Union[str, Path],
                  latent_size: int, seed: int, extra: Optional[Dict[str, Any]] = None) -> None:
    store = DatasetStore(root)
    ids = []
    for record in records:
        store.write_record(record)
        ids.append(record.id)
    store.write_index(ids, latent_size, seed, extra)


def read_dataset(root: Union[str, Path]) -> List[SampleRecord]:
    return DatasetStore(root).read_all()
