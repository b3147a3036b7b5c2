"""
Benchmark Ingest
Pairs distorted photos with ground-truth scans of an external benchmark
(image-only evaluation, no mappings) and writes a pairs manifest.

Conventions:
    docunet_style: <dir>/crop/<n>_<k>.<ext> distorted, <dir>/scan/<n>.<ext> GT; id <n>_<k>
    dir300_style:  <dir>/dist/<n>.<ext> distorted, <dir>/gt/<n>.<ext> GT; id <n>
"""

import json
import logging
import re
from pathlib import Path
from typing import Dict, List, Optional, Union

from pydantic import ValidationError

from ..domain.models.benchmark_models import UNKNOWN_DOMAIN, BenchmarkLayout, EvalPair, PairsManifest
from ..domain.models.errors import FormatError, InvalidArgumentError
from ..domain.models.sample_models import DOMAIN_AXES

logger = logging.getLogger(__name__)

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")
_DOCUNET_CROP = re.compile(r"^(?P<page>.+)_(?P<shot>[^_]+)$")


def natural_key(text: str):
    """Sort key that orders digit runs numerically ("2_1" before "10_1")."""
    return [int(part) if part.isdigit() else part for part in re.split(r"(\d+)", text)]


def _images(directory: Path) -> Dict[str, Path]:
    if not directory.is_dir():
        raise FormatError("expected benchmark subdirectory is missing", str(directory))
    images: Dict[str, Path] = {}
    for path in sorted(directory.iterdir()):
        if path.suffix.lower() not in IMAGE_SUFFIXES:
            continue
        if path.stem in images:
            raise FormatError(f"duplicate image stem {path.stem!r}", str(path))
        images[path.stem] = path
    return images


def _unmatched_error(unmatched: List[Path]) -> FormatError:
    names = ", ".join(str(p) for p in sorted(unmatched, key=lambda p: natural_key(str(p))))
    return FormatError(f"{len(unmatched)} files without a partner: {names}")


def _pair_docunet(root: Path) -> List[EvalPair]:
    crops = _images(root / "crop")
    scans = _images(root / "scan")
    pairs, unmatched, used_scans = [], [], set()
    for stem, path in crops.items():
        match = _DOCUNET_CROP.match(stem)
        page = match.group("page") if match else None
        if page is None or page not in scans:
            unmatched.append(path)
            continue
        used_scans.add(page)
        pairs.append(EvalPair(id=stem, distorted=str(path.resolve()), gt=str(scans[page].resolve())))
    unmatched.extend(path for stem, path in scans.items() if stem not in used_scans)
    if unmatched:
        raise _unmatched_error(unmatched)
    return pairs


def _pair_dir300(root: Path) -> List[EvalPair]:
    dist = _images(root / "dist")
    gt = _images(root / "gt")
    unmatched = [p for s, p in dist.items() if s not in gt] + [p for s, p in gt.items() if s not in dist]
    if unmatched:
        raise _unmatched_error(unmatched)
    return [EvalPair(id=s, distorted=str(p.resolve()), gt=str(gt[s].resolve())) for s, p in dist.items()]


def read_pairs_manifest(path: Union[str, Path]) -> PairsManifest:
    """
    Load a pairs manifest. Relative image paths resolve against the
    manifest's directory; every listed file must exist.
    """
    path = Path(path)
    try:
        manifest = PairsManifest.model_validate(json.loads(path.read_text(encoding="utf-8")))
    except (OSError, json.JSONDecodeError, ValidationError) as e:
        raise FormatError(f"invalid pairs manifest: {e}", str(path))
    resolved, missing, seen = [], [], set()
    for pair in manifest.pairs:
        if pair.id in seen:
            raise FormatError(f"duplicate id {pair.id!r} in manifest", str(path))
        seen.add(pair.id)
        files = []
        for name in (pair.distorted, pair.gt):
            file = Path(name)
            file = file if file.is_absolute() else (path.parent / file)
            if not file.is_file():
                missing.append(file)
            files.append(str(file.resolve()))
        domains = {axis: pair.domains.get(axis, UNKNOWN_DOMAIN) for axis in DOMAIN_AXES}
        resolved.append(EvalPair(id=pair.id, distorted=files[0], gt=files[1], domains=domains))
    if missing:
        raise FormatError(f"manifest lists missing files: {', '.join(str(m) for m in missing)}", str(path))
    manifest.pairs = sorted(resolved, key=lambda p: natural_key(p.id))
    return manifest


def ingest_external_benchmark(directory: Union[str, Path], layout: Union[str, BenchmarkLayout],
                              manifest: Optional[Union[str, Path]] = None) -> PairsManifest:
    """
    Raises:
        FormatError: missing subdirectories or files without a partner (all named)
        InvalidArgumentError: unknown layout
    """
    if manifest is not None:
        return read_pairs_manifest(manifest)
    try:
        layout = BenchmarkLayout(layout)
    except ValueError:
        raise InvalidArgumentError(
            f"unknown benchmark layout {layout!r}, expected one of {[item.value for item in BenchmarkLayout]}"
        )
    root = Path(directory)
    if not root.is_dir():
        raise InvalidArgumentError(f"benchmark directory not found: {root}")
    pairs = _pair_docunet(root) if layout == BenchmarkLayout.DOCUNET_STYLE else _pair_dir300(root)
    if not pairs:
        raise FormatError("no image pairs found", str(root))
    pairs.sort(key=lambda p: natural_key(p.id))
    logger.info(f"Ingested {len(pairs)} {layout.value} pairs from {root}")
    return PairsManifest(layout=layout.value, source=str(root.resolve()), pairs=pairs)


def write_pairs_manifest(manifest: PairsManifest, out: Union[str, Path]) -> Path:
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(manifest.model_dump(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return out
