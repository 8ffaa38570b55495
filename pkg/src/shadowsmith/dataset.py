"""Data model and I/O for annotated SAR ship datasets.

A dataset is a directory with the layout::

    <root>/images/           8- or 16-bit grayscale PNGs
    <root>/annotations.json  COCO-style annotations (bbox + segmentation)
    <root>/backgrounds/      optional ship-free PNGs used as the noise pool

Instance masks are stored full-image-sized (same grid as the parent image)
and cropped on demand. Bounding boxes are integer pixel rectangles that must
lie fully inside their image.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DatasetError, MaskDecodeError
from .raster import read_png, write_png

IMAGES_DIRNAME = "images"
ANNOTATIONS_FILENAME = "annotations.json"
BACKGROUNDS_DIRNAME = "backgrounds"


def round_half_up(v: float) -> int:
    """Round to nearest integer, ties away from zero toward +inf (0.5 -> 1)."""
    return int(math.floor(v + 0.5))


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box, origin at the upper-left corner of the image."""

    x: int
    y: int
    w: int
    h: int

    def validate(self, image_w: int, image_h: int) -> None:
        if self.w < 1 or self.h < 1:
            raise DatasetError(f"degenerate bbox {self.as_list()}")
        if self.x < 0 or self.y < 0 or self.x + self.w > image_w or self.y + self.h > image_h:
            raise DatasetError(
                f"bbox {self.as_list()} outside image bounds {image_w}x{image_h}"
            )

    def as_list(self) -> list[int]:
        return [self.x, self.y, self.w, self.h]

    @property
    def area(self) -> int:
        return self.w * self.h


@dataclass(frozen=True)
class ImageRecord:
    id: int
    file_name: str
    width: int
    height: int


@dataclass
class Annotation:
    """One ship instance: bbox plus a full-image binary mask.

    ``raw`` keeps the original JSON record so annotation files can be
    re-serialized byte-identically (augmentation never edits labels).
    """

    id: int
    image_id: int
    bbox: BoundingBox
    mask: np.ndarray
    raw: dict = field(default_factory=dict)


@dataclass
class Dataset:
    images: list[ImageRecord]
    annotations: list[Annotation]
    rasters: dict[int, np.ndarray]
    background_pool: list[np.ndarray] = field(default_factory=list)
    categories: list[dict] = field(default_factory=lambda: [{"id": 1, "name": "ship"}])

    def annotations_for(self, image_id: int) -> list[Annotation]:
        return [a for a in self.annotations if a.image_id == image_id]


# ---------------------------------------------------------------------------
# mask decoding


def _fill_polygon(mask: np.ndarray, coords: np.ndarray) -> None:
    """OR one polygon into ``mask`` using even-odd pixel-center containment.

    A pixel (r, c) is set when its center (c + 0.5, r + 0.5) has odd
    crossing parity; centers lying exactly on a polygon edge count as
    inside (deterministic tie-break).
    """
    height, width = mask.shape
    xs, ys = coords[:, 0], coords[:, 1]
    c_lo = max(0, int(math.floor(xs.min())) - 1)
    c_hi = min(width - 1, int(math.ceil(xs.max())) + 1)
    r_lo = max(0, int(math.floor(ys.min())) - 1)
    r_hi = min(height - 1, int(math.ceil(ys.max())) + 1)
    if c_lo > c_hi or r_lo > r_hi:
        return
    px = np.arange(c_lo, c_hi + 1, dtype=np.float64) + 0.5
    py = np.arange(r_lo, r_hi + 1, dtype=np.float64) + 0.5
    PX, PY = np.meshgrid(px, py)

    inside = np.zeros(PX.shape, dtype=bool)
    on_edge = np.zeros(PX.shape, dtype=bool)
    n = len(coords)
    for i in range(n):
        x1, y1 = xs[i], ys[i]
        x2, y2 = xs[(i + 1) % n], ys[(i + 1) % n]
        if x1 == x2 and y1 == y2:
            continue
        if y1 != y2:
            crosses = (y1 > PY) != (y2 > PY)
            x_int = (x2 - x1) * (PY - y1) / (y2 - y1) + x1
            inside ^= crosses & (PX < x_int)
        cross = (x2 - x1) * (PY - y1) - (y2 - y1) * (PX - x1)
        within = (
            (PX >= min(x1, x2))
            & (PX <= max(x1, x2))
            & (PY >= min(y1, y2))
            & (PY <= max(y1, y2))
        )
        on_edge |= (cross == 0.0) & within

    mask[r_lo : r_hi + 1, c_lo : c_hi + 1] |= inside | on_edge


def _decode_rle(counts, width: int, height: int) -> np.ndarray:
    counts = np.asarray(counts, dtype=np.int64)
    if counts.ndim != 1 or (counts.size and counts.min() < 0):
        raise MaskDecodeError(f"malformed RLE counts {counts!r}")
    if int(counts.sum()) != width * height:
        raise MaskDecodeError(
            f"RLE counts sum {int(counts.sum())} != {width}x{height} pixels"
        )
    values = np.arange(counts.size, dtype=np.int64) % 2
    flat = np.repeat(values, counts).astype(np.uint8)
    # COCO RLE runs down columns first
    return flat.reshape((height, width), order="F")


def encode_rle(mask: np.ndarray) -> dict:
    """Uncompressed COCO RLE (column-major counts, zeros first) for a mask."""
    flat = np.asarray(mask, dtype=np.uint8).flatten(order="F")
    if flat.size == 0:
        return {"size": [0, 0], "counts": []}
    changes = np.flatnonzero(np.diff(flat)) + 1
    bounds = np.concatenate(([0], changes, [flat.size]))
    counts = np.diff(bounds).tolist()
    if flat[0] == 1:
        counts = [0] + counts
    return {"size": [int(mask.shape[0]), int(mask.shape[1])], "counts": counts}


def decode_mask(segmentation, width: int, height: int) -> np.ndarray:
    """Decode a COCO segmentation (polygon list or uncompressed RLE) to a
    full-image binary mask of shape (height, width)."""
    if isinstance(segmentation, dict):
        counts = segmentation.get("counts")
        if isinstance(counts, str):
            raise MaskDecodeError("compressed RLE strings are not supported")
        size = segmentation.get("size")
        if size is not None and list(size) != [height, width]:
            raise MaskDecodeError(f"RLE size {size} != image size [{height}, {width}]")
        return _decode_rle(counts, width, height)

    if not isinstance(segmentation, (list, tuple)):
        raise MaskDecodeError(f"unsupported segmentation record: {type(segmentation)}")
    polygons = segmentation
    if polygons and isinstance(polygons[0], (int, float)):
        polygons = [polygons]
    mask = np.zeros((height, width), dtype=np.uint8)
    for poly in polygons:
        coords = np.asarray(poly, dtype=np.float64).reshape(-1, 2)
        if coords.shape[0] < 3:
            raise MaskDecodeError(f"polygon needs >= 3 vertices, got {coords.shape[0]}")
        if (
            coords[:, 0].min() < 0
            or coords[:, 0].max() > width
            or coords[:, 1].min() < 0
            or coords[:, 1].max() > height
        ):
            raise MaskDecodeError("polygon vertices outside image bounds")
        _fill_polygon(mask, coords)
    return mask


def crop_subimage(raster: np.ndarray, bbox: BoundingBox) -> np.ndarray:
    """Copy the pixels of ``raster`` under ``bbox`` (the per-instance sub-image)."""
    bbox.validate(raster.shape[1], raster.shape[0])
    return raster[bbox.y : bbox.y + bbox.h, bbox.x : bbox.x + bbox.w].copy()


# ---------------------------------------------------------------------------
# loading


def _parse_annotations_json(path: Path) -> dict:
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError as exc:
        raise DatasetError(f"annotations file not found: {path}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise DatasetError(
            f"malformed JSON in {path} at byte offset {exc.pos}: {exc.msg}"
        ) from exc


def load_dataset(annotations_path, images_dir, backgrounds_dir=None) -> Dataset:
    """Load a COCO-style annotation file plus its referenced grayscale images.

    Masks are decoded to full-image binary grids and every bbox is validated
    against its image record. ``backgrounds_dir`` optionally fills the noise
    pool (PNGs, loaded in sorted name order).
    """
    annotations_path = Path(annotations_path)
    images_dir = Path(images_dir)
    doc = _parse_annotations_json(annotations_path)

    images: list[ImageRecord] = []
    rasters: dict[int, np.ndarray] = {}
    for rec in doc.get("images", []):
        img = ImageRecord(
            id=int(rec["id"]),
            file_name=str(rec["file_name"]),
            width=int(rec["width"]),
            height=int(rec["height"]),
        )
        if img.id in rasters:
            raise DatasetError(f"duplicate image id {img.id}")
        raster = read_png(images_dir / img.file_name)
        if raster.shape != (img.height, img.width):
            raise DatasetError(
                f"image {img.file_name}: file is {raster.shape[1]}x{raster.shape[0]} "
                f"but record says {img.width}x{img.height}"
            )
        images.append(img)
        rasters[img.id] = raster
    by_id = {img.id: img for img in images}

    annotations: list[Annotation] = []
    seen_ids: set[int] = set()
    for rec in doc.get("annotations", []):
        ann_id = int(rec["id"])
        if ann_id in seen_ids:
            raise DatasetError(f"duplicate annotation id {ann_id}")
        seen_ids.add(ann_id)
        image_id = int(rec["image_id"])
        img = by_id.get(image_id)
        if img is None:
            raise DatasetError(f"annotation {ann_id}: unknown image_id {image_id}")
        bx, by_, bw, bh = (round_half_up(float(v)) for v in rec["bbox"])
        bbox = BoundingBox(bx, by_, bw, bh)
        try:
            bbox.validate(img.width, img.height)
        except DatasetError as exc:
            raise DatasetError(f"annotation {ann_id}: {exc}") from exc
        try:
            mask = decode_mask(rec["segmentation"], img.width, img.height)
        except MaskDecodeError as exc:
            raise MaskDecodeError(f"annotation {ann_id}: {exc}") from exc
        if not mask[bbox.y : bbox.y + bbox.h, bbox.x : bbox.x + bbox.w].any():
            raise DatasetError(f"annotation {ann_id}: mask has no pixels inside bbox")
        annotations.append(Annotation(ann_id, image_id, bbox, mask, raw=dict(rec)))

    pool = load_backgrounds(backgrounds_dir) if backgrounds_dir else []
    categories = doc.get("categories", [{"id": 1, "name": "ship"}])
    return Dataset(images, annotations, rasters, pool, categories)


def load_backgrounds(backgrounds_dir) -> list[np.ndarray]:
    """Load every PNG under ``backgrounds_dir``, sorted by file name."""
    backgrounds_dir = Path(backgrounds_dir)
    if not backgrounds_dir.is_dir():
        raise DatasetError(f"backgrounds directory not found: {backgrounds_dir}")
    return [read_png(p) for p in sorted(backgrounds_dir.glob("*.png"))]


def load_layout(root, with_backgrounds: bool = False) -> Dataset:
    """Load a dataset from the standard directory layout."""
    root = Path(root)
    bg = root / BACKGROUNDS_DIRNAME
    return load_dataset(
        root / ANNOTATIONS_FILENAME,
        root / IMAGES_DIRNAME,
        backgrounds_dir=bg if with_backgrounds and bg.is_dir() else None,
    )


# ---------------------------------------------------------------------------
# writing


def annotations_payload(ds: Dataset) -> dict:
    """COCO-style document for ``ds``; annotation records are the loaded
    ``raw`` dicts re-emitted verbatim (with current id/image_id)."""
    images = [
        {"id": im.id, "file_name": im.file_name, "width": im.width, "height": im.height}
        for im in ds.images
    ]
    anns = []
    for a in ds.annotations:
        rec = dict(a.raw)
        rec["id"] = a.id
        rec["image_id"] = a.image_id
        anns.append(rec)
    return {"images": images, "annotations": anns, "categories": ds.categories}


def serialize_annotations(ds: Dataset) -> bytes:
    """Canonical (sorted-key, fixed-separator) JSON bytes for the dataset."""
    payload = annotations_payload(ds)
    return (json.dumps(payload, sort_keys=True, separators=(",", ":")) + "\n").encode()


def write_annotations(ds: Dataset, path) -> None:
    Path(path).write_bytes(serialize_annotations(ds))


def write_dataset(ds: Dataset, root, background_names: list[str] | None = None) -> None:
    """Materialize ``ds`` in the standard layout under ``root``."""
    root = Path(root)
    images_dir = root / IMAGES_DIRNAME
    images_dir.mkdir(parents=True, exist_ok=True)
    for im in ds.images:
        write_png(ds.rasters[im.id], images_dir / im.file_name)
    write_annotations(ds, root / ANNOTATIONS_FILENAME)
    if ds.background_pool:
        bg_dir = root / BACKGROUNDS_DIRNAME
        bg_dir.mkdir(parents=True, exist_ok=True)
        names = background_names or [
            f"bg_{i:04d}.png" for i in range(len(ds.background_pool))
        ]
        for name, bg in zip(names, ds.background_pool):
            write_png(bg, bg_dir / name)
