"""Instance-level augmentation over a whole dataset.

Methods:

* ``cpil`` - context-preserving insertion: a background noise patch is
  histogram-matched to the instance's context pixels before replacing the
  erasure rectangle.
* ``re``   - random erasure: the rectangle is filled with per-pixel uniform
  random levels.
* ``dbi``  - direct background insertion: the raw, unmatched patch.
* ``none`` - identity (no pixels touched).

Every pixel outside the sampled rectangles is left bit-unchanged and
annotations are copied verbatim; augmentation edits pixels only. Each
(copy, image) pair owns a random stream seeded from (seed, copy, image_id),
so results are bit-identical regardless of worker count.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from . import context, rects
from .dataset import Annotation, Dataset, ImageRecord, crop_subimage
from .errors import ConfigError
from .raster import level_count

logger = logging.getLogger(__name__)

REPORT_FILENAME = "report.json"


class Method(str, Enum):
    CPIL = "cpil"
    RE = "re"
    DBI = "dbi"
    NONE = "none"


@dataclass(frozen=True)
class AugmentConfig:
    method: Method = Method.CPIL
    rs_range: tuple[float, float] = rects.DEFAULT_RS_RANGE
    ra_range: tuple[float, float] = rects.DEFAULT_RA_RANGE
    apply_prob: float = 1.0
    copies: int = 1
    seed: int = 0
    workers: int = 1
    max_retries: int = rects.DEFAULT_MAX_RETRIES
    include_originals: bool = False

    def validate(self) -> None:
        rects.validate_ranges(self.rs_range, self.ra_range)
        if not 0.0 <= self.apply_prob <= 1.0:
            raise ConfigError(f"apply_prob must be in [0, 1], got {self.apply_prob}")
        if self.copies < 1:
            raise ConfigError(f"copies must be >= 1, got {self.copies}")
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")
        if not 0 <= self.seed < 2**64:
            raise ConfigError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        if self.max_retries < 0:
            raise ConfigError(f"max_retries must be >= 0, got {self.max_retries}")

    def to_dict(self) -> dict:
        # workers is an execution detail: results are identical for any
        # worker count, and the report must be too
        return {
            "method": self.method.value,
            "rs_range": list(self.rs_range),
            "ra_range": list(self.ra_range),
            "apply_prob": self.apply_prob,
            "copies": self.copies,
            "seed": self.seed,
            "max_retries": self.max_retries,
            "include_originals": self.include_originals,
        }


@dataclass
class InstanceRecord:
    """One applied augmentation: which instance, where, and with what."""

    copy: int
    image_id: int
    annotation_id: int
    method: str
    rect: tuple[int, int, int, int]  # absolute image coords (x, y, w, h)
    r_s: float
    r_a: float
    clamped: bool
    fallback: bool

    def to_dict(self) -> dict:
        return {
            "copy": self.copy,
            "image_id": self.image_id,
            "annotation_id": self.annotation_id,
            "method": self.method,
            "rect": list(self.rect),
            "r_s": self.r_s,
            "r_a": self.r_a,
            "clamped": self.clamped,
            "fallback": self.fallback,
        }


@dataclass
class AugmentReport:
    config: AugmentConfig
    records: list[InstanceRecord] = field(default_factory=list)
    instances_seen: int = 0

    def counts(self) -> dict:
        return {
            "instances_seen": self.instances_seen,
            "applied": len(self.records),
            "skipped": self.instances_seen - len(self.records),
            "clamped": sum(r.clamped for r in self.records),
            "fallbacks": sum(r.fallback for r in self.records),
        }

    def to_json(self) -> bytes:
        payload = {
            "config": self.config.to_dict(),
            "counts": self.counts(),
            "records": [r.to_dict() for r in self.records],
        }
        return (json.dumps(payload, sort_keys=True, separators=(",", ":")) + "\n").encode()

    def write(self, path) -> None:
        Path(path).write_bytes(self.to_json())


def instance_stream(seed: int, copy: int, image_id: int) -> np.random.Generator:
    """Dedicated random stream for one (copy, image) task."""
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(copy, image_id)))


def augment_instance(raster: np.ndarray, ann: Annotation, cfg: AugmentConfig,
                     rng: np.random.Generator,
                     background_pool: list[np.ndarray] | None = None) -> InstanceRecord | None:
    """Apply one method to one instance, mutating ``raster`` inside the
    sampled rectangle only. Returns the record, or None when not applied."""
    if cfg.method is Method.NONE:
        return None
    if rng.random() >= cfg.apply_prob:
        return None
    bbox = ann.bbox
    sample = rects.sample_rect(rng, bbox, cfg.rs_range, cfg.ra_range, cfg.max_retries)
    rect = sample.rect
    ax, ay = bbox.x + rect.x, bbox.y + rect.y
    levels = level_count(raster)
    fallback = False

    if cfg.method is Method.RE:
        fill = rng.integers(0, levels, size=(rect.h, rect.w), dtype=raster.dtype)
    else:
        if not background_pool:
            raise ConfigError(f"method {cfg.method.value} requires a background pool")
        patch = context.sample_noise_patch(rng, background_pool, (rect.w, rect.h))
        if cfg.method is Method.DBI:
            fill = patch
        else:
            sub = crop_subimage(raster, bbox)
            mask_crop = ann.mask[bbox.y : bbox.y + bbox.h, bbox.x : bbox.x + bbox.w]
            ref = context.context_reference(sub, mask_crop)
            if ref is None:
                logger.warning(
                    "annotation %d: mask fills its box, inserting unmatched patch", ann.id
                )
                fallback = True
                fill = patch
            else:
                fill = context.match_histogram(patch, ref)
    if sample.clamped:
        logger.debug("annotation %d: rect dims clamped to bbox", ann.id)

    raster[ay : ay + rect.h, ax : ax + rect.w] = fill.astype(raster.dtype, copy=False)
    return InstanceRecord(
        copy=-1,  # filled by the dataset driver
        image_id=ann.image_id,
        annotation_id=ann.id,
        method=cfg.method.value,
        rect=(ax, ay, rect.w, rect.h),
        r_s=sample.params.r_s,
        r_a=sample.params.r_a,
        clamped=sample.clamped,
        fallback=fallback,
    )


def _augment_one_image(args):
    raster, anns, cfg, copy_idx, image_id, pool = args
    rng = instance_stream(cfg.seed, copy_idx, image_id)
    out = raster.copy()
    records = []
    for ann in anns:
        rec = augment_instance(out, ann, cfg, rng, pool)
        if rec is not None:
            rec.copy = copy_idx
            records.append(rec)
    return out, records


def _check_pool_depths(ds: Dataset) -> None:
    if not ds.rasters:
        return
    min_image = min(r.dtype.itemsize for r in ds.rasters.values())
    for bg in ds.background_pool:
        if bg.dtype.itemsize > min_image:
            raise ConfigError(
                "background pool bit depth exceeds image bit depth; "
                "patches could carry out-of-range values"
            )


def augment_dataset(ds: Dataset, cfg: AugmentConfig) -> tuple[Dataset, AugmentReport]:
    """Produce ``cfg.copies`` augmented replicas of ``ds`` (plus the untouched
    originals when ``cfg.include_originals``) and the per-instance report.

    Image and annotation ids of replica views are shifted by a fixed stride
    (a pure renumbering bijection); the first output view keeps the input
    ids and file names unchanged.
    """
    cfg.validate()
    if cfg.method in (Method.CPIL, Method.DBI):
        if not ds.background_pool:
            raise ConfigError(
                f"method {cfg.method.value} requires a non-empty background pool "
                "(see --backgrounds)"
            )
        _check_pool_depths(ds)

    img_stride = max((im.id for im in ds.images), default=0) + 1
    ann_stride = max((a.id for a in ds.annotations), default=0) + 1
    anns_by_image: dict[int, list[Annotation]] = {im.id: [] for im in ds.images}
    for ann in ds.annotations:
        anns_by_image[ann.image_id].append(ann)

    tasks = [
        (ds.rasters[im.id], anns_by_image[im.id], cfg, c, im.id, ds.background_pool)
        for c in range(cfg.copies)
        for im in ds.images
    ]
    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_augment_one_image, tasks))
    else:
        results = [_augment_one_image(t) for t in tasks]

    report = AugmentReport(config=cfg)
    out_images: list[ImageRecord] = []
    out_rasters: dict[int, np.ndarray] = {}
    out_annotations: list[Annotation] = []

    def add_view(view: int, images, rasters, anns, records):
        for im in images:
            new_id = im.id + view * img_stride
            name = im.file_name if view == 0 else f"aug{view}_{im.file_name}"
            out_images.append(ImageRecord(new_id, name, im.width, im.height))
            out_rasters[new_id] = rasters[im.id]
        for a in anns:
            out_annotations.append(
                Annotation(a.id + view * ann_stride, a.image_id + view * img_stride,
                           a.bbox, a.mask, a.raw)
            )
        for rec in records:
            rec.image_id += view * img_stride
            rec.annotation_id += view * ann_stride
            report.records.append(rec)

    first_aug_view = 1 if cfg.include_originals else 0
    if cfg.include_originals:
        add_view(0, ds.images, ds.rasters, ds.annotations, [])

    for c in range(cfg.copies):
        copy_rasters = {}
        copy_records = []
        for (out, recs), im in zip(
            results[c * len(ds.images) : (c + 1) * len(ds.images)], ds.images
        ):
            copy_rasters[im.id] = out
            copy_records.extend(recs)
        report.instances_seen += len(ds.annotations)
        add_view(first_aug_view + c, ds.images, copy_rasters, ds.annotations, copy_records)

    report.records.sort(key=lambda r: (r.copy, r.image_id, r.annotation_id))
    out = Dataset(out_images, out_annotations, out_rasters,
                  background_pool=[], categories=ds.categories)
    return out, report
