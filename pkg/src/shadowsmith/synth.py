"""Deterministic synthetic SAR-like scenes for desk-scale testing.

Scenes are gamma-speckled backgrounds (L-look multiplicative intensity
model, unit mean) with bright elliptical "ships" at random orientations.
Masks are the exact rendered ellipse support, bboxes their tight bounds,
and an optional dark band to the right of each ship mimics a radar shadow.
Realism is a non-goal; the scenes exist to exercise the augmentation
geometry end to end.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import Annotation, BoundingBox, Dataset, ImageRecord, encode_rle
from .errors import ConfigError

SHADOW_FACTOR = 0.15
SHIP_CONTRAST = 5.0
PLACEMENT_RETRIES = 30


@dataclass(frozen=True)
class SceneConfig:
    size: int = 96
    ship_count: tuple[int, int] = (1, 3)
    ship_size: tuple[int, int] = (8, 24)  # ellipse major-axis length, px
    background_mean: float = 40.0
    looks: int = 4
    shadow: bool = True
    depth: int = 8

    def validate(self) -> None:
        if self.size < 8:
            raise ConfigError(f"image size must be >= 8, got {self.size}")
        if self.ship_count[0] < 0 or self.ship_count[0] > self.ship_count[1]:
            raise ConfigError(f"bad ship count range {self.ship_count}")
        if self.ship_size[0] < 2 or self.ship_size[0] > self.ship_size[1]:
            raise ConfigError(f"bad ship size range {self.ship_size}")
        if self.looks < 1:
            raise ConfigError(f"looks must be >= 1, got {self.looks}")
        if self.depth not in (8, 16):
            raise ConfigError(f"depth must be 8 or 16, got {self.depth}")
        if not 0 < self.background_mean <= (1 << self.depth) - 1:
            raise ConfigError(f"background mean {self.background_mean} out of range")


def speckle_field(rng: np.random.Generator, shape, looks: int) -> np.ndarray:
    """Unit-mean multiplicative speckle: per-pixel Gamma(looks, 1/looks)."""
    return rng.gamma(shape=looks, scale=1.0 / looks, size=shape)


def _ellipse_mask(size: int, cx: float, cy: float, a: float, b: float,
                  theta: float) -> np.ndarray:
    rr, cc = np.mgrid[0:size, 0:size]
    dx = cc - cx
    dy = rr - cy
    ct, st = np.cos(theta), np.sin(theta)
    u = (ct * dx + st * dy) / a
    v = (-st * dx + ct * dy) / b
    return (u * u + v * v <= 1.0).astype(np.uint8)


def _tight_bbox(mask: np.ndarray) -> BoundingBox:
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    return BoundingBox(
        x=int(cols[0]), y=int(rows[0]),
        w=int(cols[-1] - cols[0] + 1), h=int(rows[-1] - rows[0] + 1),
    )


def _boxes_overlap(a: BoundingBox, b: BoundingBox) -> bool:
    return not (a.x + a.w <= b.x or b.x + b.w <= a.x
                or a.y + a.h <= b.y or b.y + b.h <= a.y)


def generate_scene(cfg: SceneConfig, rng: np.random.Generator, image_id: int = 0,
                   ann_id_start: int = 1) -> tuple[np.ndarray, list[Annotation]]:
    """Render one scene. Ships failing placement after bounded retries are
    skipped, so the instance count may undershoot the drawn count."""
    cfg.validate()
    size = cfg.size
    reflectivity = np.full((size, size), cfg.background_mean)

    n_ships = int(rng.integers(cfg.ship_count[0], cfg.ship_count[1] + 1))
    masks: list[np.ndarray] = []
    boxes: list[BoundingBox] = []
    for _ in range(n_ships):
        for _attempt in range(PLACEMENT_RETRIES):
            length = rng.uniform(*cfg.ship_size)
            a = length / 2.0
            b = max(1.0, a * rng.uniform(0.3, 0.6))
            theta = rng.uniform(0.0, np.pi)
            margin = int(np.ceil(a)) + 1
            if 2 * margin >= size:
                continue
            cx = rng.uniform(margin, size - margin)
            cy = rng.uniform(margin, size - margin)
            mask = _ellipse_mask(size, cx, cy, a, b, theta)
            if not mask.any():
                continue
            bbox = _tight_bbox(mask)
            if any(_boxes_overlap(bbox, other) for other in boxes):
                continue
            masks.append(mask)
            boxes.append(bbox)
            break

    shadow = np.zeros((size, size), dtype=bool)
    for mask, bbox in zip(masks, boxes):
        reflectivity[mask == 1] = cfg.background_mean * SHIP_CONTRAST
        if cfg.shadow:
            band = np.zeros((size, size), dtype=bool)
            for shift in range(1, max(4, bbox.w // 2) + 1):
                band[:, shift:] |= mask[:, :-shift].astype(bool)
            shadow |= band
    for mask in masks:
        shadow &= ~mask.astype(bool)
    reflectivity[shadow] *= SHADOW_FACTOR

    intensity = reflectivity * speckle_field(rng, (size, size), cfg.looks)
    max_level = (1 << cfg.depth) - 1
    dtype = np.uint8 if cfg.depth == 8 else np.uint16
    raster = np.clip(np.rint(intensity), 0, max_level).astype(dtype)

    annotations = []
    for i, (mask, bbox) in enumerate(zip(masks, boxes)):
        ann_id = ann_id_start + i
        raw = {
            "id": ann_id,
            "image_id": image_id,
            "bbox": [float(v) for v in bbox.as_list()],
            "area": int(mask.sum()),
            "category_id": 1,
            "iscrowd": 0,
            "segmentation": encode_rle(mask),
        }
        annotations.append(Annotation(ann_id, image_id, bbox, mask, raw))
    return raster, annotations


def generate_dataset(cfg: SceneConfig, n_images: int, seed: int,
                     n_backgrounds: int = 2) -> Dataset:
    """A full synthetic dataset: scenes, annotations, and a ship-free
    background pool, all deterministic from ``seed``."""
    images: list[ImageRecord] = []
    rasters: dict[int, np.ndarray] = {}
    annotations: list[Annotation] = []
    next_ann = 1
    for i in range(n_images):
        rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(0, i)))
        image_id = i + 1
        raster, anns = generate_scene(cfg, rng, image_id=image_id, ann_id_start=next_ann)
        next_ann += len(anns)
        images.append(ImageRecord(image_id, f"scene_{i:04d}.png", cfg.size, cfg.size))
        rasters[image_id] = raster
        annotations.extend(anns)

    bg_cfg = SceneConfig(
        size=max(cfg.size, 64), ship_count=(0, 0), ship_size=cfg.ship_size,
        background_mean=cfg.background_mean, looks=cfg.looks,
        shadow=False, depth=cfg.depth,
    )
    pool = []
    for i in range(n_backgrounds):
        rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(1, i)))
        bg, _ = generate_scene(bg_cfg, rng)
        pool.append(bg)
    return Dataset(images, annotations, rasters, background_pool=pool)
