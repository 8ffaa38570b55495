"""Erasure-rectangle sampling.

A rectangle of size (w_o, h_o) is solved from an area ratio r_S and aspect
ratio r_A against the instance bounding box:

    w_o * h_o = r_S * w * h        (area constraint)
    w_o       = h_o / r_A          (aspect constraint)

and is then placed inside the box flush against one of its four edges,
because the information loss it simulates is cast toward the target's outer
boundary. All randomness comes from an explicitly passed numpy Generator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .dataset import BoundingBox, round_half_up
from .errors import ConfigError

DEFAULT_RS_RANGE = (0.2, 0.4)
DEFAULT_RA_RANGE = (0.5, 2.0)
DEFAULT_MAX_RETRIES = 16


@dataclass(frozen=True)
class AugmentParams:
    """Area ratio r_s in (0, 1) and aspect ratio r_a > 0."""

    r_s: float
    r_a: float


class Rect(NamedTuple):
    """Placed rectangle, coordinates relative to the sub-image (the bbox)."""

    x: int
    y: int
    w: int
    h: int


class RectDims(NamedTuple):
    w: int
    h: int
    feasible: bool


class RectSample(NamedTuple):
    rect: Rect
    params: AugmentParams
    clamped: bool


def validate_ranges(rs_range, ra_range) -> None:
    rs_lo, rs_hi = rs_range
    ra_lo, ra_hi = ra_range
    if not (0.0 < rs_lo <= rs_hi < 1.0):
        raise ConfigError(f"area-ratio range must satisfy 0 < lo <= hi < 1, got {rs_range}")
    if not (0.0 < ra_lo <= ra_hi):
        raise ConfigError(f"aspect-ratio range must satisfy 0 < lo <= hi, got {ra_range}")


def sample_params(rng: np.random.Generator, rs_range=DEFAULT_RS_RANGE,
                  ra_range=DEFAULT_RA_RANGE) -> AugmentParams:
    """Draw r_s and r_a independently and uniformly from their ranges."""
    validate_ranges(rs_range, ra_range)
    return AugmentParams(
        r_s=float(rng.uniform(rs_range[0], rs_range[1])),
        r_a=float(rng.uniform(ra_range[0], ra_range[1])),
    )


def exact_rect_dims(w: int, h: int, params: AugmentParams) -> tuple[float, float]:
    """Real-valued (w_o, h_o) solving the area and aspect constraints exactly."""
    w_o = math.sqrt(params.r_s * w * h / params.r_a)
    return w_o, params.r_a * w_o


def rect_dims(bbox: BoundingBox, params: AugmentParams) -> RectDims:
    """Solve for the rectangle size, round to integers (min 1 px), and flag
    whether the rounded rectangle fits inside the box."""
    w_real, h_real = exact_rect_dims(bbox.w, bbox.h, params)
    w_o = max(1, round_half_up(w_real))
    h_o = max(1, round_half_up(h_real))
    return RectDims(w_o, h_o, feasible=(w_o <= bbox.w and h_o <= bbox.h))


_LEFT, _TOP, _RIGHT, _BOTTOM = range(4)


def place_rect(rng: np.random.Generator, bbox: BoundingBox, dims: tuple[int, int]) -> Rect:
    """Place a (w_o, h_o) rectangle inside the box, flush against one of the
    four edges (chosen uniformly), uniform over the feasible offsets along it."""
    w_o, h_o = dims
    if w_o > bbox.w or h_o > bbox.h:
        raise ValueError(f"dims {dims} exceed bbox {bbox.w}x{bbox.h}")
    edge = int(rng.integers(4))
    if edge == _LEFT:
        x, y = 0, int(rng.integers(bbox.h - h_o + 1))
    elif edge == _TOP:
        x, y = int(rng.integers(bbox.w - w_o + 1)), 0
    elif edge == _RIGHT:
        x, y = bbox.w - w_o, int(rng.integers(bbox.h - h_o + 1))
    else:
        x, y = int(rng.integers(bbox.w - w_o + 1)), bbox.h - h_o
    return Rect(x, y, w_o, h_o)


def sample_rect(rng: np.random.Generator, bbox: BoundingBox,
                rs_range=DEFAULT_RS_RANGE, ra_range=DEFAULT_RA_RANGE,
                max_retries: int = DEFAULT_MAX_RETRIES) -> RectSample:
    """Sample parameters and a placed rectangle for one instance.

    Infeasible (r_s, r_a) draws are resampled up to ``max_retries`` times;
    if every draw is infeasible the last dims are clamped to the box and the
    sample is flagged as clamped.
    """
    validate_ranges(rs_range, ra_range)
    params = sample_params(rng, rs_range, ra_range)
    dims = rect_dims(bbox, params)
    retries = 0
    while not dims.feasible and retries < max_retries:
        params = sample_params(rng, rs_range, ra_range)
        dims = rect_dims(bbox, params)
        retries += 1
    clamped = not dims.feasible
    w_o = min(dims.w, bbox.w)
    h_o = min(dims.h, bbox.h)
    rect = place_rect(rng, bbox, (w_o, h_o))
    return RectSample(rect, params, clamped)
