"""Context pixels, background noise patches, and histogram matching.

The context of an instance is the multiset of intensities inside its
bounding box whose mask value is 0, i.e. local background around the
target. Noise patches sampled from ship-free images are remapped so their
intensity distribution follows the context's, via classic quantile (CDF)
matching at native integer levels. CDF comparisons are done in integer
arithmetic so the mapping is bit-reproducible.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import ConfigError
from .raster import level_count


def context_pixels(sub: np.ndarray, mask_crop: np.ndarray) -> np.ndarray:
    """Multiset (1-D array) of sub-image values at mask-0 positions.

    An empty result is valid and means the target fills its whole box; the
    pipeline falls back to unmatched insertion in that case.
    """
    if sub.shape != mask_crop.shape:
        raise ValueError(f"sub-image {sub.shape} and mask crop {mask_crop.shape} differ")
    return sub[mask_crop == 0].ravel()


def histogram_counts(values: np.ndarray, levels: int) -> np.ndarray:
    """Per-level counts of an intensity multiset."""
    values = np.asarray(values).ravel()
    if values.size and int(values.max()) >= levels:
        raise ValueError(f"value {int(values.max())} >= level count {levels}")
    return np.bincount(values, minlength=levels).astype(np.int64)


def matching_lut(patch_counts: np.ndarray, ref_counts: np.ndarray) -> np.ndarray:
    """Level-to-level lookup table for quantile matching.

    Input level v maps to the smallest reference level r with
    CDF_ref(r) >= CDF_patch(v). Comparing ``cum_ref * n_patch`` against
    ``cum_patch * n_ref`` keeps the quantile comparison exact.
    """
    patch_counts = np.asarray(patch_counts, dtype=np.int64)
    ref_counts = np.asarray(ref_counts, dtype=np.int64)
    if patch_counts.shape != ref_counts.shape:
        raise ValueError("patch and reference histograms have different level counts")
    n_patch = int(patch_counts.sum())
    n_ref = int(ref_counts.sum())
    if n_ref <= 0:
        raise ValueError("reference histogram is empty")
    cum_patch = np.cumsum(patch_counts)
    cum_ref = np.cumsum(ref_counts)
    lut = np.searchsorted(cum_ref * n_patch, cum_patch * n_ref, side="left")
    return np.minimum(lut, len(ref_counts) - 1)


def match_histogram(patch: np.ndarray, ref_counts: np.ndarray) -> np.ndarray:
    """Remap ``patch`` so its intensity distribution follows ``ref_counts``.

    The mapping is monotone non-decreasing and every output value lies in
    the reference support.
    """
    levels = len(ref_counts)
    lut = matching_lut(histogram_counts(patch, levels), ref_counts)
    return lut[patch].astype(patch.dtype)


def sample_noise_patch(rng: np.random.Generator, background_pool: list[np.ndarray],
                       dims: tuple[int, int]) -> np.ndarray:
    """Cut a (w_o, h_o) window from a uniformly chosen pool image.

    Only images large enough to contain the window are eligible; when none
    is, the largest pool image (by area, first on ties) is tiled to cover
    the requested size.
    """
    if not background_pool:
        raise ConfigError("background pool is empty")
    w_o, h_o = dims
    eligible = [im for im in background_pool if im.shape[0] >= h_o and im.shape[1] >= w_o]
    if eligible:
        src = eligible[int(rng.integers(len(eligible)))]
        top = int(rng.integers(src.shape[0] - h_o + 1))
        left = int(rng.integers(src.shape[1] - w_o + 1))
        return src[top : top + h_o, left : left + w_o].copy()
    areas = [im.shape[0] * im.shape[1] for im in background_pool]
    src = background_pool[int(np.argmax(areas))]
    reps_r = math.ceil(h_o / src.shape[0])
    reps_c = math.ceil(w_o / src.shape[1])
    return np.tile(src, (reps_r, reps_c))[:h_o, :w_o].copy()


def context_reference(sub: np.ndarray, mask_crop: np.ndarray) -> np.ndarray | None:
    """Histogram of the context pixel set, or None when the mask fills the box."""
    ctx = context_pixels(sub, mask_crop)
    if ctx.size == 0:
        return None
    return histogram_counts(ctx, level_count(sub))
