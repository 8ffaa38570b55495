"""Reference deformable convolution and deformable RoI pooling.

Double-precision numpy implementations meant for verification rather than
speed. The deformable convolution displaces each filter tap by a real-valued
per-output-position offset; deformable RoI pooling displaces every sample of
a bin by the bin's offset. Fractional positions are read with bilinear
interpolation over zero padding, so zero offsets reduce exactly to the
standard operators.

Layout conventions:

* features ``X``: (channels, height, width)
* filters ``W``: (out_channels, in_channels, kh, kw)
* conv offsets: (2 * kh * kw, out_h, out_w); channel 2*t is the row offset
  of tap ``t`` (row-major over the kh x kw grid) and 2*t + 1 its column
  offset
* RoI offsets: (2, bins_h, bins_w); channel 0 rows, channel 1 columns

Gradients follow the bilinear kernel's piecewise-linear derivative, with the
right-derivative convention at integer (kink) positions.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np


def _pair(v) -> tuple[int, int]:
    if isinstance(v, (tuple, list)):
        a, b = v
        return int(a), int(b)
    return int(v), int(v)


def _round_half_up(v: float) -> int:
    return int(np.floor(v + 0.5))


# ---------------------------------------------------------------------------
# bilinear sampling


def bilinear_sample(plane: np.ndarray, row: float, col: float) -> float:
    """Bilinear read of a 2-D plane at a real position, zero outside."""
    h, w = plane.shape
    r0, c0 = int(np.floor(row)), int(np.floor(col))
    dr, dc = row - r0, col - c0
    total = 0.0
    for ri, ci, wt in (
        (r0, c0, (1 - dr) * (1 - dc)),
        (r0, c0 + 1, (1 - dr) * dc),
        (r0 + 1, c0, dr * (1 - dc)),
        (r0 + 1, c0 + 1, dr * dc),
    ):
        if 0 <= ri < h and 0 <= ci < w:
            total += wt * float(plane[ri, ci])
    return total


class _BilinearParts(NamedTuple):
    """Corner data shared by forward evaluation and all gradients."""

    value: np.ndarray        # (C, *S) interpolated values
    corner_vals: tuple       # 4 x (C, *S) zero-padded corner reads
    corner_idx: tuple        # 4 x (rows, cols) clipped integer indices
    corner_valid: tuple      # 4 x (*S,) in-bounds masks
    weights: tuple           # 4 x (*S,) bilinear weights
    dc: np.ndarray
    dr: np.ndarray


def _bilinear_parts(x: np.ndarray, rows: np.ndarray, cols: np.ndarray) -> _BilinearParts:
    c_, h, w = x.shape
    r0 = np.floor(rows).astype(np.int64)
    c0 = np.floor(cols).astype(np.int64)
    dr = rows - r0
    dc = cols - c0
    weights = ((1 - dr) * (1 - dc), (1 - dr) * dc, dr * (1 - dc), dr * dc)
    corner_vals, corner_idx, corner_valid = [], [], []
    for ri, ci in ((r0, c0), (r0, c0 + 1), (r0 + 1, c0), (r0 + 1, c0 + 1)):
        valid = (ri >= 0) & (ri < h) & (ci >= 0) & (ci < w)
        rc = np.clip(ri, 0, h - 1)
        cc = np.clip(ci, 0, w - 1)
        corner_vals.append(x[:, rc, cc] * valid)
        corner_idx.append((rc, cc))
        corner_valid.append(valid)
    value = sum(wt * cv for wt, cv in zip(weights, corner_vals))
    return _BilinearParts(value, tuple(corner_vals), tuple(corner_idx),
                          tuple(corner_valid), weights, dc, dr)


def _position_grads(parts: _BilinearParts) -> tuple[np.ndarray, np.ndarray]:
    """d(value)/d(row) and d(value)/d(col), shape (C, *S)."""
    v00, v01, v10, v11 = parts.corner_vals
    d_row = (1 - parts.dc) * (v10 - v00) + parts.dc * (v11 - v01)
    d_col = (1 - parts.dr) * (v01 - v00) + parts.dr * (v11 - v10)
    return d_row, d_col


def _scatter_position_grad(dx: np.ndarray, parts: _BilinearParts, d_value: np.ndarray) -> None:
    """Accumulate d(loss)/dX given d(loss)/d(value), shape (C, *S)."""
    c_ = dx.shape[0]
    chan = np.arange(c_).reshape((c_,) + (1,) * (d_value.ndim - 1))
    for wt, (rc, cc), valid in zip(parts.weights, parts.corner_idx, parts.corner_valid):
        np.add.at(dx, (chan, rc[None], cc[None]), d_value * (wt * valid))


# ---------------------------------------------------------------------------
# deformable convolution


def _conv_geometry(x, w, offsets, stride, padding):
    if x.ndim != 3:
        raise ValueError(f"input must be (channels, h, w), got {x.ndim} dims")
    if w.ndim != 4:
        raise ValueError(f"filter must be (out_ch, in_ch, kh, kw), got {w.ndim} dims")
    c_in, h, wid = x.shape
    c_out, c_in_w, kh, kw = w.shape
    if c_in_w != c_in:
        raise ValueError(f"filter in_channels {c_in_w} != input channels {c_in}")
    sh, sw = _pair(stride)
    ph, pw = _pair(padding)
    oh = (h + 2 * ph - kh) // sh + 1
    ow = (wid + 2 * pw - kw) // sw + 1
    if oh < 1 or ow < 1:
        raise ValueError(f"output grid {oh}x{ow} is empty for input {h}x{wid}")
    k = kh * kw
    if offsets.shape != (2 * k, oh, ow):
        raise ValueError(
            f"offsets shape {offsets.shape} != (2*taps, out_h, out_w) = {(2 * k, oh, ow)}"
        )
    return (sh, sw), (ph, pw), (oh, ow)


def _conv_positions(x, w, offsets, stride, padding):
    (sh, sw), (ph, pw), (oh, ow) = _conv_geometry(x, w, offsets, stride, padding)
    kh, kw = w.shape[2:]
    u = np.repeat(np.arange(kh), kw).astype(np.float64)
    v = np.tile(np.arange(kw), kh).astype(np.float64)
    base_r = (np.arange(oh) * sh - ph)[None, :, None] + u[:, None, None]
    base_c = (np.arange(ow) * sw - pw)[None, None, :] + v[:, None, None]
    rows = base_r + offsets[0::2]
    cols = base_c + offsets[1::2]
    return rows, cols, (oh, ow)


def deform_conv2d_forward(x: np.ndarray, w: np.ndarray, offsets: np.ndarray,
                          stride=1, padding=0) -> np.ndarray:
    """Deformable 2-D convolution (correlation orientation, zero padding)."""
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    offsets = np.asarray(offsets, dtype=np.float64)
    rows, cols, (oh, ow) = _conv_positions(x, w, offsets, stride, padding)
    sampled = _bilinear_parts(x, rows, cols).value  # (C_in, K, oh, ow)
    c_out = w.shape[0]
    y = w.reshape(c_out, -1) @ sampled.reshape(-1, oh * ow)
    return y.reshape(c_out, oh, ow)


def deform_conv2d_backward(x: np.ndarray, w: np.ndarray, offsets: np.ndarray,
                           d_y: np.ndarray, stride=1, padding=0):
    """Gradients of the deformable convolution: (dX, dW, dOffsets)."""
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    offsets = np.asarray(offsets, dtype=np.float64)
    d_y = np.asarray(d_y, dtype=np.float64)
    rows, cols, (oh, ow) = _conv_positions(x, w, offsets, stride, padding)
    c_out, c_in, kh, kw = w.shape
    k = kh * kw
    if d_y.shape != (c_out, oh, ow):
        raise ValueError(f"d_y shape {d_y.shape} != output shape {(c_out, oh, ow)}")

    parts = _bilinear_parts(x, rows, cols)
    sampled = parts.value  # (C_in, K, oh, ow)

    d_w = np.einsum("ckij,oij->ock", sampled, d_y, optimize=True)
    d_w = d_w.reshape(c_out, c_in, kh, kw)

    w_flat = w.reshape(c_out, c_in, k)
    d_sampled = np.einsum("ock,oij->ckij", w_flat, d_y, optimize=True)

    d_x = np.zeros_like(x)
    _scatter_position_grad(d_x, parts, d_sampled)

    d_row_val, d_col_val = _position_grads(parts)  # (C_in, K, oh, ow)
    d_offsets = np.zeros_like(offsets)
    d_offsets[0::2] = np.einsum("ckij,ckij->kij", d_sampled, d_row_val, optimize=True)
    d_offsets[1::2] = np.einsum("ckij,ckij->kij", d_sampled, d_col_val, optimize=True)
    return d_x, d_w, d_offsets


# ---------------------------------------------------------------------------
# deformable RoI pooling


@dataclass(frozen=True)
class RoI:
    """Real-valued box (x, y, w, h) in feature coordinates with a bin grid
    and one (row, col) offset per bin, shape (2, bins_h, bins_w)."""

    box: tuple[float, float, float, float]
    bins: tuple[int, int]
    offsets: np.ndarray

    def __post_init__(self):
        ph, pw = self.bins
        if ph < 1 or pw < 1:
            raise ValueError(f"bin grid must be >= 1x1, got {self.bins}")
        if self.box[2] <= 0 or self.box[3] <= 0:
            raise ValueError(f"RoI box must have positive size, got {self.box}")
        off = np.asarray(self.offsets, dtype=np.float64)
        if off.shape != (2, ph, pw):
            raise ValueError(f"offsets shape {off.shape} != (2, {ph}, {pw})")
        object.__setattr__(self, "offsets", off)

    @classmethod
    def zero_offsets(cls, box, bins) -> "RoI":
        return cls(tuple(float(v) for v in box), tuple(bins), np.zeros((2, *bins)))


def _bin_edges(start: float, extent: float, count: int) -> list[int]:
    return [_round_half_up(start + k * extent / count) for k in range(count + 1)]


def _bin_lattice(roi: RoI) -> list[list[tuple[np.ndarray, np.ndarray]]]:
    """Integer sample positions per bin: (rows, cols) flat arrays (may be empty)."""
    x, y, w, h = roi.box
    ph, pw = roi.bins
    row_edges = _bin_edges(y, h, ph)
    col_edges = _bin_edges(x, w, pw)
    lattice = []
    for bi in range(ph):
        row = []
        for bj in range(pw):
            rs = np.arange(row_edges[bi], row_edges[bi + 1])
            cs = np.arange(col_edges[bj], col_edges[bj + 1])
            rr, cc = np.meshgrid(rs, cs, indexing="ij")
            row.append((rr.ravel().astype(np.float64), cc.ravel().astype(np.float64)))
        lattice.append(row)
    return lattice


class RoiPoolResult(NamedTuple):
    output: np.ndarray      # (channels, bins_h, bins_w)
    empty_bins: np.ndarray  # (bins_h, bins_w) bool


def deform_roi_pool_forward(x: np.ndarray, roi: RoI) -> RoiPoolResult:
    """Average each bin's offset-displaced integer samples (bilinear reads).

    Degenerate bins with no lattice point output 0 and are flagged.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3:
        raise ValueError(f"input must be (channels, h, w), got {x.ndim} dims")
    ph, pw = roi.bins
    out = np.zeros((x.shape[0], ph, pw))
    empty = np.zeros((ph, pw), dtype=bool)
    lattice = _bin_lattice(roi)
    for bi in range(ph):
        for bj in range(pw):
            rr, cc = lattice[bi][bj]
            if rr.size == 0:
                empty[bi, bj] = True
                continue
            parts = _bilinear_parts(x, rr + roi.offsets[0, bi, bj], cc + roi.offsets[1, bi, bj])
            out[:, bi, bj] = parts.value.sum(axis=1) / rr.size
    return RoiPoolResult(out, empty)


def deform_roi_pool_backward(x: np.ndarray, roi: RoI, d_y: np.ndarray):
    """Gradients of deformable RoI pooling: (dX, dOffsets)."""
    x = np.asarray(x, dtype=np.float64)
    ph, pw = roi.bins
    if d_y.shape != (x.shape[0], ph, pw):
        raise ValueError(f"d_y shape {d_y.shape} != output shape {(x.shape[0], ph, pw)}")
    d_x = np.zeros_like(x)
    d_offsets = np.zeros_like(roi.offsets)
    lattice = _bin_lattice(roi)
    for bi in range(ph):
        for bj in range(pw):
            rr, cc = lattice[bi][bj]
            if rr.size == 0:
                continue
            parts = _bilinear_parts(x, rr + roi.offsets[0, bi, bj], cc + roi.offsets[1, bi, bj])
            d_value = np.repeat((d_y[:, bi, bj] / rr.size)[:, None], rr.size, axis=1)
            _scatter_position_grad(d_x, parts, d_value)
            d_row_val, d_col_val = _position_grads(parts)
            d_offsets[0, bi, bj] = float((d_value * d_row_val).sum())
            d_offsets[1, bi, bj] = float((d_value * d_col_val).sum())
    return d_x, d_offsets


# ---------------------------------------------------------------------------
# golden-file tensor serialization

_MAGIC = b"SSTN"


def save_tensor(arr: np.ndarray, path) -> None:
    """Write a tensor as: magic, uint32 ndim, uint32 dims, little-endian float64s."""
    arr = np.asarray(arr, dtype=np.float64)
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", arr.ndim))
        fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        fh.write(arr.astype("<f8").tobytes(order="C"))


def load_tensor(path) -> np.ndarray:
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise ValueError(f"{path}: not a tensor file")
        (ndim,) = struct.unpack("<I", fh.read(4))
        shape = struct.unpack(f"<{ndim}I", fh.read(4 * ndim))
        data = np.frombuffer(fh.read(), dtype="<f8")
    if data.size != int(np.prod(shape)):
        raise ValueError(f"{path}: payload has {data.size} values, shape {shape} "
                         f"needs {int(np.prod(shape))}")
    return data.reshape(shape).astype(np.float64)
