"""Verification suite for the deformable kernels.

Every check pits the kernels against an independent route: standard
convolution via scipy, average RoI pooling via plain slicing, analytic
gradients via central finite differences, plus the hand-derived worked
examples. ``run_all_checks`` powers the ``dcn-check`` CLI subcommand.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np
from scipy.signal import correlate2d

from . import dcn


# ---------------------------------------------------------------------------
# independent oracles


def standard_conv2d(x: np.ndarray, w: np.ndarray, stride=1, padding=0) -> np.ndarray:
    """Plain strided correlation with zero padding, via scipy."""
    sh, sw = dcn._pair(stride)
    ph, pw = dcn._pair(padding)
    c_out = w.shape[0]
    xp = np.pad(x, ((0, 0), (ph, ph), (pw, pw)))
    planes = []
    for o in range(c_out):
        acc = sum(correlate2d(xp[c], w[o, c], mode="valid") for c in range(x.shape[0]))
        planes.append(acc[::sh, ::sw])
    return np.stack(planes)


def average_roi_pool(x: np.ndarray, box, bins) -> np.ndarray:
    """Plain average pooling over the integer-lattice bin partition."""
    bx, by, bw, bh = box
    ph, pw = bins
    out = np.zeros((x.shape[0], ph, pw))
    for bi in range(ph):
        r0 = int(np.floor(by + bi * bh / ph + 0.5))
        r1 = int(np.floor(by + (bi + 1) * bh / ph + 0.5))
        for bj in range(pw):
            c0 = int(np.floor(bx + bj * bw / pw + 0.5))
            c1 = int(np.floor(bx + (bj + 1) * bw / pw + 0.5))
            if r1 > r0 and c1 > c0:
                out[:, bi, bj] = x[:, r0:r1, c0:c1].mean(axis=(1, 2))
    return out


# ---------------------------------------------------------------------------
# finite-difference gradient checking


class GradCheckReport(NamedTuple):
    ok: bool
    max_rel_err: float
    worst: tuple[str, int]  # (input name, flat coordinate)
    per_input: dict[str, float]


def grad_check(f: Callable[[dict], float], point: dict[str, np.ndarray],
               analytic: dict[str, np.ndarray], eps: float = 1e-5,
               tol: float = 1e-4) -> GradCheckReport:
    """Compare analytic gradients against central differences, coordinate by
    coordinate. Relative error uses max(|analytic|, |fd|, 1e-4) as scale."""
    worst = ("", -1)
    worst_err = 0.0
    per_input: dict[str, float] = {}
    for name, base in point.items():
        grad = analytic[name]
        if grad.shape != base.shape:
            raise ValueError(f"gradient {name} shape {grad.shape} != {base.shape}")
        max_err = 0.0
        for idx in range(base.size):
            orig = base.flat[idx]
            base.flat[idx] = orig + eps
            f_plus = f(point)
            base.flat[idx] = orig - eps
            f_minus = f(point)
            base.flat[idx] = orig
            fd = (f_plus - f_minus) / (2 * eps)
            a = grad.flat[idx]
            rel = abs(a - fd) / max(abs(a), abs(fd), 1e-4)
            if rel > max_err:
                max_err = rel
            if rel > worst_err:
                worst_err = rel
                worst = (name, idx)
        per_input[name] = max_err
    return GradCheckReport(worst_err < tol, worst_err, worst, per_input)


# ---------------------------------------------------------------------------
# randomized case generators


def _nonkink_offsets(rng: np.random.Generator, shape) -> np.ndarray:
    """Offsets bounded away from integers so +/-eps stays inside one bilinear cell."""
    mag = rng.uniform(0.05, 0.45, size=shape)
    sign = rng.choice([-1.0, 1.0], size=shape)
    whole = rng.integers(-1, 2, size=shape)
    return whole + sign * mag


def random_conv_case(rng: np.random.Generator, zero_offsets: bool):
    c_in = int(rng.integers(1, 4))
    c_out = int(rng.integers(1, 4))
    kh, kw = [(1, 1), (3, 3), (3, 2)][int(rng.integers(3))]
    h = int(rng.integers(max(5, kh), 10))
    w = int(rng.integers(max(5, kw), 10))
    stride = int(rng.integers(1, 3))
    padding = int(rng.integers(0, 2))
    oh = (h + 2 * padding - kh) // stride + 1
    ow = (w + 2 * padding - kw) // stride + 1
    x = rng.standard_normal((c_in, h, w))
    wt = rng.standard_normal((c_out, c_in, kh, kw))
    shape = (2 * kh * kw, oh, ow)
    off = np.zeros(shape) if zero_offsets else _nonkink_offsets(rng, shape)
    return x, wt, off, stride, padding


def random_pool_case(rng: np.random.Generator, zero_offsets: bool):
    c = int(rng.integers(1, 3))
    h = int(rng.integers(6, 10))
    w = int(rng.integers(6, 10))
    x = rng.standard_normal((c, h, w))
    bins = (int(rng.integers(1, 4)), int(rng.integers(1, 4)))
    bx = float(rng.uniform(0, w / 3))
    by = float(rng.uniform(0, h / 3))
    bw = float(rng.uniform(bins[1], w - bx))
    bh = float(rng.uniform(bins[0], h - by))
    off = np.zeros((2, *bins)) if zero_offsets else _nonkink_offsets(rng, (2, *bins))
    return x, dcn.RoI((bx, by, bw, bh), bins, off)


# ---------------------------------------------------------------------------
# the check battery


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str = ""


def _worked_examples() -> list[CheckResult]:
    results = []

    plane = np.array([[1.0, 2.0], [3.0, 4.0]])
    got = dcn.bilinear_sample(plane, 0.5, 0.5)
    results.append(CheckResult("bilinear center of 2x2", got == 2.5, f"got {got}"))
    got = dcn.bilinear_sample(plane, 0.0, 0.0)
    results.append(CheckResult("bilinear at lattice point", got == 1.0, f"got {got}"))
    got = dcn.bilinear_sample(plane, 0.0, -0.5)
    results.append(CheckResult("bilinear half outside", got == 0.5, f"got {got}"))

    # 1x1 filter of weight 2 on a column ramp; +0.5 column offset at center
    x = np.tile(np.arange(3.0), (3, 1))[None]
    w = np.full((1, 1, 1, 1), 2.0)
    off = np.zeros((2, 3, 3))
    off[1, 1, 1] = 0.5
    y = dcn.deform_conv2d_forward(x, w, off)
    results.append(CheckResult("ramp-offset conv center", y[0, 1, 1] == 3.0,
                               f"got {y[0, 1, 1]}"))

    x = np.arange(16.0).reshape(1, 4, 4)
    pooled = dcn.deform_roi_pool_forward(x, dcn.RoI.zero_offsets((0, 0, 4, 4), (2, 2)))
    want = np.array([[2.5, 4.5], [10.5, 12.5]])
    ok = np.array_equal(pooled.output[0], want) and not pooled.empty_bins.any()
    results.append(CheckResult("quadrant pooling 4x4", ok, f"got {pooled.output[0].tolist()}"))

    pooled = dcn.deform_roi_pool_forward(x, dcn.RoI.zero_offsets((0, 0, 4, 4), (1, 1)))
    results.append(CheckResult("global average pooling", pooled.output[0, 0, 0] == 7.5,
                               f"got {pooled.output[0, 0, 0]}"))
    return results


def _constant_field_checks(rng: np.random.Generator) -> list[CheckResult]:
    results = []
    c = 3.7
    x = np.full((2, 8, 8), c)
    w = rng.standard_normal((1, 2, 3, 3))
    # interior offsets: all sampled positions stay at least 1 px inside
    off = rng.uniform(-0.9, 0.9, size=(18, 6, 6))
    y = dcn.deform_conv2d_forward(x, w, off, stride=1, padding=0)
    inner = y[:, 1:-1, 1:-1]
    err = float(np.abs(inner - c * w.sum()).max())
    results.append(CheckResult("constant field conv = c * weight sum", err < 1e-12,
                               f"max err {err:.2e}"))

    xp = np.full((1, 8, 8), c)
    roi = dcn.RoI((2.0, 2.0, 4.0, 4.0), (2, 2), rng.uniform(-0.9, 0.9, size=(2, 2, 2)))
    pooled = dcn.deform_roi_pool_forward(xp, roi)
    err = float(np.abs(pooled.output - c).max())
    results.append(CheckResult("constant field pooling = c", err < 1e-12,
                               f"max err {err:.2e}"))
    return results


def _zero_offset_conv_check(rng: np.random.Generator, cases: int) -> CheckResult:
    worst = 0.0
    for _ in range(cases):
        x, w, off, stride, padding = random_conv_case(rng, zero_offsets=True)
        got = dcn.deform_conv2d_forward(x, w, off, stride, padding)
        want = standard_conv2d(x, w, stride, padding)
        worst = max(worst, float(np.abs(got - want).max()))
    return CheckResult(f"zero-offset conv == standard conv ({cases} cases)",
                       worst < 1e-12, f"max abs err {worst:.2e}")


def _zero_offset_pool_check(rng: np.random.Generator, cases: int) -> CheckResult:
    worst = 0.0
    for _ in range(cases):
        x, roi = random_pool_case(rng, zero_offsets=True)
        got = dcn.deform_roi_pool_forward(x, roi).output
        want = average_roi_pool(x, roi.box, roi.bins)
        worst = max(worst, float(np.abs(got - want).max()))
    return CheckResult(f"zero-offset pooling == average pooling ({cases} cases)",
                       worst < 1e-12, f"max abs err {worst:.2e}")


def _linearity_check(rng: np.random.Generator) -> CheckResult:
    x1, w, off, stride, padding = random_conv_case(rng, zero_offsets=False)
    x2 = rng.standard_normal(x1.shape)
    a, b = 1.7, -0.6
    lhs = dcn.deform_conv2d_forward(a * x1 + b * x2, w, off, stride, padding)
    rhs = a * dcn.deform_conv2d_forward(x1, w, off, stride, padding) \
        + b * dcn.deform_conv2d_forward(x2, w, off, stride, padding)
    err = float(np.abs(lhs - rhs).max())
    w2 = rng.standard_normal(w.shape)
    lhs_w = dcn.deform_conv2d_forward(x1, a * w + b * w2, off, stride, padding)
    rhs_w = a * dcn.deform_conv2d_forward(x1, w, off, stride, padding) \
        + b * dcn.deform_conv2d_forward(x1, w2, off, stride, padding)
    err = max(err, float(np.abs(lhs_w - rhs_w).max()))
    return CheckResult("linearity in X and W", err < 1e-12, f"max abs err {err:.2e}")


def _translation_check(rng: np.random.Generator) -> CheckResult:
    x = rng.standard_normal((2, 9, 9))
    w = rng.standard_normal((2, 2, 3, 3))
    di, dj = 2, 1
    shifted = np.zeros_like(x)
    shifted[:, di:, dj:] = x[:, :-di, :-dj]
    off = np.zeros((18, 7, 7))
    y = dcn.deform_conv2d_forward(x, w, off)
    ys = dcn.deform_conv2d_forward(shifted, w, off)
    err = float(np.abs(ys[:, di:, dj:] - y[:, : 7 - di, : 7 - dj]).max())
    return CheckResult("translation equivariance (zero offsets)", err < 1e-12,
                       f"max abs err {err:.2e}")


def conv_grad_case(rng: np.random.Generator, inject_fault: bool = False) -> GradCheckReport:
    x, w, off, stride, padding = random_conv_case(rng, zero_offsets=False)
    d_y = rng.standard_normal(
        dcn.deform_conv2d_forward(x, w, off, stride, padding).shape
    )

    def loss(p):
        return float((dcn.deform_conv2d_forward(p["x"], p["w"], p["off"],
                                                stride, padding) * d_y).sum())

    d_x, d_w, d_off = dcn.deform_conv2d_backward(x, w, off, d_y, stride, padding)
    if inject_fault:
        d_w = d_w.copy()
        d_w.flat[0] += 1.0
    return grad_check(loss, {"x": x, "w": w, "off": off},
                      {"x": d_x, "w": d_w, "off": d_off})


def pool_grad_case(rng: np.random.Generator) -> GradCheckReport:
    x, roi = random_pool_case(rng, zero_offsets=False)
    d_y = rng.standard_normal(dcn.deform_roi_pool_forward(x, roi).output.shape)

    def loss(p):
        r = dcn.RoI(roi.box, roi.bins, p["off"])
        return float((dcn.deform_roi_pool_forward(p["x"], r).output * d_y).sum())

    d_x, d_off = dcn.deform_roi_pool_backward(x, roi, d_y)
    return grad_check(loss, {"x": x, "off": roi.offsets},
                      {"x": d_x, "off": d_off})


def _gradient_checks(rng: np.random.Generator, conv_cases: int, pool_cases: int,
                     inject_fault: bool) -> list[CheckResult]:
    results = []
    worst = 0.0
    ok = True
    for i in range(conv_cases):
        rep = conv_grad_case(rng, inject_fault=inject_fault and i == 0)
        worst = max(worst, rep.max_rel_err)
        ok = ok and rep.ok
    results.append(CheckResult(f"conv gradients vs finite differences ({conv_cases} cases)",
                               ok, f"max rel err {worst:.2e}"))
    worst = 0.0
    ok = True
    for _ in range(pool_cases):
        rep = pool_grad_case(rng)
        worst = max(worst, rep.max_rel_err)
        ok = ok and rep.ok
    results.append(CheckResult(f"pooling gradients vs finite differences ({pool_cases} cases)",
                               ok, f"max rel err {worst:.2e}"))
    return results


def run_all_checks(seed: int = 0, equivalence_cases: int = 100, conv_grad_cases: int = 10,
                   pool_grad_cases: int = 10, inject_fault: bool = False) -> list[CheckResult]:
    """Full battery; ``inject_fault`` corrupts one analytic gradient so the
    harness itself can be shown to catch bad gradients."""
    rng = np.random.default_rng(seed)
    results = _worked_examples()
    results.extend(_constant_field_checks(rng))
    results.append(_zero_offset_conv_check(rng, equivalence_cases))
    results.append(_zero_offset_pool_check(rng, equivalence_cases))
    results.append(_linearity_check(rng))
    results.append(_translation_check(rng))
    results.extend(_gradient_checks(rng, conv_grad_cases, pool_grad_cases, inject_fault))
    return results
