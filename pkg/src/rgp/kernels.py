"""Per-pixel image kernels with two interchangeable backends.

The inner loops that dominate corruption synthesis (blur convolution, HSV
color conversion, block averaging for pixelation) are compiled with numba
when it is importable. Setting the environment variable ``RGP_NUMBA=0``
forces the vectorized pure-numpy fallback; the backend is chosen once at
import time and reported by :func:`active_backend`.

Both backends evaluate the same arithmetic expressions, so the color and
block kernels agree bit-for-bit. The convolution backends may differ in
float accumulation order only, which is bounded far below one 8-bit
intensity level for the kernels used here.

Conventions shared by both backends:

* ``conv2d_replicate`` is a sliding dot product (cross-correlation) with
  edge-replicated borders. Every kernel used by the callers is symmetric
  under 180-degree rotation, so this equals true convolution.
* HSV uses hue in degrees [0, 360), saturation and value in [0, 1].
* Integer rounding is IEEE round-half-to-even everywhere.

``benchmarks/bench_kernels.py`` times the two backends against each other.
"""

from __future__ import annotations

import os

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

try:
    from numba import njit

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - environment without numba
    NUMBA_AVAILABLE = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def wrap(f):
            return f

        return wrap


USE_NUMBA = NUMBA_AVAILABLE and os.environ.get("RGP_NUMBA", "1") != "0"


def active_backend() -> str:
    """Name of the backend selected at import time."""
    return "numba" if USE_NUMBA else "numpy"


# ---------------------------------------------------------------------------
# numba backend
# ---------------------------------------------------------------------------


@njit(cache=True)
def _rint(x):
    # Round half to even, matching np.rint on the numpy path.
    f = np.floor(x)
    r = x - f
    if r > 0.5:
        return f + 1.0
    if r < 0.5:
        return f
    if f % 2.0 == 0.0:
        return f
    return f + 1.0


@njit(cache=True)
def _conv2d_replicate_nb(channel, kernel):
    h, w = channel.shape
    kh, kw = kernel.shape
    rh, rw = kh // 2, kw // 2
    out = np.empty((h, w), dtype=np.float64)
    for i in range(h):
        for j in range(w):
            acc = 0.0
            for a in range(kh):
                ii = i + a - rh
                if ii < 0:
                    ii = 0
                elif ii >= h:
                    ii = h - 1
                for b in range(kw):
                    jj = j + b - rw
                    if jj < 0:
                        jj = 0
                    elif jj >= w:
                        jj = w - 1
                    acc += kernel[a, b] * channel[ii, jj]
            out[i, j] = acc
    return out


@njit(cache=True)
def _rgb_to_hsv_nb(img):
    h, w = img.shape[0], img.shape[1]
    out = np.empty((h, w, 3), dtype=np.float64)
    for i in range(h):
        for j in range(w):
            r = img[i, j, 0] / 255.0
            g = img[i, j, 1] / 255.0
            b = img[i, j, 2] / 255.0
            mx = max(r, g, b)
            mn = min(r, g, b)
            d = mx - mn
            if d == 0.0:
                hue = 0.0
            elif mx == r:
                hue = 60.0 * (((g - b) / d) % 6.0)
            elif mx == g:
                hue = 60.0 * ((b - r) / d + 2.0)
            else:
                hue = 60.0 * ((r - g) / d + 4.0)
            out[i, j, 0] = hue
            out[i, j, 1] = 0.0 if mx == 0.0 else d / mx
            out[i, j, 2] = mx
    return out


@njit(cache=True)
def _hsv_to_rgb_nb(hsv):
    h, w = hsv.shape[0], hsv.shape[1]
    out = np.empty((h, w, 3), dtype=np.uint8)
    for i in range(h):
        for j in range(w):
            hue = hsv[i, j, 0]
            s = hsv[i, j, 1]
            v = hsv[i, j, 2]
            c = v * s
            hp = hue / 60.0
            x = c * (1.0 - abs(hp % 2.0 - 1.0))
            if hp < 1.0:
                r1, g1, b1 = c, x, 0.0
            elif hp < 2.0:
                r1, g1, b1 = x, c, 0.0
            elif hp < 3.0:
                r1, g1, b1 = 0.0, c, x
            elif hp < 4.0:
                r1, g1, b1 = 0.0, x, c
            elif hp < 5.0:
                r1, g1, b1 = x, 0.0, c
            else:
                r1, g1, b1 = c, 0.0, x
            m = v - c
            for ch, val in enumerate((r1 + m, g1 + m, b1 + m)):
                q = _rint(val * 255.0)
                if q < 0.0:
                    q = 0.0
                elif q > 255.0:
                    q = 255.0
                out[i, j, ch] = np.uint8(q)
    return out


@njit(cache=True)
def _pixelate_nb(img, block):
    h, w = img.shape[0], img.shape[1]
    out = np.empty_like(img)
    for c in range(3):
        for bi in range(0, h, block):
            i1 = min(bi + block, h)
            for bj in range(0, w, block):
                j1 = min(bj + block, w)
                acc = np.int64(0)
                for i in range(bi, i1):
                    for j in range(bj, j1):
                        acc += img[i, j, c]
                mean = acc / ((i1 - bi) * (j1 - bj))
                v = np.uint8(_rint(mean))
                for i in range(bi, i1):
                    for j in range(bj, j1):
                        out[i, j, c] = v
    return out


# ---------------------------------------------------------------------------
# numpy backend
# ---------------------------------------------------------------------------


def _conv2d_replicate_np(channel, kernel):
    rh, rw = kernel.shape[0] // 2, kernel.shape[1] // 2
    padded = np.pad(channel, ((rh, rh), (rw, rw)), mode="edge")
    windows = sliding_window_view(padded, kernel.shape)
    return np.einsum("ijab,ab->ij", windows, kernel)


def _rgb_to_hsv_np(img):
    scaled = img.astype(np.float64) / 255.0
    r, g, b = scaled[..., 0], scaled[..., 1], scaled[..., 2]
    mx = np.max(scaled, axis=-1)
    mn = np.min(scaled, axis=-1)
    d = mx - mn
    safe = np.where(d == 0.0, 1.0, d)
    hue_r = 60.0 * (((g - b) / safe) % 6.0)
    hue_g = 60.0 * ((b - r) / safe + 2.0)
    hue_b = 60.0 * ((r - g) / safe + 4.0)
    hue = np.where(mx == r, hue_r, np.where(mx == g, hue_g, hue_b))
    hue = np.where(d == 0.0, 0.0, hue)
    sat = np.where(mx == 0.0, 0.0, d / np.where(mx == 0.0, 1.0, mx))
    return np.stack([hue, sat, mx], axis=-1)


def _hsv_to_rgb_np(hsv):
    hue, s, v = hsv[..., 0], hsv[..., 1], hsv[..., 2]
    c = v * s
    hp = hue / 60.0
    x = c * (1.0 - np.abs(hp % 2.0 - 1.0))
    zero = np.zeros_like(c)
    conds = [hp < 1.0, hp < 2.0, hp < 3.0, hp < 4.0, hp < 5.0]
    r1 = np.select(conds, [c, x, zero, zero, x], default=c)
    g1 = np.select(conds, [x, c, c, x, zero], default=zero)
    b1 = np.select(conds, [zero, zero, x, c, c], default=x)
    m = v - c
    rgb = np.stack([r1 + m, g1 + m, b1 + m], axis=-1) * 255.0
    return np.clip(np.rint(rgb), 0.0, 255.0).astype(np.uint8)


def _pixelate_np(img, block):
    h, w = img.shape[0], img.shape[1]
    ri = np.arange(0, h, block)
    ci = np.arange(0, w, block)
    sums = np.add.reduceat(
        np.add.reduceat(img.astype(np.int64), ri, axis=0), ci, axis=1
    )
    rows = np.minimum(ri + block, h) - ri
    cols = np.minimum(ci + block, w) - ci
    counts = rows[:, None] * cols[None, :]
    means = sums / counts[..., None]
    up = np.repeat(np.repeat(means, rows, axis=0), cols, axis=1)
    return np.rint(up).astype(np.uint8)


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------


def conv2d_replicate(channel: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Sliding dot product of one float64 channel with a 2-D kernel."""
    ch = np.ascontiguousarray(channel, dtype=np.float64)
    k = np.ascontiguousarray(kernel, dtype=np.float64)
    if USE_NUMBA:
        return _conv2d_replicate_nb(ch, k)
    return _conv2d_replicate_np(ch, k)


def rgb_to_hsv(img: np.ndarray) -> np.ndarray:
    """uint8 (H, W, 3) RGB to float64 (H, W, 3) HSV."""
    data = np.ascontiguousarray(img, dtype=np.uint8)
    if USE_NUMBA:
        return _rgb_to_hsv_nb(data)
    return _rgb_to_hsv_np(data)


def hsv_to_rgb(hsv: np.ndarray) -> np.ndarray:
    """float64 (H, W, 3) HSV back to uint8 RGB, round half to even."""
    data = np.ascontiguousarray(hsv, dtype=np.float64)
    if USE_NUMBA:
        return _hsv_to_rgb_nb(data)
    return _hsv_to_rgb_np(data)


def pixelate_blocks(img: np.ndarray, block: int) -> np.ndarray:
    """Replace each block x block tile with its rounded mean, per channel.

    Edge tiles may be partial; they are averaged over their actual pixels.
    """
    data = np.ascontiguousarray(img, dtype=np.uint8)
    if USE_NUMBA:
        return _pixelate_nb(data, block)
    return _pixelate_np(data, block)
