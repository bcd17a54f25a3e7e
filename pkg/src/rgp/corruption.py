"""Synthesis of scanner/staining artifacts on RGB tiles.

Seven corruption kinds, each with a five-level severity ladder. The
ladders are fixed constants of this package so that behaviour is exactly
reproducible and testable against scalar per-pixel references:

    bright    additive shift of +16/+32/+48/+64/+80 per channel, clamped
    saturate  HSV saturation scaled by 1.3/1.6/1.9/2.2/2.5, clamped to 1
    hue       HSV hue rotated by 18/36/54/72/90 degrees, wrapped mod 360
    pixelate  box-average over 2/4/8/16/32-pixel blocks (partial at edges)
    defocus   normalized disk blur of radius 1/2/3/4/6, replicate borders
    motion    normalized 1-px line blur of length 5/9/13/17/21 at an
              axis/diagonal angle drawn from the seed, replicate borders
    mark      1..5 opaque pen strokes, 4 px wide, seeded placement

All operations are pure: the output is a function of the pixels and the
(kind, severity, seed) triple only. Dataset-level corruption derives one
seed per item from the run seed and the item id, so items can be
processed in any order or in parallel without changing the result.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import kernels
from .seeding import derive_seed

KINDS = ("bright", "saturate", "hue", "pixelate", "defocus", "motion", "mark")

# "mark" is synthesized and tested but left out of the default experiment
# mix, which sweeps the six photometric/optical artifact kinds.
DEFAULT_EXPERIMENT_KINDS = ("bright", "saturate", "hue", "pixelate", "defocus", "motion")

BRIGHTNESS_DELTAS = (16, 32, 48, 64, 80)
SATURATION_FACTORS = (1.3, 1.6, 1.9, 2.2, 2.5)
HUE_DEGREES = (18.0, 36.0, 54.0, 72.0, 90.0)
PIXELATE_BLOCKS = (2, 4, 8, 16, 32)
DEFOCUS_RADII = (1, 2, 3, 4, 6)
MOTION_LENGTHS = (5, 9, 13, 17, 21)
MARK_COUNTS = (1, 2, 3, 4, 5)

MOTION_ANGLES = (0.0, 45.0, 90.0, 135.0)
MARK_COLOR = (24, 24, 132)  # pathology pen blue
MARK_WIDTH = 4.0
# Strokes shorter than this fraction of the short image side are redrawn.
_MARK_MIN_SEP = 0.15


@dataclass
class ImagePatch:
    """Fixed-size 8-bit RGB raster plus its grid coordinate."""

    pixels: np.ndarray  # (height, width, 3) uint8
    grid_x: int = 0
    grid_y: int = 0

    def __post_init__(self):
        self.pixels = np.ascontiguousarray(self.pixels)
        if self.pixels.dtype != np.uint8:
            raise ValueError(f"pixels must be uint8, got {self.pixels.dtype}")
        if self.pixels.ndim != 3 or self.pixels.shape[2] != 3:
            raise ValueError(f"pixels must be (H, W, 3), got {self.pixels.shape}")

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def _replace(self, pixels: np.ndarray) -> "ImagePatch":
        return ImagePatch(pixels=pixels, grid_x=self.grid_x, grid_y=self.grid_y)


@dataclass(frozen=True)
class CorruptionSpec:
    kind: str
    severity: int
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown corruption kind {self.kind!r}")
        _check_severity(self.severity)


def _check_severity(severity: int) -> None:
    if not 1 <= severity <= 5:
        raise ValueError(f"severity must be in 1..5, got {severity}")


def apply_brightness(img: ImagePatch, severity: int) -> ImagePatch:
    _check_severity(severity)
    delta = BRIGHTNESS_DELTAS[severity - 1]
    shifted = img.pixels.astype(np.int16) + delta
    return img._replace(np.clip(shifted, 0, 255).astype(np.uint8))


def apply_saturation(img: ImagePatch, severity: int) -> ImagePatch:
    _check_severity(severity)
    factor = SATURATION_FACTORS[severity - 1]
    hsv = kernels.rgb_to_hsv(img.pixels)
    hsv[..., 1] = np.minimum(hsv[..., 1] * factor, 1.0)
    return img._replace(kernels.hsv_to_rgb(hsv))


def apply_hue(img: ImagePatch, severity: int) -> ImagePatch:
    _check_severity(severity)
    theta = HUE_DEGREES[severity - 1]
    hsv = kernels.rgb_to_hsv(img.pixels)
    hsv[..., 0] = (hsv[..., 0] + theta) % 360.0
    return img._replace(kernels.hsv_to_rgb(hsv))


def apply_pixelate(img: ImagePatch, severity: int) -> ImagePatch:
    _check_severity(severity)
    block = PIXELATE_BLOCKS[severity - 1]
    return img._replace(kernels.pixelate_blocks(img.pixels, block))


def disk_kernel(radius: int) -> np.ndarray:
    """Normalized disk: taps where dx^2 + dy^2 <= radius^2."""
    ax = np.arange(-radius, radius + 1)
    mask = (ax[:, None] ** 2 + ax[None, :] ** 2) <= radius * radius
    return mask.astype(np.float64) / mask.sum()


def line_kernel(length: int, angle: float) -> np.ndarray:
    """Normalized 1-pixel-wide line of ``length`` taps through the center.

    Angles: 0 horizontal, 90 vertical, 45 anti-diagonal (up-right in image
    coordinates), 135 main diagonal.
    """
    if angle == 0.0:
        k = np.ones((1, length))
    elif angle == 90.0:
        k = np.ones((length, 1))
    elif angle == 45.0:
        k = np.fliplr(np.eye(length))
    elif angle == 135.0:
        k = np.eye(length)
    else:
        raise ValueError(f"unsupported motion angle {angle}")
    return k / k.sum()


def _blur(img: ImagePatch, kernel: np.ndarray) -> ImagePatch:
    chans = [
        kernels.conv2d_replicate(img.pixels[..., c].astype(np.float64), kernel)
        for c in range(3)
    ]
    out = np.clip(np.rint(np.stack(chans, axis=-1)), 0, 255).astype(np.uint8)
    return img._replace(out)


def apply_defocus(img: ImagePatch, severity: int) -> ImagePatch:
    _check_severity(severity)
    return _blur(img, disk_kernel(DEFOCUS_RADII[severity - 1]))


def apply_motion(img: ImagePatch, severity: int, seed: int = 0) -> ImagePatch:
    _check_severity(severity)
    rng = np.random.default_rng(seed)
    angle = MOTION_ANGLES[int(rng.integers(0, len(MOTION_ANGLES)))]
    return _blur(img, line_kernel(MOTION_LENGTHS[severity - 1], angle))


def stroke_endpoints(
    rng: np.random.Generator, height: int, width: int
) -> tuple[float, float, float, float]:
    """Draw one stroke's endpoints: x0, y0, x1, y1 uniform over the raster.

    Redraws (up to 100 times) while the endpoints are closer than
    0.15 * min(height, width), so strokes have a useful minimum length.
    """
    min_sep = _MARK_MIN_SEP * min(height, width)
    for _ in range(100):
        x0 = rng.uniform(0.0, width - 1.0)
        y0 = rng.uniform(0.0, height - 1.0)
        x1 = rng.uniform(0.0, width - 1.0)
        y1 = rng.uniform(0.0, height - 1.0)
        if np.hypot(x1 - x0, y1 - y0) >= min_sep:
            break
    return x0, y0, x1, y1


def segment_distance(
    px: np.ndarray, py: np.ndarray, x0: float, y0: float, x1: float, y1: float
) -> np.ndarray:
    """Distance from points (px, py) to the segment (x0,y0)-(x1,y1)."""
    dx, dy = x1 - x0, y1 - y0
    denom = dx * dx + dy * dy
    if denom == 0.0:
        return np.hypot(px - x0, py - y0)
    t = np.clip(((px - x0) * dx + (py - y0) * dy) / denom, 0.0, 1.0)
    return np.hypot(px - (x0 + t * dx), py - (y0 + t * dy))


def apply_mark(img: ImagePatch, severity: int, seed: int = 0) -> ImagePatch:
    _check_severity(severity)
    rng = np.random.default_rng(seed)
    h, w = img.height, img.width
    py, px = np.mgrid[0:h, 0:w].astype(np.float64)
    out = img.pixels.copy()
    for _ in range(MARK_COUNTS[severity - 1]):
        x0, y0, x1, y1 = stroke_endpoints(rng, h, w)
        mask = segment_distance(px, py, x0, y0, x1, y1) <= MARK_WIDTH / 2.0
        out[mask] = MARK_COLOR
    return img._replace(out)


def apply_corruption(img: ImagePatch, spec: CorruptionSpec) -> ImagePatch:
    if spec.kind == "bright":
        return apply_brightness(img, spec.severity)
    if spec.kind == "saturate":
        return apply_saturation(img, spec.severity)
    if spec.kind == "hue":
        return apply_hue(img, spec.severity)
    if spec.kind == "pixelate":
        return apply_pixelate(img, spec.severity)
    if spec.kind == "defocus":
        return apply_defocus(img, spec.severity)
    if spec.kind == "motion":
        return apply_motion(img, spec.severity, spec.seed)
    if spec.kind == "mark":
        return apply_mark(img, spec.severity, spec.seed)
    raise ValueError(f"unknown corruption kind {spec.kind!r}")


@dataclass(frozen=True)
class ManifestEntry:
    item_id: str
    kind: str
    severity: int
    seed: int


def choose_corrupted_ids(item_ids: Sequence[str], fraction: float, seed: int) -> set[str]:
    """Pick round(fraction * N) ids without replacement via seeded shuffle."""
    if not 0.0 <= fraction <= 1.0:
        raise ValueError(f"fraction must be in [0, 1], got {fraction}")
    n_pick = int(round(fraction * len(item_ids)))
    perm = np.random.default_rng(seed).permutation(len(item_ids))
    return {item_ids[i] for i in perm[:n_pick]}


def corruption_for_item(
    item_id: str,
    kinds: Sequence[str],
    severity_range: tuple[int, int],
    seed: int,
) -> CorruptionSpec:
    """Per-item corruption choice, a pure function of (seed, item_id)."""
    item_seed = derive_seed(seed, item_id)
    rng = np.random.default_rng(item_seed)
    ordered = sorted(kinds)
    kind = ordered[int(rng.integers(0, len(ordered)))]
    lo, hi = severity_range
    severity = int(rng.integers(lo, hi + 1))
    return CorruptionSpec(kind=kind, severity=severity, seed=item_seed)


def corrupt_dataset(
    items: Sequence[tuple[str, ImagePatch]],
    fraction: float,
    kinds: Iterable[str],
    severity_range: tuple[int, int] = (1, 5),
    seed: int = 0,
) -> tuple[list[tuple[str, ImagePatch]], list[ManifestEntry]]:
    """Corrupt a seeded fraction of (id, image) items.

    Each selected item receives one kind drawn uniformly from ``kinds``
    and one severity uniform over ``severity_range`` (inclusive).
    Unselected items are returned unchanged (same objects). The manifest
    lists every corrupted item, sorted by id.
    """
    kinds = tuple(kinds)
    if not kinds:
        raise ValueError("kinds must not be empty")
    for k in kinds:
        if k not in KINDS:
            raise ValueError(f"unknown corruption kind {k!r}")
    lo, hi = severity_range
    _check_severity(lo)
    _check_severity(hi)

    ids = [item_id for item_id, _ in items]
    chosen = choose_corrupted_ids(ids, fraction, seed)
    out: list[tuple[str, ImagePatch]] = []
    manifest: list[ManifestEntry] = []
    for item_id, img in items:
        if item_id in chosen:
            spec = corruption_for_item(item_id, kinds, severity_range, seed)
            out.append((item_id, apply_corruption(img, spec)))
            manifest.append(ManifestEntry(item_id, spec.kind, spec.severity, spec.seed))
        else:
            out.append((item_id, img))
    manifest.sort(key=lambda entry: entry.item_id)
    return out, manifest
