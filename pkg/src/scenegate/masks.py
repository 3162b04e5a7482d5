"""Binary-mask morphology, set algebra, and measures.

Masks are numpy bool arrays of shape (H, W); soft masks are float arrays
with values in [0, 1]. All operations are pure and never mutate inputs.
The dilation structuring element is the Chebyshev ball (a square of side
2r+1), which is separable and exactly testable against a brute-force
pixel-distance oracle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import DimensionMismatch, InvalidConfig

_STRUCTURE_8 = np.ones((3, 3), dtype=bool)
_STRUCTURE_4 = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


def as_mask(arr: np.ndarray) -> np.ndarray:
    m = np.asarray(arr)
    if m.ndim != 2:
        raise ValueError(f"expected 2-D mask, got shape {m.shape}")
    return m.astype(bool, copy=False)


def as_soft(arr: np.ndarray) -> np.ndarray:
    v = np.asarray(arr, dtype=np.float64)
    if v.ndim != 2:
        raise ValueError(f"expected 2-D soft mask, got shape {v.shape}")
    if v.size and (v.min() < 0.0 or v.max() > 1.0):
        raise ValueError("soft mask values must lie in [0, 1]")
    return v


def _check_same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise DimensionMismatch(f"mask shapes differ: {a.shape} vs {b.shape}")


def binarize(values: np.ndarray, threshold: float) -> np.ndarray:
    """Threshold a soft mask; a bit is set iff its value >= threshold."""
    if not (0.0 < threshold < 1.0):
        raise InvalidConfig(f"binarize threshold must be in (0, 1), got {threshold}")
    return as_soft(values) >= threshold


def dilate(mask: np.ndarray, radius: int) -> np.ndarray:
    """Chebyshev dilation: output bit set iff an input bit lies within `radius`."""
    if radius < 0:
        raise ValueError(f"dilation radius must be >= 0, got {radius}")
    m = as_mask(mask)
    if radius == 0 or not m.any():
        return m.copy()
    out = ndimage.maximum_filter(
        m.view(np.uint8), size=2 * int(radius) + 1, mode="constant", cval=0
    )
    return out.astype(bool)


def union(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a, b = as_mask(a), as_mask(b)
    _check_same_shape(a, b)
    return a | b


def intersect(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a, b = as_mask(a), as_mask(b)
    _check_same_shape(a, b)
    return a & b


def subtract(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Set difference a \\ b, i.e. a AND NOT b."""
    a, b = as_mask(a), as_mask(b)
    _check_same_shape(a, b)
    return a & ~b


def iou(a: np.ndarray, b: np.ndarray) -> float:
    """Intersection over union; 0.0 when both masks are empty."""
    a, b = as_mask(a), as_mask(b)
    _check_same_shape(a, b)
    inter = int(np.count_nonzero(a & b))
    uni = int(np.count_nonzero(a | b))
    return inter / uni if uni else 0.0


@dataclass(frozen=True)
class ConnectedComponent:
    """One maximal connected region of a binary mask."""

    mask: np.ndarray
    area: int
    bbox: tuple[int, int, int, int]  # (min_x, min_y, max_x, max_y), inclusive
    centroid: tuple[float, float]  # (x, y) in pixel coordinates
    min_index: int  # first set pixel in row-major raster order


def connected_components(mask: np.ndarray, connectivity: int = 8) -> list[ConnectedComponent]:
    """Deterministically ordered components (by first raster pixel)."""
    m = as_mask(mask)
    if connectivity == 8:
        structure = _STRUCTURE_8
    elif connectivity == 4:
        structure = _STRUCTURE_4
    else:
        raise InvalidConfig(f"connectivity must be 4 or 8, got {connectivity}")
    labels, count = ndimage.label(m, structure=structure)
    comps: list[ConnectedComponent] = []
    slices = ndimage.find_objects(labels)
    w = m.shape[1]
    for idx in range(1, count + 1):
        sl = slices[idx - 1]
        comp = np.zeros_like(m)
        region = labels[sl] == idx
        comp[sl] = region
        ys, xs = np.nonzero(region)
        ys = ys + sl[0].start
        xs = xs + sl[1].start
        comps.append(
            ConnectedComponent(
                mask=comp,
                area=int(ys.size),
                bbox=(int(xs.min()), int(ys.min()), int(xs.max()), int(ys.max())),
                centroid=(float(xs.mean()), float(ys.mean())),
                min_index=int((ys * w + xs).min()),
            )
        )
    comps.sort(key=lambda c: c.min_index)
    return comps


def gaussian_blur(mask: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian of the 0/1 raster with edge-clamp boundaries.

    sigma 0 returns the mask as a soft mask; output is clamped to [0, 1].
    """
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    m = as_mask(mask).astype(np.float64)
    if sigma == 0:
        return m
    out = ndimage.gaussian_filter(m, sigma=float(sigma), mode="nearest")
    return np.clip(out, 0.0, 1.0)
