"""Model plugins: the contract real segmenters/inpainters implement, plus
classical stand-ins that run with no weights.

A plugin provides `segment(image, concept)` returning (mask, confidence)
pairs and/or `inpaint(image, mask)` returning an image. The server, not the
plugin, is responsible for protocol invariants (confidence clamping, mask
dimensions, out-of-mask pixel identity), so plugins can be sloppy without
corrupting the wire.
"""

from __future__ import annotations

from importlib import metadata

import numpy as np
from scipy import ndimage

COLOR_WORDS = {
    "red": (200, 40, 40),
    "green": (40, 180, 60),
    "blue": (50, 80, 210),
    "yellow": (220, 210, 50),
    "orange": (235, 140, 40),
    "purple": (140, 60, 180),
    "pink": (240, 130, 180),
    "black": (20, 20, 20),
    "white": (240, 240, 240),
    "gray": (128, 128, 128),
    "grey": (128, 128, 128),
    "brown": (130, 85, 40),
}


class Plugin:
    """Base plugin: override segment and/or inpaint."""

    name = "base"
    reentrant = True  # exclusive plugins are admitted one request at a time

    def segment(self, image: np.ndarray, concept: str) -> list[tuple[np.ndarray, float]]:
        raise NotImplementedError(f"plugin {self.name} does not segment")

    def inpaint(self, image: np.ndarray, mask: np.ndarray) -> np.ndarray:
        raise NotImplementedError(f"plugin {self.name} does not inpaint")


class ShapeSegmenterPlugin(Plugin):
    """Color/shape heuristic segmenter for flat-shaded scenes.

    The dominant quantized color is treated as background; every connected
    blob of non-background pixels is an instance candidate. Color words in
    the concept rank candidates by hue proximity; without color words all
    blobs are returned at a size-scaled confidence.
    """

    name = "shape"

    def __init__(self, quantize: int = 32, min_area: int = 4):
        self.quantize = quantize
        self.min_area = min_area

    def _background_mask(self, image: np.ndarray) -> np.ndarray:
        q = (image.astype(np.int32) // self.quantize)
        flat = q[:, :, 0] * 1_000_000 + q[:, :, 1] * 1_000 + q[:, :, 2]
        values, counts = np.unique(flat, return_counts=True)
        dominant = values[np.argmax(counts)]
        return flat == dominant

    def segment(self, image: np.ndarray, concept: str) -> list[tuple[np.ndarray, float]]:
        foreground = ~self._background_mask(image)
        labels, count = ndimage.label(foreground, structure=np.ones((3, 3), dtype=bool))
        colors = [COLOR_WORDS[w] for w in concept.lower().split() if w in COLOR_WORDS]
        out = []
        total = image.shape[0] * image.shape[1]
        for idx in range(1, count + 1):
            mask = labels == idx
            area = int(mask.sum())
            if area < self.min_area:
                continue
            mean = image[mask].astype(np.float64).mean(axis=0)
            if colors:
                dist = min(
                    float(np.abs(mean - np.asarray(c, dtype=np.float64)).mean())
                    for c in colors
                )
                confidence = 1.0 / (1.0 + dist / 64.0)
            else:
                confidence = 0.4 + 0.5 * min(1.0, 8.0 * area / total)
            out.append((mask, confidence))
        out.sort(key=lambda mc: (-mc[1], int(np.flatnonzero(mc[0].ravel())[0])))
        return out


class PatchInpainterPlugin(Plugin):
    """Onion-peel patch fill: each hole layer copies the best-matching patch
    center from a strided catalogue of fully-known patches. Deterministic and
    weight-free; meant as a stand-in, not a showcase.
    """

    name = "patch"
    reentrant = True

    def __init__(self, patch: int = 5, stride: int = 4, max_candidates: int = 1500):
        self.patch = patch
        self.stride = stride
        self.max_candidates = max_candidates

    def inpaint(self, image: np.ndarray, mask: np.ndarray) -> np.ndarray:
        if not mask.any():
            return image.copy()
        known = ~mask
        if not known.any():
            return image.copy()
        work = image.astype(np.float64)
        r = self.patch // 2
        catalogue, centers = self._catalogue(work, known)
        hole = mask.copy()
        while hole.any():
            ring = hole & ndimage.binary_dilation(~hole, np.ones((3, 3), dtype=bool))
            if not ring.any():
                ring = hole
            ys, xs = np.nonzero(ring)
            for y, x in zip(ys, xs):
                if catalogue is None:
                    work[y, x] = work[known].mean(axis=0)
                    continue
                patch, weight = self._window(work, ~hole, y, x, r)
                scores = ((catalogue - patch[None]) ** 2 * weight[None]).sum(axis=(1, 2, 3))
                best = int(np.argmin(scores))
                cy, cx = centers[best]
                work[y, x] = work[cy, cx]
            hole &= ~ring
        out = image.copy()
        out[mask] = np.clip(np.floor(work[mask] + 0.5), 0, 255).astype(np.uint8)
        return out

    def _catalogue(self, work: np.ndarray, known: np.ndarray):
        r = self.patch // 2
        h, w = known.shape
        solid = ndimage.minimum_filter(known.astype(np.uint8), size=self.patch) > 0
        ys, xs = np.nonzero(solid)
        keep = (ys >= r) & (ys < h - r) & (xs >= r) & (xs < w - r)
        ys, xs = ys[keep], xs[keep]
        step = max(1, self.stride)
        ys, xs = ys[::step], xs[::step]
        if ys.size == 0:
            return None, None
        if ys.size > self.max_candidates:
            idx = np.linspace(0, ys.size - 1, self.max_candidates).astype(int)
            ys, xs = ys[idx], xs[idx]
        patches = np.stack(
            [work[y - r : y + r + 1, x - r : x + r + 1] for y, x in zip(ys, xs)]
        )
        return patches, list(zip(ys.tolist(), xs.tolist()))

    def _window(self, work: np.ndarray, valid: np.ndarray, y: int, x: int, r: int):
        h, w = valid.shape
        patch = np.zeros((2 * r + 1, 2 * r + 1, 3))
        weight = np.zeros((2 * r + 1, 2 * r + 1, 1))
        y0, y1 = max(0, y - r), min(h, y + r + 1)
        x0, x1 = max(0, x - r), min(w, x + r + 1)
        patch[y0 - y + r : y1 - y + r, x0 - x + r : x1 - x + r] = work[y0:y1, x0:x1]
        weight[y0 - y + r : y1 - y + r, x0 - x + r : x1 - x + r, 0] = valid[y0:y1, x0:x1]
        return patch, weight


class ComboPlugin(Plugin):
    """Default: heuristic segmentation plus patch inpainting in one plugin."""

    name = "classical"

    def __init__(self):
        self._segmenter = ShapeSegmenterPlugin()
        self._inpainter = PatchInpainterPlugin()

    def segment(self, image, concept):
        return self._segmenter.segment(image, concept)

    def inpaint(self, image, mask):
        return self._inpainter.inpaint(image, mask)


_BUILTINS = {
    "shape": ShapeSegmenterPlugin,
    "patch": PatchInpainterPlugin,
    "classical": ComboPlugin,
}


def available_plugins() -> dict[str, type]:
    """Built-ins plus anything registered under the maskserve.plugins group."""
    registry = dict(_BUILTINS)
    try:
        entries = metadata.entry_points(group="maskserve.plugins")
    except Exception:
        entries = []
    for entry in entries:
        if entry.name not in registry:
            try:
                registry[entry.name] = entry.load()
            except Exception:
                continue
    return registry


def load_plugin(name: str) -> Plugin:
    registry = available_plugins()
    if name not in registry:
        raise KeyError(f"no plugin named {name!r}; available: {sorted(registry)}")
    return registry[name]()
