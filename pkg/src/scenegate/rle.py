"""Run-length mask serialization.

Format follows the common COCO uncompressed convention: the mask is
flattened column-major and stored as alternating run counts, always
starting with the run of zeros (which may be 0). The JSON shape is

    {"size": [H, W], "counts": [int, ...]}

Round-trips are bit-exact; that property is load-bearing for fixtures
and golden tests, not just a nicety.
"""

from __future__ import annotations

import numpy as np

from .errors import ProtocolError


def encode(mask: np.ndarray) -> dict:
    m = np.asarray(mask)
    if m.ndim != 2:
        raise ValueError(f"expected 2-D mask, got shape {m.shape}")
    h, w = m.shape
    flat = m.astype(bool).ravel(order="F")
    if flat.size == 0:
        return {"size": [int(h), int(w)], "counts": []}
    # boundaries between runs, plus both ends
    edges = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.concatenate(([0], edges, [flat.size]))
    counts = np.diff(bounds).tolist()
    if flat[0]:
        counts.insert(0, 0)  # leading zero-run is mandatory
    return {"size": [int(h), int(w)], "counts": [int(c) for c in counts]}


def decode(obj: dict) -> np.ndarray:
    try:
        h, w = (int(v) for v in obj["size"])
        counts = list(obj["counts"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ProtocolError(f"malformed RLE object: {exc}") from exc
    if h < 0 or w < 0:
        raise ProtocolError(f"negative RLE size {obj['size']}")
    if any((not isinstance(c, int)) or isinstance(c, bool) or c < 0 for c in counts):
        raise ProtocolError("RLE counts must be non-negative integers")
    total = sum(counts)
    if total != h * w:
        raise ProtocolError(f"RLE counts sum to {total}, expected {h * w}")
    values = np.zeros(len(counts), dtype=bool)
    values[1::2] = True
    flat = np.repeat(values, counts)
    return flat.reshape((h, w), order="F")
