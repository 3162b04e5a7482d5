"""Line-protocol codecs: JSON envelopes, column-major RLE masks, base64 PNG.

Implemented from the protocol definition alone; this package deliberately
shares no code with any client so it can stand in for a model server
written in any language.
"""

from __future__ import annotations

import base64
import io
import json

import numpy as np
from PIL import Image

PROTOCOL_VERSION = 1


class ProtocolViolation(Exception):
    """Request field missing, malformed, or out of contract."""


def dumps_line(obj: dict) -> str:
    return json.dumps(obj, separators=(",", ":"), sort_keys=True)


def decode_image(data) -> np.ndarray:
    if not isinstance(data, str):
        raise ProtocolViolation("image_png_b64 must be a base64 string")
    try:
        raw = base64.b64decode(data, validate=True)
        with Image.open(io.BytesIO(raw)) as im:
            return np.asarray(im.convert("RGB"), dtype=np.uint8)
    except ProtocolViolation:
        raise
    except Exception as exc:
        # error text must be reproducible (it lands in recorded fixtures), so
        # report the exception type rather than reprs with object addresses
        raise ProtocolViolation(
            f"undecodable image payload ({type(exc).__name__})"
        ) from exc


def encode_image(image: np.ndarray) -> str:
    buf = io.BytesIO()
    Image.fromarray(np.asarray(image, dtype=np.uint8), mode="RGB").save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def decode_rle(obj) -> np.ndarray:
    try:
        h, w = (int(v) for v in obj["size"])
        counts = list(obj["counts"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ProtocolViolation(f"malformed mask_rle: {exc}") from exc
    if any((not isinstance(c, int)) or isinstance(c, bool) or c < 0 for c in counts):
        raise ProtocolViolation("RLE counts must be non-negative integers")
    if sum(counts) != h * w:
        raise ProtocolViolation("RLE counts do not cover the mask")
    values = np.zeros(len(counts), dtype=bool)
    values[1::2] = True
    return np.repeat(values, counts).reshape((h, w), order="F")


def encode_rle(mask: np.ndarray) -> dict:
    h, w = mask.shape
    flat = np.asarray(mask, dtype=bool).ravel(order="F")
    if flat.size == 0:
        return {"size": [int(h), int(w)], "counts": []}
    edges = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.concatenate(([0], edges, [flat.size]))
    counts = np.diff(bounds).tolist()
    if flat[0]:
        counts.insert(0, 0)
    return {"size": [int(h), int(w)], "counts": [int(c) for c in counts]}
