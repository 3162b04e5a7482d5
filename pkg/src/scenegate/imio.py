"""8-bit RGB image conventions, lossless PNG IO, and base64 wire encoding.

Images everywhere in this package are numpy arrays of shape (H, W, 3),
dtype uint8. PNG is the only on-disk and on-wire format so that every
bit-exactness invariant downstream is testable.
"""

from __future__ import annotations

import base64
import io
from pathlib import Path

import numpy as np
from PIL import Image as PILImage

from .errors import ProtocolError
from .util import atomic_write_bytes


def ensure_image(arr: np.ndarray) -> np.ndarray:
    a = np.asarray(arr)
    if a.ndim != 3 or a.shape[2] != 3 or a.dtype != np.uint8:
        raise ValueError(f"expected uint8 (H, W, 3) image, got {a.dtype} {a.shape}")
    return a


def png_bytes(image: np.ndarray) -> bytes:
    buf = io.BytesIO()
    PILImage.fromarray(ensure_image(image), mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def from_png_bytes(data: bytes) -> np.ndarray:
    try:
        with PILImage.open(io.BytesIO(data)) as im:
            return np.asarray(im.convert("RGB"), dtype=np.uint8)
    except Exception as exc:
        raise ProtocolError(f"undecodable PNG payload: {exc}") from exc


def save_png(path: str | Path, image: np.ndarray) -> None:
    atomic_write_bytes(path, png_bytes(image))


def load_png(path: str | Path) -> np.ndarray:
    with PILImage.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8)


def encode_png_b64(image: np.ndarray) -> str:
    return base64.b64encode(png_bytes(image)).decode("ascii")


def decode_png_b64(data: str) -> np.ndarray:
    try:
        raw = base64.b64decode(data, validate=True)
    except Exception as exc:
        raise ProtocolError(f"invalid base64 image payload: {exc}") from exc
    return from_png_bytes(raw)
