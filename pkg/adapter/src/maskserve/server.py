"""Protocol loop: one JSON line in, exactly one JSON line out.

The server is the lenient boundary: it clamps plugin confidences into
[0, 1], verifies mask dimensions, restores out-of-mask pixels on inpaint
results, and turns every failure (malformed request, plugin exception)
into an error reply with the echoed id rather than a dropped connection.
"""

from __future__ import annotations

import socketserver
import sys
import threading
from dataclasses import dataclass

import numpy as np

from .plugins import Plugin, load_plugin
from .protocol import (
    PROTOCOL_VERSION,
    ProtocolViolation,
    decode_image,
    decode_rle,
    dumps_line,
    encode_image,
    encode_rle,
)

import json


@dataclass
class AdapterConfig:
    transport: str = "stdio"  # "stdio" or "tcp:<host>:<port>"
    plugin: str = "classical"
    max_image_side: int = 1024

    def __post_init__(self):
        if self.max_image_side < 64:
            raise ValueError("max image side must be >= 64")


class RequestHandler:
    def __init__(self, plugin: Plugin, config: AdapterConfig):
        self.plugin = plugin
        self.config = config
        self._gate = threading.Lock() if not plugin.reentrant else None

    def handle_line(self, line: str) -> str:
        request_id = ""
        try:
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ProtocolViolation(f"request is not valid JSON: {exc}") from exc
            if not isinstance(obj, dict):
                raise ProtocolViolation("request must be a JSON object")
            rid = obj.get("id")
            request_id = rid if isinstance(rid, str) else ""
            if obj.get("v") != PROTOCOL_VERSION:
                raise ProtocolViolation(f"unsupported protocol version {obj.get('v')!r}")
            response = self._dispatch(obj, request_id)
        except ProtocolViolation as exc:
            response = {"v": PROTOCOL_VERSION, "id": request_id, "error": str(exc)}
        except Exception as exc:  # plugin failure is an error reply, never a crash
            response = {
                "v": PROTOCOL_VERSION,
                "id": request_id,
                "error": f"plugin failure: {exc}",
            }
        return dumps_line(response)

    def _dispatch(self, obj: dict, request_id: str) -> dict:
        op = obj.get("op")
        if op == "segment":
            return self._segment(obj, request_id)
        if op == "inpaint":
            return self._inpaint(obj, request_id)
        raise ProtocolViolation("unsupported op")

    def _check_size(self, image: np.ndarray) -> None:
        side = max(image.shape[:2])
        if side > self.config.max_image_side:
            raise ProtocolViolation(
                f"image side {side} exceeds configured maximum {self.config.max_image_side}"
            )

    def _admit(self):
        if self._gate is not None:
            return self._gate
        return _NullContext()

    def _segment(self, obj: dict, request_id: str) -> dict:
        image = decode_image(obj.get("image_png_b64"))
        self._check_size(image)
        concept = obj.get("concept")
        if not isinstance(concept, str) or not concept:
            raise ProtocolViolation("segment requires a non-empty concept")
        with self._admit():
            raw = self.plugin.segment(image, concept)
        instances = []
        for mask, confidence in raw:
            mask = np.asarray(mask, dtype=bool)
            if mask.shape != image.shape[:2]:
                # a stand-in plugin returning bad dims is a bug; do not forward it
                continue
            if not mask.any():
                continue
            instances.append(
                {
                    "rle": encode_rle(mask),
                    "confidence": float(np.clip(confidence, 0.0, 1.0)),
                }
            )
        return {"v": PROTOCOL_VERSION, "id": request_id, "instances": instances}

    def _inpaint(self, obj: dict, request_id: str) -> dict:
        image = decode_image(obj.get("image_png_b64"))
        self._check_size(image)
        if "mask_rle" not in obj:
            raise ProtocolViolation("inpaint requires mask_rle")
        mask = decode_rle(obj["mask_rle"])
        if mask.shape != image.shape[:2]:
            raise ProtocolViolation(
                f"mask shape {mask.shape} does not match image {image.shape[:2]}"
            )
        with self._admit():
            filled = self.plugin.inpaint(image, mask)
        filled = np.asarray(filled, dtype=np.uint8)
        if filled.shape != image.shape:
            raise ProtocolViolation("plugin returned an image with mismatched dimensions")
        out = filled.copy()
        out[~mask] = image[~mask]  # locality enforced here, not trusted to plugins
        return {"v": PROTOCOL_VERSION, "id": request_id, "image_png_b64": encode_image(out)}


class _NullContext:
    def __enter__(self):
        return self

    def __exit__(self, *exc):
        return False


def serve_stdio(handler: RequestHandler, stdin=None, stdout=None) -> None:
    stdin = stdin if stdin is not None else sys.stdin
    stdout = stdout if stdout is not None else sys.stdout
    for line in stdin:
        if not line.strip():
            continue
        stdout.write(handler.handle_line(line) + "\n")
        stdout.flush()


class _LineTCPHandler(socketserver.StreamRequestHandler):
    def handle(self):
        while True:
            line = self.rfile.readline()
            if not line:
                break
            text = line.decode("utf-8", errors="replace").strip()
            if not text:
                continue
            reply = self.server.request_handler.handle_line(text)
            self.wfile.write((reply + "\n").encode("utf-8"))
            self.wfile.flush()


class _ThreadingTCPServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True


def serve(config: AdapterConfig) -> None:
    """Run the protocol loop until EOF (stdio) or interrupt (tcp)."""
    plugin = load_plugin(config.plugin)
    handler = RequestHandler(plugin, config)
    if config.transport == "stdio":
        serve_stdio(handler)
        return
    if config.transport.startswith("tcp:"):
        rest = config.transport[len("tcp:") :]
        host, sep, port = rest.rpartition(":")
        if not sep or not host:
            raise ValueError(f"malformed tcp transport {config.transport!r}")
        server = _ThreadingTCPServer((host, int(port)), _LineTCPHandler)
        server.request_handler = handler
        try:
            server.serve_forever()
        finally:
            server.server_close()
        return
    raise ValueError(f"unknown transport {config.transport!r}")
