"""Wire protocol v1: newline-delimited JSON for segmentation and inpainting.

Both directions are UTF-8 JSON objects, one per line:

    request : {"v":1, "op":"segment", "id":str, "image_png_b64":str, "concept":str}
              {"v":1, "op":"inpaint", "id":str, "image_png_b64":str, "mask_rle":{...}}
    response: {"v":1, "id":str, "instances":[{"rle":{...}, "confidence":float}]}
              {"v":1, "id":str, "image_png_b64":str}
    error   : {"v":1, "id":str, "error":str}

The client serializes requests per connection: one in flight at a time.
Transports are a stdio subprocess or a TCP stream, selected by an endpoint
string of the form "stdio:<command line>" or "tcp:<host>:<port>".
"""

from __future__ import annotations

import json
import queue
import shlex
import socket
import subprocess
import threading

import numpy as np

from . import rle
from .errors import BackendTimeout, BackendUnavailable, ProtocolError
from .imio import decode_png_b64, encode_png_b64

PROTOCOL_VERSION = 1


def dumps_line(obj: dict) -> str:
    return json.dumps(obj, separators=(",", ":"), sort_keys=True)


def parse_line(line: str) -> dict:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ProtocolError(f"response is not valid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise ProtocolError("response must be a JSON object")
    if obj.get("v") != PROTOCOL_VERSION:
        raise ProtocolError(f"unsupported protocol version {obj.get('v')!r}")
    return obj


def segment_request(request_id: str, image: np.ndarray, concept: str) -> dict:
    return {
        "v": PROTOCOL_VERSION,
        "op": "segment",
        "id": request_id,
        "image_png_b64": encode_png_b64(image),
        "concept": concept,
    }


def inpaint_request(request_id: str, image: np.ndarray, mask: np.ndarray) -> dict:
    return {
        "v": PROTOCOL_VERSION,
        "op": "inpaint",
        "id": request_id,
        "image_png_b64": encode_png_b64(image),
        "mask_rle": rle.encode(mask),
    }


def parse_instances(response: dict, image_shape: tuple[int, int]) -> list[tuple[np.ndarray, float]]:
    """Decode and validate the instance list of a segment response.

    Masks whose dimensions mismatch the request image are rejected, never
    cropped; confidences outside [0, 1] are protocol violations.
    """
    raw = response.get("instances")
    if not isinstance(raw, list):
        raise ProtocolError("segment response lacks an 'instances' list")
    out: list[tuple[np.ndarray, float]] = []
    for entry in raw:
        if not isinstance(entry, dict) or "rle" not in entry or "confidence" not in entry:
            raise ProtocolError(f"malformed instance entry: {entry!r}")
        mask = rle.decode(entry["rle"])
        if mask.shape != tuple(image_shape):
            raise ProtocolError(
                f"instance mask shape {mask.shape} does not match image {tuple(image_shape)}"
            )
        conf = entry["confidence"]
        if not isinstance(conf, (int, float)) or isinstance(conf, bool) or not 0.0 <= conf <= 1.0:
            raise ProtocolError(f"confidence {conf!r} outside [0, 1]")
        out.append((mask, float(conf)))
    return out


def parse_inpaint_image(response: dict, image_shape: tuple[int, int]) -> np.ndarray:
    data = response.get("image_png_b64")
    if not isinstance(data, str):
        raise ProtocolError("inpaint response lacks 'image_png_b64'")
    image = decode_png_b64(data)
    if image.shape[:2] != tuple(image_shape):
        raise ProtocolError(
            f"inpainted image shape {image.shape[:2]} does not match request {tuple(image_shape)}"
        )
    return image


class Transport:
    """One bidirectional line stream."""

    def send_line(self, line: str) -> None:
        raise NotImplementedError

    def recv_line(self, timeout: float | None) -> str:
        raise NotImplementedError

    def close(self) -> None:
        pass


class StdioTransport(Transport):
    """Line protocol over a child process's stdin/stdout."""

    def __init__(self, command: list[str]):
        try:
            self._proc = subprocess.Popen(
                command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise BackendUnavailable(f"cannot spawn backend {command!r}: {exc}") from exc
        self._lines: queue.Queue[str | None] = queue.Queue()
        self._reader = threading.Thread(target=self._pump, daemon=True)
        self._reader.start()

    def _pump(self) -> None:
        assert self._proc.stdout is not None
        for line in self._proc.stdout:
            self._lines.put(line.rstrip("\n"))
        self._lines.put(None)

    def send_line(self, line: str) -> None:
        if self._proc.poll() is not None:
            raise BackendUnavailable("backend process has exited")
        assert self._proc.stdin is not None
        try:
            self._proc.stdin.write(line + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise BackendUnavailable(f"backend pipe closed: {exc}") from exc

    def recv_line(self, timeout: float | None) -> str:
        try:
            line = self._lines.get(timeout=timeout)
        except queue.Empty:
            raise BackendTimeout(f"no response within {timeout}s") from None
        if line is None:
            raise BackendUnavailable("backend closed its output stream")
        return line

    def close(self) -> None:
        # terminate before closing pipes: the reader thread holds the stdout
        # lock while blocked, and close() would wait on it otherwise
        self._proc.terminate()
        try:
            self._proc.wait(timeout=5)
        except subprocess.TimeoutExpired:
            self._proc.kill()
            self._proc.wait(timeout=5)
        for stream in (self._proc.stdin, self._proc.stdout):
            if stream is not None:
                try:
                    stream.close()
                except (OSError, ValueError):
                    pass


class TcpTransport(Transport):
    def __init__(self, host: str, port: int):
        try:
            self._sock = socket.create_connection((host, port), timeout=10)
        except OSError as exc:
            raise BackendUnavailable(f"cannot connect to {host}:{port}: {exc}") from exc
        self._rfile = self._sock.makefile("r", encoding="utf-8", newline="\n")

    def send_line(self, line: str) -> None:
        try:
            self._sock.sendall((line + "\n").encode("utf-8"))
        except OSError as exc:
            raise BackendUnavailable(f"socket send failed: {exc}") from exc

    def recv_line(self, timeout: float | None) -> str:
        self._sock.settimeout(timeout)
        try:
            line = self._rfile.readline()
        except socket.timeout:
            raise BackendTimeout(f"no response within {timeout}s") from None
        except OSError as exc:
            raise BackendUnavailable(f"socket read failed: {exc}") from exc
        if not line:
            raise BackendUnavailable("backend closed the connection")
        return line.rstrip("\n")

    def close(self) -> None:
        try:
            self._rfile.close()
        finally:
            self._sock.close()


def open_transport(endpoint: str) -> Transport:
    """Open "stdio:<command line>" or "tcp:<host>:<port>"."""
    if endpoint.startswith("stdio:"):
        command = shlex.split(endpoint[len("stdio:") :])
        if not command:
            raise BackendUnavailable("empty stdio backend command")
        return StdioTransport(command)
    if endpoint.startswith("tcp:"):
        rest = endpoint[len("tcp:") :]
        host, sep, port = rest.rpartition(":")
        if not sep or not host:
            raise BackendUnavailable(f"malformed tcp endpoint {endpoint!r}")
        return TcpTransport(host, int(port))
    raise BackendUnavailable(f"unknown endpoint scheme in {endpoint!r}")


class WireClient:
    """Serialized request/response exchange with deterministic request ids."""

    def __init__(self, transport: Transport, timeout: float = 60.0):
        self._transport = transport
        self._timeout = timeout
        self._lock = threading.Lock()
        self._counter = 0

    def next_id(self, op: str) -> str:
        self._counter += 1
        return f"{op}-{self._counter:06d}"

    def call(self, request: dict) -> dict:
        with self._lock:
            self._transport.send_line(dumps_line(request))
            response = parse_line(self._transport.recv_line(self._timeout))
        if response.get("id") != request["id"]:
            raise ProtocolError(
                f"response id {response.get('id')!r} does not echo request id {request['id']!r}"
            )
        if "error" in response:
            raise BackendUnavailable(f"backend error: {response['error']}")
        return response

    def close(self) -> None:
        self._transport.close()
