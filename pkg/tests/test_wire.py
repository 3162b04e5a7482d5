import json
import sys

import numpy as np
import pytest

from scenegate import rle, wire
from scenegate.errors import BackendTimeout, BackendUnavailable, ProtocolError
from scenegate.imio import decode_png_b64, encode_png_b64

# a minimal stdio backend: answers segment with one full-frame instance and
# inpaint with the unmodified image; unknown ops get an error reply
ECHO_SERVER = r"""
import base64, io, json, sys
import numpy as np
from PIL import Image

def rle_encode(mask):
    h, w = mask.shape
    flat = mask.ravel(order="F")
    counts, last, run = [], False, 0
    for v in flat:
        if bool(v) == last:
            run += 1
        else:
            counts.append(run); last = bool(v); run = 1
    counts.append(run)
    return {"size": [h, w], "counts": counts}

for line in sys.stdin:
    req = json.loads(line)
    img = np.asarray(Image.open(io.BytesIO(base64.b64decode(req["image_png_b64"]))).convert("RGB"))
    if req["op"] == "segment":
        mask = np.ones(img.shape[:2], dtype=bool)
        resp = {"v": 1, "id": req["id"],
                "instances": [{"rle": rle_encode(mask), "confidence": 0.5}]}
    elif req["op"] == "inpaint":
        resp = {"v": 1, "id": req["id"], "image_png_b64": req["image_png_b64"]}
    else:
        resp = {"v": 1, "id": req["id"], "error": "unsupported op"}
    sys.stdout.write(json.dumps(resp) + "\n")
    sys.stdout.flush()
"""


@pytest.fixture
def stdio_client(tmp_path):
    script = tmp_path / "server.py"
    script.write_text(ECHO_SERVER)
    transport = wire.StdioTransport([sys.executable, str(script)])
    client = wire.WireClient(transport, timeout=20)
    yield client
    client.close()


class TestPngB64:
    def test_round_trip(self):
        rng = np.random.default_rng(0)
        image = rng.integers(0, 256, (9, 11, 3)).astype(np.uint8)
        assert np.array_equal(decode_png_b64(encode_png_b64(image)), image)

    def test_invalid_base64_rejected(self):
        with pytest.raises(ProtocolError):
            decode_png_b64("!!!not-base64!!!")

    def test_non_png_rejected(self):
        import base64

        with pytest.raises(ProtocolError):
            decode_png_b64(base64.b64encode(b"hello").decode())


class TestMessages:
    def test_segment_request_shape(self):
        image = np.zeros((4, 5, 3), dtype=np.uint8)
        req = wire.segment_request("abc", image, "spoon")
        assert req["v"] == 1 and req["op"] == "segment"
        assert req["concept"] == "spoon"
        assert np.array_equal(decode_png_b64(req["image_png_b64"]), image)

    def test_inpaint_request_shape(self):
        image = np.zeros((4, 5, 3), dtype=np.uint8)
        mask = np.zeros((4, 5), dtype=bool)
        mask[1, 2] = True
        req = wire.inpaint_request("abc", image, mask)
        assert req["op"] == "inpaint"
        assert np.array_equal(rle.decode(req["mask_rle"]), mask)

    def test_parse_line_rejects_non_object(self):
        with pytest.raises(ProtocolError):
            wire.parse_line("[1,2,3]")

    def test_parse_instances_rejects_missing_fields(self):
        with pytest.raises(ProtocolError):
            wire.parse_instances({"v": 1, "id": "x"}, (4, 4))
        with pytest.raises(ProtocolError):
            wire.parse_instances({"instances": [{"confidence": 0.5}]}, (4, 4))

    def test_deterministic_request_ids(self):
        client = wire.WireClient(transport=None)  # never used for ids
        assert client.next_id("segment") == "segment-000001"
        assert client.next_id("segment") == "segment-000002"


class TestStdioTransport:
    def test_segment_round_trip(self, stdio_client):
        image = np.full((6, 7, 3), 42, dtype=np.uint8)
        req = wire.segment_request(stdio_client.next_id("segment"), image, "anything")
        resp = stdio_client.call(req)
        instances = wire.parse_instances(resp, (6, 7))
        assert len(instances) == 1
        mask, conf = instances[0]
        assert mask.all() and conf == 0.5

    def test_inpaint_round_trip(self, stdio_client):
        image = np.full((5, 5, 3), 9, dtype=np.uint8)
        mask = np.zeros((5, 5), dtype=bool)
        mask[2, 2] = True
        req = wire.inpaint_request(stdio_client.next_id("inpaint"), image, mask)
        resp = stdio_client.call(req)
        assert np.array_equal(wire.parse_inpaint_image(resp, (5, 5)), image)

    def test_unknown_op_is_backend_error(self, stdio_client):
        image = np.zeros((4, 4, 3), dtype=np.uint8)
        req = wire.segment_request(stdio_client.next_id("segment"), image, "x")
        req["op"] = "transmogrify"
        with pytest.raises(BackendUnavailable, match="unsupported op"):
            stdio_client.call(req)

    def test_timeout(self, tmp_path):
        script = tmp_path / "slow.py"
        script.write_text("import time\nimport sys\nsys.stdin.readline()\ntime.sleep(30)\n")
        transport = wire.StdioTransport([sys.executable, str(script)])
        client = wire.WireClient(transport, timeout=0.3)
        try:
            with pytest.raises(BackendTimeout):
                client.call(wire.segment_request("a", np.zeros((2, 2, 3), np.uint8), "x"))
        finally:
            client.close()

    def test_dead_process_is_backend_error(self, tmp_path):
        script = tmp_path / "dead.py"
        script.write_text("import sys; sys.exit(0)\n")
        transport = wire.StdioTransport([sys.executable, str(script)])
        client = wire.WireClient(transport, timeout=5)
        try:
            with pytest.raises(BackendUnavailable):
                client.call(wire.segment_request("a", np.zeros((2, 2, 3), np.uint8), "x"))
        finally:
            client.close()

    def test_unknown_endpoint_scheme(self):
        with pytest.raises(BackendUnavailable):
            wire.open_transport("carrier-pigeon:coop")


class TestTcpTransport:
    @pytest.fixture
    def tcp_server(self):
        import socketserver
        import threading

        class Handler(socketserver.StreamRequestHandler):
            def handle(self):
                while True:
                    line = self.rfile.readline()
                    if not line:
                        break
                    req = json.loads(line)
                    resp = {"v": 1, "id": req["id"], "image_png_b64": req["image_png_b64"]}
                    self.wfile.write((json.dumps(resp) + "\n").encode())
                    self.wfile.flush()

        class Server(socketserver.ThreadingTCPServer):
            allow_reuse_address = True
            daemon_threads = True

        server = Server(("127.0.0.1", 0), Handler)
        thread = threading.Thread(target=server.serve_forever, daemon=True)
        thread.start()
        yield server.server_address
        server.shutdown()
        server.server_close()

    def test_tcp_round_trip(self, tcp_server):
        host, port = tcp_server
        client = wire.WireClient(wire.open_transport(f"tcp:{host}:{port}"), timeout=10)
        try:
            image = np.full((5, 6, 3), 77, dtype=np.uint8)
            mask = np.zeros((5, 6), dtype=bool)
            mask[1, 1] = True
            resp = client.call(wire.inpaint_request(client.next_id("inpaint"), image, mask))
            assert np.array_equal(wire.parse_inpaint_image(resp, (5, 6)), image)
        finally:
            client.close()

    def test_tcp_connection_refused(self):
        with pytest.raises(BackendUnavailable):
            wire.open_transport("tcp:127.0.0.1:1")
