"""Regenerate the golden exchange suite.

Valid segment/inpaint exchanges are recorded through the primary client's
record-fixture command running this server over stdio; malformed-input
cases are captured directly from the request handler. Run from the adapter
directory:

    python3 tests/make_golden.py
"""

import json
import subprocess
import sys
from pathlib import Path

import numpy as np
from PIL import Image

HERE = Path(__file__).parent
GOLDEN = HERE / "golden"


def build_scene_png(path: Path) -> None:
    img = np.full((96, 96, 3), 120, dtype=np.uint8)
    img[12:26, 10:24] = (40, 180, 60)  # green blob
    img[50:70, 30:52] = (200, 40, 40)  # red blob
    img[20:44, 60:84] = (220, 210, 50)  # yellow blob
    Image.fromarray(img).save(path)


def record_valid_exchanges(scene_png: Path, out: Path) -> None:
    mask = np.zeros((96, 96), dtype=bool)
    mask[50:70, 30:52] = True
    mask_json = HERE / "golden" / "inpaint_mask.rle.json"
    from maskserve.protocol import encode_rle

    mask_json.write_text(json.dumps(encode_rle(mask)))
    cmd = [
        sys.executable, "-m", "scenegate.cli", "record-fixture",
        "--endpoint", f"stdio:{sys.executable} -m maskserve --plugin classical",
        "--image", str(scene_png),
        "--concepts", "green spoon,red block,banana",
        "--inpaint-mask", str(mask_json),
        "--out", str(out),
    ]
    subprocess.run(cmd, check=True)


def append_malformed_cases(out: Path) -> None:
    from maskserve.plugins import load_plugin
    from maskserve.server import AdapterConfig, RequestHandler

    handler = RequestHandler(load_plugin("classical"), AdapterConfig())
    lines = []
    for raw in (
        "{this is not json",
        json.dumps({"v": 1, "op": "transmogrify", "id": "bad-op"}),
        json.dumps({"v": 7, "op": "segment", "id": "bad-version"}),
        json.dumps({"v": 1, "op": "segment", "id": "no-image", "concept": "x"}),
        json.dumps(
            {"v": 1, "op": "inpaint", "id": "bad-mask", "image_png_b64": "AAAA", "mask_rle": {}}
        ),
    ):
        reply = handler.handle_line(raw)
        lines.append(json.dumps({"request_line": raw, "response": json.loads(reply)},
                                sort_keys=True, separators=(",", ":")))
    with out.open("a", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def main() -> None:
    GOLDEN.mkdir(exist_ok=True)
    scene_png = GOLDEN / "scene.png"
    build_scene_png(scene_png)
    out = GOLDEN / "exchanges.jsonl"
    if out.exists():
        out.unlink()
    record_valid_exchanges(scene_png, out)
    append_malformed_cases(out)
    print(f"wrote {sum(1 for _ in out.open())} golden exchanges to {out}")


if __name__ == "__main__":
    main()
