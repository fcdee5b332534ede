"""The full expert workflow over live HTTP: upload, segment, classify,
correct, export.

Starts the service in a background thread with the models from demo 02,
then drives it exactly as the browser UI does.
"""

import io
import json
import threading
import time
from pathlib import Path

import httpx
import uvicorn
from PIL import Image

from glyphscribe.segmentation import SegmentationConfig
from glyphscribe.service import ServiceConfig, create_app
from glyphscribe.synthetic import SHAPES, compose_page

MODELS = Path(__file__).parent / "output" / "models"
if not (MODELS / "encoder.npz").exists():
    raise SystemExit("run 02_train_and_compare_classifiers.py first")

config = ServiceConfig(
    model_dir=str(MODELS),
    segmentation=SegmentationConfig(min_area=40, min_dim=3, max_dim=90),
)
server = uvicorn.Server(uvicorn.Config(create_app(config), host="127.0.0.1",
                                       port=8077, log_level="warning"))
thread = threading.Thread(target=server.run, daemon=True)
thread.start()
while not server.started:
    time.sleep(0.05)
base = "http://127.0.0.1:8077"
print("service up at", base)

page, truth = compose_page([list(SHAPES[:4]), list(SHAPES[4:8])], glyph_size=48, seed=13)
buf = io.BytesIO()
Image.fromarray(page).save(buf, format="PNG")

with httpx.Client(base_url=base) as client:
    print("health:", client.get("/health").json())
    session = client.post(
        "/sessions",
        files={"image": ("page.png", buf.getvalue(), "image/png")},
        data={"metadata": json.dumps({"support": "B1Bo", "spell": "CT-335"})},
    ).json()["session_id"]
    print("session:", session)

    h, w = page.shape
    glyphs = client.post(f"/sessions/{session}/segment",
                         json={"roi": [0, 0, w, h]}).json()["glyphs"]
    print(f"segmented {len(glyphs)} glyphs in {len({g['column_index'] for g in glyphs})} columns")

    result = client.post(f"/sessions/{session}/classify", json={"backend": "deep_mml"}).json()
    for p in result["predictions"]:
        print(f"  {p['glyph_id']}: {p['code']} (similarity {p['confidence']:.3f}, "
              f"{p['latency_ms']:.1f} ms)")

    first = result["predictions"][0]["glyph_id"]
    client.post(f"/sessions/{session}/corrections",
                json={"corrections": [{"glyph_id": first, "code": "Z1"}]})
    print(f"corrected {first} to Z1")

    csv_bytes = client.get(f"/sessions/{session}/export.csv").content
    print("\nexported CSV:")
    print(csv_bytes.decode(), end="")

server.should_exit = True
thread.join(timeout=5)
print("service stopped")
