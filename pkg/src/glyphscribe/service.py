"""Local HTTP service exposing the pipeline to the review UI.

Endpoints: POST /sessions (multipart image + JSON metadata), POST
/sessions/{id}/segment, POST /sessions/{id}/classify, POST
/sessions/{id}/corrections, GET /sessions/{id}/export.csv, GET /health.
Sessions live in memory; models are loaded once and shared read-only.
All non-2xx responses carry {"error", "detail"}.
"""

from __future__ import annotations

import io
import json
import logging
import os
import secrets
import threading
import time
from dataclasses import dataclass, field, replace
from http import HTTPStatus
from pathlib import Path

import numpy as np
from fastapi import FastAPI, File, Form, HTTPException, UploadFile
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, Response
from PIL import Image
from pydantic import BaseModel

from . import cnn as cnn_mod
from . import metric as metric_mod
from . import svm as svm_mod
from .codes import is_valid_code
from .features import extract_features
from .segmentation import SegmentationConfig, SegmentedGlyph, segment_region
from .transcription import (
    GeometryConfig, TranscriptionRecord, assemble_lines, records_to_csv_bytes,
)

log = logging.getLogger(__name__)

BACKENDS = ("deep_mml", "trad_ml", "cnn_end2end")


@dataclass(frozen=True)
class ServiceConfig:
    model_dir: str = "models"
    encoder_file: str = "encoder.npz"
    centroids_file: str = "centroids.npz"
    svm_file: str = "svm.npz"
    cnn_file: str = "cnn.npz"
    max_image_bytes: int = 16 * 1024 * 1024
    port: int = 8077
    default_backend: str = "deep_mml"
    exclude_codes: tuple[str, ...] = ("N",)
    segmentation: SegmentationConfig = field(default_factory=SegmentationConfig)
    geometry: GeometryConfig = field(default_factory=GeometryConfig)

    def path(self, name: str) -> Path:
        return Path(self.model_dir) / name

    @classmethod
    def from_file(cls, path: str | Path) -> "ServiceConfig":
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        seg = SegmentationConfig(**doc.pop("segmentation", {}))
        geom = GeometryConfig(**doc.pop("geometry", {}))
        if "exclude_codes" in doc:
            doc["exclude_codes"] = tuple(doc["exclude_codes"])
        return cls(segmentation=seg, geometry=geom, **doc)

    def with_env_overrides(self) -> "ServiceConfig":
        """Environment variables beat file values (GLYPHSCRIBE_* prefix)."""
        overrides = {}
        if "GLYPHSCRIBE_MODEL_DIR" in os.environ:
            overrides["model_dir"] = os.environ["GLYPHSCRIBE_MODEL_DIR"]
        if "GLYPHSCRIBE_PORT" in os.environ:
            overrides["port"] = int(os.environ["GLYPHSCRIBE_PORT"])
        if "GLYPHSCRIBE_MAX_IMAGE_BYTES" in os.environ:
            overrides["max_image_bytes"] = int(os.environ["GLYPHSCRIBE_MAX_IMAGE_BYTES"])
        if "GLYPHSCRIBE_DEFAULT_BACKEND" in os.environ:
            overrides["default_backend"] = os.environ["GLYPHSCRIBE_DEFAULT_BACKEND"]
        return replace(self, **overrides) if overrides else self


def load_config() -> ServiceConfig:
    cfg_path = os.environ.get("GLYPHSCRIBE_CONFIG")
    config = ServiceConfig.from_file(cfg_path) if cfg_path else ServiceConfig()
    return config.with_env_overrides()


@dataclass(eq=False)
class SessionGlyph:
    glyph_id: str
    glyph: SegmentedGlyph  # box in facsimile coordinates
    code: str | None = None
    confidence: float | None = None
    runner_up: tuple[str, float] | None = None
    review_status: str = "auto"
    latency_ms: float | None = None


@dataclass(eq=False)
class Session:
    session_id: str
    image: np.ndarray  # uint8 grayscale facsimile
    support: str
    spell: str
    backend: str
    glyphs: list[SessionGlyph] = field(default_factory=list)
    lock: threading.Lock = field(default_factory=threading.Lock)
    _next_glyph: int = 0

    def new_glyph_id(self) -> str:
        self._next_glyph += 1
        return f"g{self._next_glyph:04d}"


class ModelRegistry:
    """Loads each backend's models once; read-only afterwards."""

    def __init__(self, config: ServiceConfig):
        self.config = config
        self._lock = threading.Lock()
        self._cache: dict[str, object] = {}

    def _require(self, name: str) -> Path:
        path = self.config.path(name)
        if not path.exists():
            raise HTTPException(
                HTTPStatus.SERVICE_UNAVAILABLE,
                f"model file not found: {path}",
            )
        return path

    def deep_mml(self):
        with self._lock:
            if "deep_mml" not in self._cache:
                encoder = metric_mod.load_encoder(self._require(self.config.encoder_file))
                table = metric_mod.load_centroids(self._require(self.config.centroids_file), encoder)
                self._cache["deep_mml"] = (encoder, table)
            return self._cache["deep_mml"]

    def trad_ml(self):
        with self._lock:
            if "trad_ml" not in self._cache:
                self._cache["trad_ml"] = svm_mod.load_svm(self._require(self.config.svm_file))
            return self._cache["trad_ml"]

    def cnn_end2end(self):
        with self._lock:
            if "cnn_end2end" not in self._cache:
                self._cache["cnn_end2end"] = cnn_mod.load_classifier(self._require(self.config.cnn_file))
            return self._cache["cnn_end2end"]


class SegmentRequest(BaseModel):
    roi: tuple[int, int, int, int]


class ClassifyRequest(BaseModel):
    backend: str | None = None


class CorrectionItem(BaseModel):
    glyph_id: str
    code: str


class CorrectionsRequest(BaseModel):
    corrections: list[CorrectionItem]


_ERROR_NAMES = {
    400: "bad_request", 404: "not_found", 413: "payload_too_large",
    422: "validation_error", 503: "service_unavailable",
}


def create_app(config: ServiceConfig | None = None) -> FastAPI:
    if config is None:
        config = load_config()
    app = FastAPI(title="glyphscribe service")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"],
    )
    registry = ModelRegistry(config)
    sessions: dict[str, Session] = {}
    sessions_lock = threading.Lock()

    @app.exception_handler(HTTPException)
    async def _http_error(_, exc: HTTPException):
        name = _ERROR_NAMES.get(exc.status_code, "error")
        return JSONResponse(status_code=exc.status_code,
                            content={"error": name, "detail": exc.detail})

    @app.exception_handler(RequestValidationError)
    async def _validation_error(_, exc: RequestValidationError):
        return JSONResponse(status_code=422,
                            content={"error": "validation_error", "detail": str(exc)})

    def get_session(session_id: str) -> Session:
        with sessions_lock:
            session = sessions.get(session_id)
        if session is None:
            raise HTTPException(HTTPStatus.NOT_FOUND, f"unknown session {session_id}")
        return session

    @app.get("/health")
    def health():
        return {"status": "ok", "backends": list(BACKENDS)}

    @app.post("/sessions")
    async def create_session(image: UploadFile = File(...), metadata: str = Form("{}")):
        data = await image.read()
        if len(data) > config.max_image_bytes:
            raise HTTPException(HTTPStatus.REQUEST_ENTITY_TOO_LARGE,
                                f"image exceeds the {config.max_image_bytes} byte limit")
        try:
            with Image.open(io.BytesIO(data)) as im:
                gray = np.asarray(im.convert("L"), dtype=np.uint8)
        except Exception as exc:
            raise HTTPException(HTTPStatus.BAD_REQUEST, f"cannot decode image: {exc}")
        try:
            meta = json.loads(metadata) if metadata else {}
        except json.JSONDecodeError as exc:
            raise HTTPException(HTTPStatus.BAD_REQUEST, f"metadata is not valid JSON: {exc}")
        session = Session(
            session_id=secrets.token_hex(16),
            image=gray,
            support=str(meta.get("support", "")),
            spell=str(meta.get("spell", "")),
            backend=config.default_backend,
        )
        with sessions_lock:
            sessions[session.session_id] = session
        return {"session_id": session.session_id}

    @app.post("/sessions/{session_id}/segment")
    def segment_roi(session_id: str, request: SegmentRequest):
        session = get_session(session_id)
        with session.lock:
            h, w = session.image.shape
            x0, y0, x1, y1 = request.roi
            clamped = (max(0, min(x0, w)), max(0, min(y0, h)),
                       max(0, min(x1, w)), max(0, min(y1, h)))
            if (x0, y0, x1, y1) != clamped:
                raise HTTPException(
                    HTTPStatus.BAD_REQUEST,
                    f"roi {list(request.roi)} is outside the {w}x{h} facsimile; "
                    f"clamped suggestion: {list(clamped)}",
                )
            if x1 <= x0 or y1 <= y0:
                raise HTTPException(HTTPStatus.BAD_REQUEST,
                                    f"roi {list(request.roi)} has no area")
            crop = session.image[y0:y1, x0:x1]
            added = []
            for glyph in segment_region(crop, config.segmentation):
                glyph.box = glyph.box.translated(x0, y0)
                entry = SessionGlyph(glyph_id=session.new_glyph_id(), glyph=glyph)
                session.glyphs.append(entry)
                added.append(_glyph_summary(entry))
            return {"glyphs": added}

    def _predict(backend: str, crop: np.ndarray):
        if backend == "deep_mml":
            encoder, table = registry.deep_mml()
            pred = metric_mod.classify_nearest_centroid(
                metric_mod.embed_many(encoder, [crop])[0], table
            )
            return pred.code, pred.similarity, pred.runner_up
        if backend == "trad_ml":
            model = registry.trad_ml()
            code, margin = svm_mod.predict_svm(model, extract_features(crop))
            return code, margin, None
        if backend == "cnn_end2end":
            model = registry.cnn_end2end()
            code, confidence, probs = cnn_mod.predict_classifier_batch(model, [crop])[0]
            order = np.argsort(-probs, kind="stable")
            runner = (model.classes[int(order[1])], float(probs[order[1]])) if len(probs) > 1 else None
            return code, confidence, runner
        raise HTTPException(HTTPStatus.BAD_REQUEST,
                            f"unknown backend {backend!r}; expected one of {list(BACKENDS)}")

    @app.post("/sessions/{session_id}/classify")
    def classify_session(session_id: str, request: ClassifyRequest):
        session = get_session(session_id)
        with session.lock:
            backend = request.backend or session.backend
            if backend not in BACKENDS:
                raise HTTPException(HTTPStatus.BAD_REQUEST,
                                    f"unknown backend {backend!r}; expected one of {list(BACKENDS)}")
            session.backend = backend
            results = []
            for entry in session.glyphs:
                if entry.review_status == "auto":  # only auto predictions are overwritten
                    start = time.perf_counter()
                    code, confidence, runner = _predict(backend, entry.glyph.crop)
                    entry.latency_ms = (time.perf_counter() - start) * 1000.0
                    entry.code, entry.confidence, entry.runner_up = code, confidence, runner
                results.append({
                    "glyph_id": entry.glyph_id,
                    "code": entry.code,
                    "confidence": entry.confidence,
                    "runner_up": list(entry.runner_up) if entry.runner_up else None,
                    "latency_ms": entry.latency_ms,
                })
            return {"backend": backend, "predictions": results}

    @app.post("/sessions/{session_id}/corrections")
    def apply_corrections(session_id: str, request: CorrectionsRequest):
        session = get_session(session_id)
        with session.lock:
            by_id = {g.glyph_id: g for g in session.glyphs}
            unknown = [c.glyph_id for c in request.corrections if c.glyph_id not in by_id]
            if unknown:
                raise HTTPException(HTTPStatus.BAD_REQUEST,
                                    f"unknown glyph id(s): {', '.join(unknown)}")
            invalid = [c.code for c in request.corrections if not is_valid_code(c.code)]
            if invalid:
                raise HTTPException(HTTPStatus.BAD_REQUEST,
                                    f"invalid Gardiner code(s): {', '.join(invalid)}")
            for c in request.corrections:
                entry = by_id[c.glyph_id]
                entry.code = c.code
                entry.review_status = "corrected"
            return {"corrected": len(request.corrections)}

    @app.get("/sessions/{session_id}/export.csv")
    def export_csv(session_id: str):
        session = get_session(session_id)
        with session.lock:
            data = records_to_csv_bytes(_session_records(session, config))
        log.info("session %s exported %d bytes of CSV", session_id, len(data))
        return Response(content=data, media_type="text/csv; charset=utf-8")

    app.state.config = config
    app.state.sessions = sessions
    return app


def _glyph_summary(entry: SessionGlyph) -> dict:
    box = entry.glyph.box
    return {
        "glyph_id": entry.glyph_id,
        "bbox": [box.x0, box.y0, box.x1, box.y1],
        "column_index": entry.glyph.column_index,
        "order_index": entry.glyph.order_index,
    }


def _session_records(session: Session, config: ServiceConfig) -> list[TranscriptionRecord]:
    unclassified = [g.glyph_id for g in session.glyphs if g.code is None]
    if unclassified:
        raise HTTPException(
            HTTPStatus.BAD_REQUEST,
            f"classify before export; unclassified glyph(s): {', '.join(unclassified)}",
        )
    columns: dict[int, list[SessionGlyph]] = {}
    for entry in session.glyphs:
        columns.setdefault(entry.glyph.column_index, []).append(entry)
    records = []
    for ci in sorted(columns):
        entries = sorted(columns[ci], key=lambda e: e.glyph.order_index)
        tokens = assemble_lines(
            [(e.glyph, e.code) for e in entries],
            geometry=config.geometry,
            exclude=frozenset(config.exclude_codes),
        )
        statuses = _token_statuses(entries, tokens, frozenset(config.exclude_codes))
        for ti, (token, status) in enumerate(zip(tokens, statuses)):
            records.append(TranscriptionRecord(
                support=session.support,
                spell=session.spell,
                column_label=f"col{ci:02d}",
                token_index=ti,
                mdc=token.rendering,
                review_status=status,
            ))
    return records


def _token_statuses(entries, tokens, exclude) -> list[str]:
    """Per-token status: corrected wins over confirmed wins over auto."""
    status_by_box = {
        id(e.glyph.box): e.review_status
        for e in entries if e.code not in exclude
    }
    out = []
    for token in tokens:
        statuses = {status_by_box.get(id(sign.box), "auto") for sign in token.signs}
        if "corrected" in statuses:
            out.append("corrected")
        elif statuses == {"confirmed"}:
            out.append("confirmed")
        else:
            out.append("auto")
    return out


if __name__ == "__main__":  # pragma: no cover
    import uvicorn

    cfg = load_config()
    uvicorn.run(create_app(cfg), host="127.0.0.1", port=cfg.port)
