"""HTTP/JSON session service for the interactive annotation loop.

Sessions are in-memory: upload a volume, accumulate strokes, launch an
asynchronous segmentation job, poll its status, then fetch slices (with an
optional label overlay) and metrics.  One engine path is shared with the
CLI, so results are bit-identical across surfaces.
"""

from __future__ import annotations

import io
import json
import secrets
import tempfile
import threading
import time
from dataclasses import dataclass, field

import numpy as np
from fastapi import FastAPI, Query, Request, Response
from fastapi.responses import JSONResponse
from PIL import Image

from . import errors
from .features import StrokeSet
from .metrics import evaluate_regions
from .pipeline import PipelineConfig, SegmentationReport, segment_volume
from .volume import (
    BrainMask,
    MultiModalVolume,
    axis_extent,
    compute_brain_mask,
    extract_label_slice,
    extract_slice,
    load_volume,
)

OVERLAY_PALETTE = {
    0: (0, 0, 0, 0),  # transparent
    1: (0, 200, 0, 160),  # green
    2: (230, 210, 0, 160),  # yellow
    3: (220, 30, 30, 160),  # red
}

_STATUS_BY_ERROR = {
    errors.UnknownSession: 404,
    errors.SessionBusy: 409,
    errors.NoSegmentationYet: 409,
    errors.IoFailure: 500,
}


@dataclass
class Session:
    id: str
    volume: MultiModalVolume
    mask: BrainMask
    strokes: StrokeSet = field(
        default_factory=lambda: StrokeSet(
            voxels=np.zeros((0, 3), np.int32), labels=np.zeros(0, np.uint8)
        )
    )
    state: str = "idle"  # idle | running | done | failed
    progress: float = 0.0
    failure: str | None = None
    report: SegmentationReport | None = None
    lock: threading.Lock = field(default_factory=threading.Lock)
    last_access: float = field(default_factory=time.monotonic)

    def touch(self):
        self.last_access = time.monotonic()


def _slice_to_png(img: np.ndarray) -> bytes:
    lo, hi = float(img.min()), float(img.max())
    if hi > lo:
        scaled = ((img - lo) / (hi - lo) * 255.0).astype(np.uint8)
    else:
        scaled = np.zeros(img.shape, dtype=np.uint8)
    buf = io.BytesIO()
    Image.fromarray(scaled, mode="L").save(buf, format="PNG")
    return buf.getvalue()


def _overlay_to_png(labels2d: np.ndarray) -> bytes:
    rgba = np.zeros((*labels2d.shape, 4), dtype=np.uint8)
    for code, color in OVERLAY_PALETTE.items():
        rgba[labels2d == code] = color
    buf = io.BytesIO()
    Image.fromarray(rgba, mode="RGBA").save(buf, format="PNG")
    return buf.getvalue()


def create_app(session_ttl: float = 3600.0) -> FastAPI:
    app = FastAPI(title="strokeseg annotation service")
    sessions: dict[str, Session] = {}
    registry_lock = threading.Lock()

    def sweep():
        now = time.monotonic()
        with registry_lock:
            stale = [
                sid
                for sid, s in sessions.items()
                if s.state != "running" and now - s.last_access > session_ttl
            ]
            for sid in stale:
                del sessions[sid]

    def get_session(sid: str) -> Session:
        sweep()
        with registry_lock:
            session = sessions.get(sid)
        if session is None:
            raise errors.UnknownSession(f"no session {sid}")
        session.touch()
        return session

    @app.exception_handler(errors.StrokesegError)
    async def engine_error(_req: Request, exc: errors.StrokesegError):
        status = _STATUS_BY_ERROR.get(type(exc), 422)
        return JSONResponse(
            status_code=status,
            content={"error": exc.code, "message": str(exc)},
        )

    @app.post("/sessions", status_code=201)
    async def create_session(request: Request):
        content_type = request.headers.get("content-type", "")
        if content_type.startswith("application/json"):
            payload = await request.json()
            path = payload.get("path")
            if not path:
                raise errors.MalformedHeader("JSON body needs a 'path' field")
            volume = load_volume(path)
        else:
            raw = await request.body()
            if not raw:
                raise errors.MalformedHeader("empty volume upload")
            with tempfile.NamedTemporaryFile(suffix=".mvol") as tmp:
                tmp.write(raw)
                tmp.flush()
                volume = load_volume(tmp.name)
        session = Session(
            id=secrets.token_hex(8),
            volume=volume,
            mask=compute_brain_mask(volume, 0.0),
        )
        with registry_lock:
            sessions[session.id] = session
        return {
            "id": session.id,
            "dims": list(volume.dims),
            "modalities": list(volume.modalities),
            "spacing": list(volume.spacing),
            "in_mask_voxels": session.mask.count,
        }

    @app.post("/sessions/{sid}/strokes")
    async def add_strokes(sid: str, request: Request):
        session = get_session(sid)
        payload = await request.json()
        delta = StrokeSet.from_dict(payload)
        with session.lock:
            if session.state == "running":
                raise errors.SessionBusy("segmentation in progress")
            session.strokes = session.strokes.merge(delta)
            count = len(session.strokes)
        return {"count": count}

    @app.get("/sessions/{sid}/strokes")
    async def get_strokes(sid: str):
        session = get_session(sid)
        return session.strokes.to_dict()

    @app.delete("/sessions/{sid}/strokes")
    async def clear_strokes(sid: str):
        session = get_session(sid)
        with session.lock:
            if session.state == "running":
                raise errors.SessionBusy("segmentation in progress")
            session.strokes = StrokeSet(
                voxels=np.zeros((0, 3), np.int32),
                labels=np.zeros(0, np.uint8),
            )
        return {"count": 0}

    @app.post("/sessions/{sid}/segment", status_code=202)
    async def start_segmentation(sid: str, request: Request):
        session = get_session(sid)
        body = await request.body()
        config = PipelineConfig.from_dict(json.loads(body) if body else {})
        with session.lock:
            if session.state == "running":
                raise errors.SessionBusy("segmentation in progress")
            present = session.strokes.classes_present()
            missing = set(range(4)) - present
            if missing:
                raise errors.StrokesMissingClass(
                    f"strokes missing classes {sorted(missing)}"
                )
            session.state = "running"
            session.progress = 0.0
            session.failure = None
            strokes_snapshot = session.strokes

        def progress(_stage: str, frac: float):
            session.progress = float(frac)

        def run():
            try:
                report = segment_volume(
                    session.volume, strokes_snapshot, config, progress_cb=progress
                )
                session.report = report
                session.state = "done"
                session.progress = 1.0
            except Exception as exc:  # surfaced through /status
                session.failure = str(exc)
                session.state = "failed"

        threading.Thread(target=run, daemon=True).start()
        return {"state": "running"}

    @app.get("/sessions/{sid}/status")
    async def status(sid: str):
        session = get_session(sid)
        payload = {"state": session.state, "progress": session.progress}
        if session.failure is not None:
            payload["reason"] = session.failure
        return payload

    @app.get("/sessions/{sid}/report")
    async def report(sid: str):
        session = get_session(sid)
        if session.report is None:
            raise errors.NoSegmentationYet("run a segmentation first")
        return session.report.to_dict()

    @app.get("/sessions/{sid}/slice")
    async def get_slice(
        sid: str,
        axis: str = Query(...),
        index: int = Query(...),
        modality: str = Query(...),
    ):
        session = get_session(sid)
        if modality == "overlay":
            if session.report is None:
                raise errors.NoSegmentationYet("no labels to overlay yet")
            plane = extract_label_slice(session.report.labels, axis, index)
            return Response(content=_overlay_to_png(plane), media_type="image/png")
        plane = extract_slice(session.volume, axis, index, modality)
        return Response(content=_slice_to_png(plane), media_type="image/png")

    @app.get("/sessions/{sid}/extent")
    async def extent(sid: str, axis: str = Query(...)):
        session = get_session(sid)
        return {"axis": axis, "slices": axis_extent(session.volume.dims, axis)}

    @app.post("/sessions/{sid}/metrics")
    async def metrics(sid: str, request: Request):
        session = get_session(sid)
        if session.report is None:
            raise errors.NoSegmentationYet("run a segmentation first")
        raw = await request.body()
        with tempfile.NamedTemporaryFile(suffix=".mvol") as tmp:
            tmp.write(raw)
            tmp.flush()
            from .volume import load_labels

            truth = load_labels(tmp.name)
        return evaluate_regions(session.report.labels, truth, session.mask)

    return app
