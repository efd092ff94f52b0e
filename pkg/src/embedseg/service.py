"""HTTP + WebSocket session service consumed by the browser front-end.

The wire contract (endpoint paths, JSON field names, RLE format) is frozen in
protocol.md at the repository root; change nothing here without updating it.
Sessions are independent; each one serializes its own mutations.
"""

from __future__ import annotations

import io
import uuid
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, WebSocket, WebSocketDisconnect
from fastapi.responses import JSONResponse, Response
from PIL import Image
from pydantic import BaseModel

from .core import Annotation, Video, load_sequence
from .embed import EmbedConfig, HeadParams, load_head
from .metrics import evaluate_sequence
from .session import InteractiveSession, SessionConfig


@dataclass(frozen=True)
class ServiceConfig:
    data_dir: Path
    model_path: Path
    max_sessions: int = 16
    max_video_pixels: int = 1_000_000
    k: int = 1
    embed: EmbedConfig = field(default_factory=EmbedConfig)

    def __post_init__(self):
        if self.max_sessions < 1 or self.max_video_pixels < 1:
            raise ValueError("service limits must be positive")


class ClickRequest(BaseModel):
    frame: int
    row: int
    col: int
    label: int


def rle_encode(mask: np.ndarray) -> list[list[int]]:
    """Row-major run-length encoding: [[label, run_length], ...]."""
    flat = np.asarray(mask).ravel()
    if flat.size == 0:
        return []
    boundaries = np.flatnonzero(np.diff(flat)) + 1
    starts = np.concatenate([[0], boundaries])
    ends = np.concatenate([boundaries, [flat.size]])
    return [[int(flat[s]), int(e - s)] for s, e in zip(starts, ends)]


def rle_decode(runs: list[list[int]], height: int, width: int) -> np.ndarray:
    total = sum(length for _, length in runs)
    if total != height * width:
        raise ValueError(f"run lengths sum to {total}, expected {height * width}")
    flat = np.empty(height * width, dtype=np.int32)
    at = 0
    for label, length in runs:
        flat[at : at + length] = label
        at += length
    return flat.reshape(height, width)


@dataclass
class _SessionRecord:
    session: InteractiveSession
    video_id: str
    video: Video
    gt_masks: np.ndarray | None
    num_objects: int
    watchers: list[WebSocket] = field(default_factory=list)


def _frame_png(video: Video, index: int) -> bytes:
    frame8 = np.clip(np.round(video.frames[index] * 255.0), 0, 255).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(frame8, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def create_app(config: ServiceConfig) -> FastAPI:
    params: HeadParams = load_head(config.model_path)
    app = FastAPI(title="embedseg session service")
    sessions: dict[str, _SessionRecord] = {}

    def _video_ids() -> list[str]:
        return sorted(
            p.name for p in Path(config.data_dir).iterdir() if (p / "metadata.txt").is_file()
        )

    def _not_found() -> JSONResponse:
        return JSONResponse({"detail": "session not found"}, status_code=404)

    def _mask_payload(record: _SessionRecord) -> dict:
        session = record.session
        if not session.masks_ready:
            return {
                "ready": False,
                "status": "insufficient references",
                "height": record.video.height,
                "width": record.video.width,
                "masks": [],
            }
        return {
            "ready": True,
            "status": "ok",
            "height": record.video.height,
            "width": record.video.width,
            "masks": [rle_encode(m) for m in session.masks()],
        }

    async def _broadcast(record: _SessionRecord) -> None:
        payload = {"type": "masks", "click_count": len(record.session.click_log)}
        payload.update(_mask_payload(record))
        dead = []
        for ws in record.watchers:
            try:
                await ws.send_json(payload)
            except Exception:
                dead.append(ws)
        for ws in dead:
            record.watchers.remove(ws)

    @app.get("/api/videos")
    async def list_videos():
        out = []
        for vid in _video_ids():
            video, _, k = load_sequence(Path(config.data_dir) / vid)
            out.append(
                {
                    "video_id": vid,
                    "frame_count": video.frame_count,
                    "height": video.height,
                    "width": video.width,
                    "num_objects": k,
                }
            )
        return {"videos": out}

    @app.post("/api/sessions")
    async def create_session(body: dict):
        video_id = body.get("video_id")
        if video_id not in _video_ids():
            return JSONResponse({"detail": f"unknown video {video_id!r}"}, status_code=404)
        if len(sessions) >= config.max_sessions:
            return JSONResponse({"detail": "session limit reached"}, status_code=409)
        video, gt_masks, k = load_sequence(Path(config.data_dir) / video_id)
        if video.height * video.width * video.frame_count > config.max_video_pixels:
            return JSONResponse({"detail": "video too large"}, status_code=413)
        session = InteractiveSession(
            video, params, SessionConfig(k=config.k, embed=config.embed), num_objects=k
        )
        sid = uuid.uuid4().hex
        sessions[sid] = _SessionRecord(session, video_id, video, gt_masks, k)
        return {
            "session_id": sid,
            "video_id": video_id,
            "frame_count": video.frame_count,
            "height": video.height,
            "width": video.width,
            "num_objects": k,
        }

    @app.get("/api/sessions/{sid}/frames/{index}")
    async def get_frame(sid: str, index: int):
        record = sessions.get(sid)
        if record is None:
            return _not_found()
        if not 0 <= index < record.video.frame_count:
            return JSONResponse({"detail": "frame out of range"}, status_code=400)
        return Response(content=_frame_png(record.video, index), media_type="image/png")

    @app.post("/api/sessions/{sid}/clicks")
    async def post_click(sid: str, click: ClickRequest):
        record = sessions.get(sid)
        if record is None:
            return _not_found()
        annotation = Annotation(click.frame, click.row, click.col, click.label)
        try:
            changed = record.session.add_click(annotation)
        except ValueError as exc:
            return JSONResponse({"detail": str(exc)}, status_code=400)
        await _broadcast(record)
        return {
            "changed_cells": int(changed),
            "click_count": len(record.session.click_log),
            "masks_ready": record.session.masks_ready,
        }

    @app.get("/api/sessions/{sid}/masks")
    async def get_masks(sid: str):
        record = sessions.get(sid)
        if record is None:
            return _not_found()
        return _mask_payload(record)

    @app.get("/api/sessions/{sid}/metrics")
    async def get_metrics(sid: str):
        record = sessions.get(sid)
        if record is None:
            return _not_found()
        if record.gt_masks is None or record.num_objects < 1:
            return {"available": False, "reason": "no ground truth"}
        if not record.session.masks_ready:
            return {"available": False, "reason": "insufficient references"}
        preds = record.session.masks()
        score = evaluate_sequence(list(preds), list(record.gt_masks), record.num_objects)
        return {
            "available": True,
            "mean_j": score.mean_j,
            "mean_f": score.mean_f,
            "per_frame_j": list(score.per_frame_j),
            "per_frame_f": list(score.per_frame_f),
        }

    @app.post("/api/sessions/{sid}/reset")
    async def reset_session(sid: str):
        record = sessions.get(sid)
        if record is None:
            return _not_found()
        record.session.reset()
        await _broadcast(record)
        return {"ok": True}

    @app.get("/api/sessions/{sid}/stats")
    async def get_stats(sid: str):
        record = sessions.get(sid)
        if record is None:
            return _not_found()
        return {
            "forward_pass_count": record.session.forward_pass_count,
            "pool_size": len(record.session.pool),
            "click_count": len(record.session.click_log),
        }

    @app.websocket("/api/sessions/{sid}/updates")
    async def updates(ws: WebSocket, sid: str):
        record = sessions.get(sid)
        if record is None:
            await ws.close(code=4404)
            return
        await ws.accept()
        record.watchers.append(ws)
        try:
            while True:
                await ws.receive_text()  # keepalive pings; content ignored
        except WebSocketDisconnect:
            if ws in record.watchers:
                record.watchers.remove(ws)

    return app
