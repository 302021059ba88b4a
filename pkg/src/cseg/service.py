"""HTTP JSON API exposing annotation sessions to the companion UI.

Sessions are in-memory and single-writer: one solve at a time per session,
many sessions side by side. All binary artifacts are PNG; scribble bodies
use the same JSON schema as the CLI files.
"""

from __future__ import annotations

import io
import json
import logging
import secrets
import tempfile
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, File, Form, Request, UploadFile
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, Response
from PIL import Image

from .errors import CsegError, PolicyViolationError
from .raster import load_field, load_image, load_superpixels, grid_superpixels
from .scribble import ScribbleSet
from .session import Session, SessionConfig, render, render_regions

log = logging.getLogger("cseg.service")


def class_palette(class_id: int) -> tuple:
    """Stable, well-spread color per class id (golden-angle hue walk)."""
    import colorsys

    hue = (class_id * 0.61803398875) % 1.0
    r, g, b = colorsys.hsv_to_rgb(hue, 0.65, 0.95)
    return int(r * 255), int(g * 255), int(b * 255)


def render_overlay(image, class_map, region_map, alpha=0.5) -> bytes:
    """Class colors alpha-blended over the image, region boundaries darkened."""
    h, w = class_map.shape
    if image is not None:
        base = (image.data[:, :, :3] if image.channels >= 3 else
                np.repeat(image.data, 3, axis=2)) * 255.0
    else:
        base = np.full((h, w, 3), 255.0)
    colors = np.zeros((h, w, 3))
    for c in np.unique(class_map):
        colors[class_map == c] = class_palette(int(c))
    blended = (1 - alpha) * base + alpha * colors
    boundary = np.zeros((h, w), dtype=bool)
    boundary[:, 1:] |= region_map[:, 1:] != region_map[:, :-1]
    boundary[1:, :] |= region_map[1:, :] != region_map[:-1, :]
    blended[boundary] *= 0.25
    out = io.BytesIO()
    Image.fromarray(blended.round().astype(np.uint8), mode="RGB").save(out, format="PNG")
    return out.getvalue()


def _png_bytes(plane: np.ndarray) -> bytes:
    out = io.BytesIO()
    Image.fromarray(plane.astype(np.uint16)).save(out, format="PNG")
    return out.getvalue()


@dataclass
class SessionEntry:
    session: Session
    created_at: float
    last_access: float
    lock: threading.Lock = field(default_factory=threading.Lock)
    rounds: dict = field(default_factory=dict)  # round -> artifact dict
    running: int | None = None  # round index currently solving (async mode)
    error: str | None = None


class Registry:
    def __init__(self, idle_timeout_seconds: float, time_fn):
        self.idle_timeout = idle_timeout_seconds
        self.time_fn = time_fn
        self._lock = threading.Lock()
        self._entries: dict = {}

    def create(self, session: Session) -> str:
        now = self.time_fn()
        with self._lock:
            self._sweep(now)
            sid = secrets.token_hex(8)
            while sid in self._entries:
                sid = secrets.token_hex(8)
            self._entries[sid] = SessionEntry(session, now, now)
            return sid

    def get(self, sid: str) -> SessionEntry | None:
        now = self.time_fn()
        with self._lock:
            entry = self._entries.get(sid)
            if entry is None:
                return None
            if now - entry.last_access > self.idle_timeout:
                del self._entries[sid]
                return None
            entry.last_access = now
            return entry

    def _sweep(self, now: float) -> None:
        dead = [
            sid
            for sid, entry in self._entries.items()
            if now - entry.last_access > self.idle_timeout
        ]
        for sid in dead:
            del self._entries[sid]


def _load_upload(upload: UploadFile | None, loader, limit: int):
    if upload is None:
        return None
    payload = upload.file.read(limit + 1)
    if len(payload) > limit:
        raise _TooLarge()
    suffix = Path(upload.filename or "upload.bin").suffix or ".bin"
    with tempfile.NamedTemporaryFile(suffix=suffix, delete=False) as tmp:
        tmp.write(payload)
        tmp_path = Path(tmp.name)
    try:
        return loader(tmp_path)
    finally:
        tmp_path.unlink(missing_ok=True)


class _TooLarge(Exception):
    pass


def _session_config_from(doc: dict) -> SessionConfig:
    return SessionConfig(
        algorithm=doc.get("algorithm", doc.get("algo", "l0h")),
        lam=float(doc.get("lambda", doc.get("lam", 100.0))),
        eta=doc.get("eta"),
        time_limit=doc.get("time_limit"),
        node_limit=doc.get("node_limit"),
        cut_k=int(doc.get("cut_k", 3)),
        superpixel_target=int(doc.get("superpixel_target", 600)),
    )


def create_app(
    max_upload_bytes: int = 32 * 1024 * 1024,
    idle_timeout_seconds: float = 1800.0,
    async_solve: bool = False,
    time_fn=time.monotonic,
) -> FastAPI:
    app = FastAPI(title="cseg annotation service")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )
    registry = Registry(idle_timeout_seconds, time_fn)
    app.state.registry = registry

    @app.exception_handler(RequestValidationError)
    async def malformed(request: Request, exc: RequestValidationError):
        return JSONResponse({"detail": "malformed request"}, status_code=400)

    def check_length(request: Request):
        length = request.headers.get("content-length")
        if length and int(length) > max_upload_bytes:
            return JSONResponse({"detail": "upload too large"}, status_code=413)
        return None

    @app.post("/sessions", status_code=201)
    async def create_session(
        request: Request,
        image: UploadFile = File(...),
        superpixels: UploadFile = File(None),
        probmap: UploadFile = File(None),
        config: str = Form("{}"),
    ):
        oversize = check_length(request)
        if oversize is not None:
            return oversize
        try:
            doc = json.loads(config)
            cfg = _session_config_from(doc)
            plane = _load_upload(image, load_image, max_upload_bytes)
            prob = _load_upload(
                probmap,
                lambda p: load_field(p, expect_probability=True),
                max_upload_bytes,
            )
            sp = _load_upload(superpixels, load_superpixels, max_upload_bytes)
        except _TooLarge:
            return JSONResponse({"detail": "upload too large"}, status_code=413)
        except (CsegError, ValueError, json.JSONDecodeError) as exc:
            return JSONResponse({"detail": str(exc)}, status_code=422)
        if sp is None:
            sp = grid_superpixels(plane.width, plane.height, cfg.superpixel_target)
        if prob is not None and (prob.width, prob.height) != (plane.width, plane.height):
            return JSONResponse(
                {"detail": "probability map does not match the image size"},
                status_code=422,
            )
        if (sp.width, sp.height) != (plane.width, plane.height):
            return JSONResponse(
                {"detail": "superpixel map does not match the image size"},
                status_code=422,
            )
        features = prob if prob is not None else plane
        try:
            session = Session(features, sp, image=plane, probmap=prob, config=cfg)
        except (CsegError, ValueError) as exc:
            return JSONResponse({"detail": str(exc)}, status_code=422)
        sid = registry.create(session)
        return {"id": sid}

    def _artifact_urls(sid: str, round_index: int) -> dict:
        base = f"/sessions/{sid}/artifacts/{round_index}"
        return {
            "class_map": f"{base}/class.png",
            "instance_map": f"{base}/instance.png",
            "overlay": f"{base}/overlay.png",
        }

    def _round_payload(sid: str, entry: SessionEntry, round_index: int) -> dict:
        stored = entry.rounds[round_index]
        return {
            "round": round_index,
            "status": "done",
            "report": stored["report"],
            "pngs": _artifact_urls(sid, round_index),
        }

    def _execute_round(entry: SessionEntry, scribbles: ScribbleSet, round_index: int):
        session = entry.session
        try:
            record = session.run_round(scribble_set=scribbles)
            class_map, instance_map = render(record.labels, record.sp, record.scribbles)
            region_map = render_regions(record.labels, record.sp)
            report = {
                "algo": session.config.algorithm,
                "status": record.status,
                "objective": record.objective,
                "policy_violations": record.policy_violations,
                "timings": record.timings,
            }
            if record.report is not None:
                report["metrics"] = record.report.to_dict()
            entry.rounds[round_index] = {
                "report": report,
                "class.png": _png_bytes(class_map),
                "instance.png": _png_bytes(instance_map),
                "overlay.png": render_overlay(session.image, class_map, region_map),
            }
            entry.error = None
        except Exception as exc:  # surfaced via the status endpoint
            log.exception("round %d failed", round_index)
            entry.error = str(exc)
        finally:
            entry.running = None

    def _async_round(entry: SessionEntry, scribbles, round_index):
        try:
            _execute_round(entry, scribbles, round_index)
        finally:
            entry.lock.release()

    @app.post("/sessions/{sid}/scribbles")
    async def post_scribbles(sid: str, request: Request):
        entry = registry.get(sid)
        if entry is None:
            return JSONResponse({"detail": "unknown session"}, status_code=404)
        oversize = check_length(request)
        if oversize is not None:
            return oversize
        try:
            body = await request.body()
            scribbles = ScribbleSet.from_json(body.decode("utf-8"))
        except (ValueError, KeyError, UnicodeDecodeError) as exc:
            return JSONResponse({"detail": f"bad scribble JSON: {exc}"}, status_code=400)
        if not entry.lock.acquire(blocking=False):
            return JSONResponse({"detail": "a round is in flight"}, status_code=409)
        handed_off = False
        try:
            round_index = entry.session.rounds_run
            from .scribble import validate_policy

            policy = validate_policy(
                scribbles, entry.session.base_sp.width, entry.session.base_sp.height
            )
            if not policy.ok:
                return JSONResponse(
                    {"detail": "policy violations", "violations": policy.violations},
                    status_code=422,
                )
            try:
                entry.session._merge(scribbles, None)
            except ValueError as exc:
                return JSONResponse({"detail": str(exc)}, status_code=422)
            if async_solve:
                entry.running = round_index
                worker = threading.Thread(
                    target=_async_round, args=(entry, scribbles, round_index), daemon=True
                )
                handed_off = True
                worker.start()
                return {"round": round_index, "status": "running"}
            _execute_round(entry, scribbles, round_index)
            if entry.error:
                return JSONResponse({"detail": entry.error}, status_code=500)
            return _round_payload(sid, entry, round_index)
        finally:
            if not handed_off:
                entry.lock.release()

    @app.get("/sessions/{sid}/segmentation")
    async def get_segmentation(sid: str, round: int | None = None):
        entry = registry.get(sid)
        if entry is None:
            return JSONResponse({"detail": "unknown session"}, status_code=404)
        if round is None:
            if not entry.rounds:
                if entry.running is not None:
                    return JSONResponse(
                        {"round": entry.running, "status": "running"}, status_code=202
                    )
                return JSONResponse({"detail": "no rounds yet"}, status_code=404)
            round = max(entry.rounds)
        if round not in entry.rounds:
            if entry.running == round:
                return JSONResponse({"round": round, "status": "running"}, status_code=202)
            return JSONResponse({"detail": f"round {round} not found"}, status_code=404)
        return _round_payload(sid, entry, round)

    @app.get("/sessions/{sid}/artifacts/{round_index}/{name}")
    async def get_artifact(sid: str, round_index: int, name: str):
        entry = registry.get(sid)
        if entry is None or round_index not in entry.rounds:
            return JSONResponse({"detail": "not found"}, status_code=404)
        stored = entry.rounds[round_index]
        if name not in stored or name == "report":
            return JSONResponse({"detail": "not found"}, status_code=404)
        return Response(content=stored[name], media_type="image/png")

    return app


def main() -> None:
    import argparse

    import uvicorn

    parser = argparse.ArgumentParser(description="cseg annotation service")
    parser.add_argument("--bind", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8571)
    parser.add_argument("--max-upload-mb", type=int, default=32)
    parser.add_argument("--idle-timeout", type=float, default=1800.0)
    parser.add_argument("--async", dest="async_solve", action="store_true")
    args = parser.parse_args()
    app = create_app(
        max_upload_bytes=args.max_upload_mb * 1024 * 1024,
        idle_timeout_seconds=args.idle_timeout,
        async_solve=args.async_solve,
    )
    uvicorn.run(app, host=args.bind, port=args.port, log_level="warning")


if __name__ == "__main__":
    main()
