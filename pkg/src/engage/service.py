"""HTTP service backing the browser annotation tool.

Serves video media with range-request support, accepts annotation uploads in
the JSONL wire format, returns stored tracks, and exposes model prediction
overlays for recorded videos.
"""

from __future__ import annotations

import os
import threading

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import FileResponse, JSONResponse, PlainTextResponse
from fastapi.staticfiles import StaticFiles

from . import annotation as ann
from .errors import EngageError
from .model import forward_batch, load_checkpoint

VIDEO_EXTENSIONS = (".mp4", ".webm", ".mov", ".avi", ".mkv")


def create_app(
    data_dir: str,
    checkpoint_path: str | None = None,
    w: int = 10,
    static_dir: str | None = None,
) -> FastAPI:
    """Build the annotator app rooted at `data_dir` (videos/, annotations/,
    features/ subdirectories; ENGAGE_DATA_DIR overrides)."""
    data_dir = os.environ.get("ENGAGE_DATA_DIR", data_dir)
    videos_dir = os.path.join(data_dir, "videos")
    annotations_dir = os.path.join(data_dir, "annotations")
    features_dir = os.path.join(data_dir, "features")
    os.makedirs(annotations_dir, exist_ok=True)

    app = FastAPI(title="engage annotator")
    persist_locks: dict[str, threading.Lock] = {}
    locks_guard = threading.Lock()

    model = None
    if checkpoint_path and os.path.isfile(checkpoint_path):
        ck = load_checkpoint(checkpoint_path)
        model = ck.best_params
        w = ck.config.w

    def lock_for(video_id: str) -> threading.Lock:
        with locks_guard:
            return persist_locks.setdefault(video_id, threading.Lock())

    @app.get("/videos")
    def list_videos():
        ids = set()
        if os.path.isdir(videos_dir):
            for f in os.listdir(videos_dir):
                if f.lower().endswith(VIDEO_EXTENSIONS):
                    ids.add(os.path.splitext(f)[0])
        if os.path.isdir(features_dir):
            for f in os.listdir(features_dir):
                if f.endswith(".egft"):
                    ids.add(os.path.splitext(f)[0])
        return {"videos": sorted(ids)}

    @app.get("/videos/{video_id}")
    def video_media(video_id: str):
        if os.path.isdir(videos_dir):
            for f in sorted(os.listdir(videos_dir)):
                stem, ext = os.path.splitext(f)
                if stem == video_id and ext.lower() in VIDEO_EXTENSIONS:
                    return FileResponse(os.path.join(videos_dir, f))
        return JSONResponse({"error": f"no media for {video_id}"}, status_code=404)

    @app.post("/annotations", status_code=201)
    async def post_annotation(request: Request):
        body = (await request.body()).decode("utf-8")
        try:
            track = ann.parse_annotation_jsonl(body)
        except EngageError as e:
            detail = {"error": str(e)}
            if hasattr(e, "line"):
                detail["line"] = e.line
            return JSONResponse(detail, status_code=400)
        path = os.path.join(annotations_dir, f"{track.video_id}__{track.coder_id}.jsonl")
        with lock_for(track.video_id):
            ann.write_annotation_track(track, path, format="jsonl")
        return {"video_id": track.video_id, "coder_id": track.coder_id, "frames": len(track.values)}

    @app.get("/annotations/{video_id}/{coder_id}")
    def get_annotation(video_id: str, coder_id: str):
        path = os.path.join(annotations_dir, f"{video_id}__{coder_id}.jsonl")
        if not os.path.isfile(path):
            return JSONResponse({"error": "not found"}, status_code=404)
        with open(path, "r", encoding="utf-8") as f:
            return PlainTextResponse(f.read(), media_type="application/x-ndjson")

    @app.get("/predictions/{video_id}")
    def predictions(video_id: str):
        if model is None:
            return JSONResponse({"error": "no checkpoint loaded"}, status_code=404)
        shard = os.path.join(features_dir, f"{video_id}.egft")
        if not os.path.isfile(shard):
            return JSONResponse({"error": f"no features for {video_id}"}, status_code=404)
        from .backbone import read_feature_file

        vectors = read_feature_file(shard, video_id=video_id)
        feats = np.stack([fv.values for fv in vectors]).astype(np.float64)
        n = len(feats)
        if n < w:
            return {"video_id": video_id, "w": w, "series": [], "start_frame": w - 1}
        windows = np.stack([feats[i : i + w] for i in range(n - w + 1)])
        series = []
        for lo in range(0, len(windows), 256):
            y, _ = forward_batch(model, windows[lo : lo + 256])
            series.extend(float(v) for v in y)
        return {"video_id": video_id, "w": w, "series": series, "start_frame": w - 1}

    if static_dir and os.path.isdir(static_dir):
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")

    return app
