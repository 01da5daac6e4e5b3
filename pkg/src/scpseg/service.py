"""Interactive segmentation session API.

Sessions hold an uploaded image with its precomputed features and weight
matrix (the expensive step, paid once), a mutable scribble set, and the
last segmentation. Scribble edits bump a revision counter; results are
tagged with the revision they reflect so clients can detect staleness.
All state is in memory only; a restart clears every session.
"""
from __future__ import annotations

import base64
import io
import threading
import uuid
from dataclasses import dataclass, field, replace

from fastapi import FastAPI, File, Request, UploadFile
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from . import constraints as cons
from . import errors as err
from . import features as feat
from . import ncut
from .pipeline import GraphCache, RunConfig, config_from_dict, segment_arrays


@dataclass(frozen=True)
class ServiceConfig:
    size_cap: int = 512  # max width/height accepted
    seed: int = 0
    ui_dir: str | None = None
    run: RunConfig = field(default_factory=lambda: RunConfig(n_s=600))


@dataclass
class Session:
    id: str
    image: feat.RasterImage
    cache: GraphCache
    seed: int
    scribbles: dict = field(default_factory=dict)  # pixel -> label name
    revision: int = 0
    last_result: dict | None = None
    lock: threading.Lock = field(default_factory=threading.Lock)


def _error_response(status: int, code: str, message: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"code": code, "message": message})


def _mask_png_base64(seg: ncut.Segmentation, width: int, height: int) -> str:
    from PIL import Image

    colors = ncut.region_colors(seg.k)
    rgb = colors[seg.labels.reshape(height, width)]
    buf = io.BytesIO()
    Image.fromarray(rgb, mode="RGB").save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def create_app(cfg: ServiceConfig | None = None) -> FastAPI:
    cfg = cfg or ServiceConfig()
    app = FastAPI(title="scpseg interactive segmentation")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    sessions: dict[str, Session] = {}
    app.state.sessions = sessions

    def _get(session_id: str) -> Session:
        sess = sessions.get(session_id)
        if sess is None:
            raise err.UnknownSession(session_id)
        return sess

    @app.exception_handler(err.UnknownSession)
    async def _unknown(request: Request, exc: err.UnknownSession):
        return _error_response(404, "unknown_session", f"no session {exc}")

    @app.exception_handler(err.PixelOutOfRange)
    async def _pixel_range(request: Request, exc: err.PixelOutOfRange):
        return _error_response(400, "pixel_out_of_range", str(exc))

    @app.exception_handler(err.NonFinite)
    @app.exception_handler(err.NoConvergence)
    @app.exception_handler(err.NumericalFailure)
    async def _numerical(request: Request, exc: err.ScpsegError):
        return _error_response(500, "numerical_failure", str(exc))

    @app.exception_handler(err.ScpsegError)
    async def _generic(request: Request, exc: err.ScpsegError):
        return _error_response(400, type(exc).__name__, str(exc))

    @app.post("/sessions")
    async def create_session(image: UploadFile = File(...)):
        blob = await image.read()
        try:
            import tempfile

            with tempfile.NamedTemporaryFile(suffix="_upload") as tmp:
                tmp.write(blob)
                tmp.flush()
                raster = feat.load_image(tmp.name)
        except err.UnsupportedFormat as exc:
            return _error_response(415, "unsupported_format", str(exc))
        except (err.CorruptImage, err.IoError) as exc:
            return _error_response(400, "corrupt_image", str(exc))
        if max(raster.width, raster.height) > cfg.size_cap:
            return _error_response(
                413,
                "image_too_large",
                f"{raster.width}x{raster.height} exceeds the "
                f"{cfg.size_cap}px session cap",
            )

        sess = Session(
            id=uuid.uuid4().hex,
            image=raster,
            cache=GraphCache(),
            seed=cfg.seed,
        )
        sessions[sess.id] = sess
        return {"session": sess.id, "width": raster.width, "height": raster.height}

    @app.post("/sessions/{session_id}/scribbles")
    async def update_scribbles(session_id: str, body: dict):
        sess = _get(session_id)
        add = body.get("add", [])
        remove = body.get("remove", [])
        with sess.lock:
            staged = dict(sess.scribbles)
            for entry in add:
                x, y = int(entry["x"]), int(entry["y"])
                if not (0 <= x < sess.image.width and 0 <= y < sess.image.height):
                    raise err.PixelOutOfRange(f"({x},{y}) outside the image")
                staged[y * sess.image.width + x] = str(entry["label"])
            for entry in remove:
                x, y = int(entry["x"]), int(entry["y"])
                if not (0 <= x < sess.image.width and 0 <= y < sess.image.height):
                    raise err.PixelOutOfRange(f"({x},{y}) outside the image")
                staged.pop(y * sess.image.width + x, None)  # idempotent removal
            sess.scribbles = staged
            sess.revision += 1
            return {"revision": sess.revision}

    @app.post("/sessions/{session_id}/segment")
    async def segment(session_id: str, body: dict | None = None):
        sess = _get(session_id)
        overrides = (body or {}).get("params", {}) or {}
        with sess.lock:
            run_cfg = config_from_dict(overrides, base=cfg.run)
            run_cfg = replace(run_cfg, seed=sess.seed)

            lp = _labeled_pixels(sess)
            method = run_cfg.method
            if lp is None or len(set(l for _, l in lp.entries)) < 1 or len(lp) == 0:
                method = "ncut"  # no scribbles: plain cuts fallback
            run_cfg = replace(run_cfg, method=method)

            max_ns = max(0, sess.image.n - _scribble_count(sess))
            if run_cfg.n_s > max_ns:
                run_cfg = replace(run_cfg, n_s=max_ns)

            arts = segment_arrays(sess.image, lp, None, run_cfg, cache=sess.cache)
            result = {
                "revision": sess.revision,
                "method": arts.method,
                "k": arts.segmentation.k,
                "ncut_value": arts.segmentation.ncut_value,
                "mask_png_base64": _mask_png_base64(
                    arts.segmentation, sess.image.width, sess.image.height
                ),
                "timings": arts.report.runtime_seconds,
            }
            sess.last_result = result
            return result

    @app.get("/sessions/{session_id}")
    async def get_state(session_id: str):
        sess = _get(session_id)
        w = sess.image.width
        return {
            "session": sess.id,
            "width": sess.image.width,
            "height": sess.image.height,
            "revision": sess.revision,
            "scribbles": [
                {"x": int(p % w), "y": int(p // w), "label": lab}
                for p, lab in sorted(sess.scribbles.items())
            ],
            "scribble_count": len(sess.scribbles),
            "graph_builds": sess.cache.graph_builds,
            "last_result_revision": (
                sess.last_result["revision"] if sess.last_result else None
            ),
        }

    @app.delete("/sessions/{session_id}")
    async def delete_session(session_id: str):
        _get(session_id)
        del sessions[session_id]
        return {"deleted": session_id}

    if cfg.ui_dir:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=cfg.ui_dir, html=True), name="ui")

    return app


def _scribble_count(sess: Session) -> int:
    return len(sess.scribbles)


def _labeled_pixels(sess: Session):
    if not sess.scribbles:
        return None
    names = sorted(set(sess.scribbles.values()))
    name_to_id = {n: i for i, n in enumerate(names)}
    entries = tuple(
        (pix, name_to_id[lab]) for pix, lab in sorted(sess.scribbles.items())
    )
    return cons.LabeledPixels(entries=entries)
