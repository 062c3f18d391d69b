"""HTTP inference service: upload an X-ray, get probabilities, top-5, flags, CAM.

Plain predictions run concurrently against the read-only model; explain
requests need gradient capture (stateful) and are serialized behind a lock.
"""

from __future__ import annotations

import base64
import io
import threading
import time

from fastapi import FastAPI, File, Query, UploadFile
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from PIL import Image, UnidentifiedImageError

from dacnet.evaluation import ThresholdSet, read_thresholds
from dacnet.explain import grad_cam, overlay
from dacnet.labels import DISEASES
from dacnet.models import load_checkpoint, model_from_checkpoint, predict_probabilities
from dacnet.recipes import recipe_from_dict
from dacnet.transforms import build_eval_transform

MAX_UPLOAD_BYTES = 20 * 1024 * 1024
TOP_K = 5


class ModelRuntime:
    """Everything the endpoints need, bound once at startup."""

    def __init__(self, model, recipe, thresholds: ThresholdSet | None, fingerprint: str):
        self.model = model
        self.recipe = recipe
        self.fingerprint = fingerprint
        self.transform = build_eval_transform(recipe.transform)
        self.cam_lock = threading.Lock()
        self.started_at = time.monotonic()
        self.default_thresholds = thresholds is None
        self.thresholds = thresholds or ThresholdSet.global_threshold(0.5)

    @classmethod
    def from_checkpoint(cls, checkpoint_path, thresholds_path=None) -> "ModelRuntime":
        payload = load_checkpoint(checkpoint_path)
        model = model_from_checkpoint(payload)
        recipe = recipe_from_dict(payload["recipe"])
        thresholds = read_thresholds(thresholds_path) if thresholds_path else None
        return cls(model, recipe, thresholds, payload["fingerprint"])


def create_app(
    checkpoint_path=None,
    thresholds_path=None,
    runtime: ModelRuntime | None = None,
    cors_origins: tuple[str, ...] = ("*",),
) -> FastAPI:
    """Build the service app; without a checkpoint it answers 503 everywhere."""
    app = FastAPI(title="dacnet inference service")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=list(cors_origins),
        allow_methods=["*"],
        allow_headers=["*"],
    )
    if runtime is None and checkpoint_path is not None:
        runtime = ModelRuntime.from_checkpoint(checkpoint_path, thresholds_path)
    app.state.runtime = runtime

    def not_ready():
        return JSONResponse(status_code=503, content={"detail": "model not loaded"})

    @app.get("/health")
    def health():
        rt: ModelRuntime | None = app.state.runtime
        if rt is None:
            return not_ready()
        return {
            "status": "ok",
            "model_fingerprint": rt.fingerprint,
            "diseases": list(DISEASES),
            "thresholds_fitted_on": "default-0.5" if rt.default_thresholds else rt.thresholds.fitted_on,
            "cam_supported": rt.model.cam_supported,
            "uptime_s": round(time.monotonic() - rt.started_at, 3),
        }

    @app.post("/predict")
    async def predict(
        image: UploadFile = File(...),
        explain: str = Query("none", description="none, top1, or a disease name"),
    ):
        rt: ModelRuntime | None = app.state.runtime
        if rt is None:
            return not_ready()
        data = await image.read()
        if len(data) > MAX_UPLOAD_BYTES:
            return JSONResponse(
                status_code=413,
                content={"detail": f"payload exceeds {MAX_UPLOAD_BYTES} bytes"},
            )
        try:
            pil = Image.open(io.BytesIO(data))
            pil.load()
        except (UnidentifiedImageError, OSError) as exc:
            return JSONResponse(
                status_code=400, content={"detail": f"cannot decode image: {exc}"}
            )
        tensor = rt.transform(pil)
        probs = predict_probabilities(rt.model, tensor[None])[0]
        probabilities = {name: float(probs[i]) for i, name in enumerate(DISEASES)}
        ranked = sorted(probabilities.items(), key=lambda kv: (-kv[1], kv[0]))
        top5 = [{"disease": name, "probability": p} for name, p in ranked[:TOP_K]]
        flagged = [
            name
            for i, name in enumerate(DISEASES)
            if probabilities[name] >= rt.thresholds.values[i]
        ]
        response: dict = {
            "probabilities": probabilities,
            "top5": top5,
            "flagged": flagged,
            "model_fingerprint": rt.fingerprint,
        }
        if rt.default_thresholds:
            response["warning"] = "no fitted thresholds loaded; using global 0.5"

        if explain != "none":
            target = ranked[0][0] if explain == "top1" else explain
            if target not in DISEASES:
                return JSONResponse(
                    status_code=400, content={"detail": f"unknown disease {target!r}"}
                )
            if not rt.model.cam_supported:
                return JSONResponse(
                    status_code=400,
                    content={"detail": "explanations unsupported for this backbone"},
                )
            with rt.cam_lock:
                heatmap = grad_cam(rt.model, tensor, target)
            preview = pil.convert("RGB").resize((224, 224))
            rendered = overlay(heatmap, preview)
            buf = io.BytesIO()
            rendered.save(buf, format="PNG")
            response["heatmap"] = {
                "disease": target,
                "png_base64": base64.b64encode(buf.getvalue()).decode("ascii"),
            }
        return response

    return app


def serve(app: FastAPI, host: str = "127.0.0.1", port: int = 8000) -> None:
    import uvicorn

    uvicorn.run(app, host=host, port=port)
