import logging
import os
import time

import numpy as np
from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel

from .pipeline.errors import DataError, MotionRocketError
from .pipeline.model_io import load_model
from .pipeline.models import LatencySummary, Prediction
from .pipeline.ridge import RidgeModel
from .pipeline.serve import MotionServer
from .pipeline.signal import MotionWindow
from .pipeline.training import classify

VERSION = "1.0.0"
MODEL_ENV = "MOTIONROCKET_MODEL"

logger = logging.getLogger(__name__)


class PredictRequest(BaseModel):
    window: list[list[float]]


def create_app(server: MotionServer | None = None, model: RidgeModel | None = None) -> FastAPI:
    """Status and prediction API; shares the live server's model and counters when given one."""
    if model is None and server is not None:
        model = server.model
    started = time.time()

    app = FastAPI(
        title="MotionRocket",
        description="Real-time IMU motion recognition: live counters, latency and one-shot prediction",
        version=VERSION,
    )
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_credentials=True,
        allow_methods=["*"],
        allow_headers=["*"],
    )

    @app.get("/health")
    async def health_check():
        """Health check endpoint for monitoring."""
        return {
            "status": "healthy",
            "service": "MotionRocket",
            "version": VERSION,
            "model_loaded": model is not None,
            "uptime_s": round(time.time() - started, 3),
        }

    @app.get("/status")
    async def status():
        if server is None:
            raise HTTPException(status_code=404, detail="no live server attached")
        payload = server.stats.as_dict()
        payload["osc_target"] = server.cfg.osc
        payload["window_len"] = server.cfg.window_len
        payload["hop_len"] = server.cfg.hop_len
        return payload

    @app.get("/latency", response_model=LatencySummary)
    async def latency():
        if server is None or not server.latency_log.records:
            raise HTTPException(status_code=409, detail="no latency records yet")
        return server.latency_log.summary()

    @app.post("/predict", response_model=Prediction)
    async def predict(req: PredictRequest):
        if model is None:
            raise HTTPException(status_code=503, detail="no model loaded")
        try:
            data = np.asarray(req.window, dtype=np.float64)
            params = model.rocket_params
            if data.ndim != 2 or data.shape != (params.num_channels, params.input_length):
                raise DataError(
                    f"window shape {data.shape} does not match model {params.num_channels}x{params.input_length}"
                )
            return classify(model, MotionWindow(data=data))
        except (DataError, ValueError) as e:
            raise HTTPException(status_code=422, detail=str(e))
        except MotionRocketError as e:
            logger.error(f"❌ Prediction error: {e}")
            raise HTTPException(status_code=500, detail=f"Prediction error: {e}")

    return app


def _default_model() -> RidgeModel | None:
    path = os.getenv(MODEL_ENV)
    return load_model(path) if path else None


app = create_app(model=_default_model())
