"""HTTP/JSON front end. Request and response bodies are described in docs/http.md."""

from __future__ import annotations

import json

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from fastapi.concurrency import run_in_threadpool

from microcast.service.core import ForecastService, ServiceError


def create_app(service: ForecastService) -> FastAPI:
    app = FastAPI(title="microcast", version="1")
    app.state.service = service

    @app.exception_handler(ServiceError)
    def _service_error(request: Request, exc: ServiceError):
        return JSONResponse(status_code=exc.status, content=exc.body())

    @app.get("/health")
    def health():
        return service.health()

    @app.post("/v1/readings")
    async def post_readings(request: Request):
        raw = await request.body()
        try:
            payload = json.loads(raw)
        except (ValueError, UnicodeDecodeError):
            raise ServiceError(400, "malformed-body", "body is not valid JSON") from None
        return await run_in_threadpool(service.submit, payload)

    @app.get("/v1/forecast")
    def get_forecast(sensor: str | None = None, channel: str | None = None, issue: str | None = None):
        return service.forecast(sensor, channel, issue)

    @app.get("/v1/models")
    def get_models():
        return service.models()

    @app.post("/v1/models/reload")
    def reload_models():
        return service.reload_models()

    return app
