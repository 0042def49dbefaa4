"""FastAPI application exposing the navigation service.

Run with ``uvicorn polarnav.service.app:app``. Domain errors map to HTTP
422 with a body naming the error class, so thin clients can translate them
back without string matching.
"""

from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__
from ..errors import ConfigError, PolarNavError
from . import handlers
from .models import (
    BatchRequest,
    BatchResponse,
    ErrorBody,
    ExtractRequest,
    ExtractResponse,
    HealthResponse,
    RunRequest,
    RunResponse,
    SynthRequest,
    SynthResponse,
    ValidateRequest,
    ValidateResponse,
)

app = FastAPI(title="polarnav service", version=__version__)


@app.exception_handler(PolarNavError)
async def domain_error_handler(request: Request, exc: PolarNavError):
    status = 400 if isinstance(exc, ConfigError) else 422
    body = ErrorBody(error=type(exc).__name__, detail=str(exc))
    return JSONResponse(status_code=status, content=body.model_dump())


@app.get("/health", response_model=HealthResponse)
def health() -> HealthResponse:
    return HealthResponse(status="ok", version=__version__)


@app.post("/v1/extract", response_model=ExtractResponse,
          responses={422: {"model": ErrorBody}, 400: {"model": ErrorBody}})
def extract(req: ExtractRequest) -> ExtractResponse:
    return handlers.handle_extract(req)


@app.post("/v1/run", response_model=RunResponse,
          responses={422: {"model": ErrorBody}, 400: {"model": ErrorBody}})
def run(req: RunRequest) -> RunResponse:
    return handlers.handle_run(req)


@app.post("/v1/batch", response_model=BatchResponse,
          responses={422: {"model": ErrorBody}, 400: {"model": ErrorBody}})
def batch(req: BatchRequest) -> BatchResponse:
    return handlers.handle_batch(req)


@app.post("/v1/synth", response_model=SynthResponse,
          responses={422: {"model": ErrorBody}, 400: {"model": ErrorBody}})
def synth(req: SynthRequest) -> SynthResponse:
    return handlers.handle_synth(req)


@app.post("/v1/validate", response_model=ValidateResponse)
def validate(req: ValidateRequest) -> ValidateResponse:
    return handlers.handle_validate(req)
