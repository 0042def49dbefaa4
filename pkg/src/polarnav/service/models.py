"""Request/response models of the navigation service API."""

from __future__ import annotations

from typing import Literal, Optional

from pydantic import BaseModel, Field


class ExtractRequest(BaseModel):
    """Solar-vector extraction from a mosaic image."""

    image_b64: str = Field(description="base64-encoded binary 16-bit PGM")
    camera_config: str = Field(description="camera config text ([camera] section)")
    include_debug_csv: bool = False


class ExtractResponse(BaseModel):
    vector: list[float] = Field(description="sign-canonical unit solar vector, body frame")
    min_eigenvalue: float
    eigen_gap: float
    sample_count: int
    used_samples: int
    total_superpixels: int
    debug_csv: Optional[str] = None


class RunRequest(BaseModel):
    """One fused scenario run from a scenario config."""

    config: str = Field(description="scenario config text")
    seed: Optional[int] = Field(default=None, description="override [run] seed")


class RunResponse(BaseModel):
    seed: int
    csv: str = Field(description="per-epoch record CSV")
    summary: str = Field(description="terminal / RMS error summary text")


class BatchRequest(BaseModel):
    config: str
    n_seeds: int = Field(ge=1, le=10000)
    base_seed: Optional[int] = None


class BatchResponse(BaseModel):
    base_seed: int
    n_seeds: int
    stats: str = Field(description="per-seed rows plus '#' aggregate block")


class SynthRequest(BaseModel):
    """Synthetic sky image generation from a scene config."""

    config: str
    seed: Optional[int] = None


class SynthResponse(BaseModel):
    seed: int
    pgm_b64: str
    truth: str = Field(description="truth sidecar text (key = value lines)")


class ValidateRequest(BaseModel):
    kind: Literal["scenario", "camera", "scene"]
    config: str


class ValidateResponse(BaseModel):
    valid: bool
    error: Optional[str] = None


class HealthResponse(BaseModel):
    status: str
    version: str


class ErrorBody(BaseModel):
    error: str = Field(description="domain error class name")
    detail: str
