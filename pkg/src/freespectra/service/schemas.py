"""Request/response models for the HTTP service.

One request shape serves all five artifact endpoints; the subcommand is
carried by the route.  Artifacts travel as named CSV payload strings so the
client (CLI or anything else) decides where files land.
"""

from __future__ import annotations

from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, Field


class RunRequest(BaseModel):
    preset: Optional[str] = None
    model: Optional[dict] = None
    grid: Optional[int] = Field(default=None, ge=2)
    re_window: Optional[Tuple[float, float, int]] = None
    im_window: Optional[Tuple[float, float, int]] = None
    t: Optional[float] = Field(default=None, gt=0)
    alpha: Optional[float] = None
    beta: Optional[float] = None
    q: Optional[float] = None
    n: int = Field(default=150, ge=1)
    samples: int = Field(default=200, ge=1)
    seed: int = 1
    threads: int = Field(default=1, ge=1)


class RunResponse(BaseModel):
    files: Dict[str, str]
    manifest: dict


class PresetsResponse(BaseModel):
    presets: List[str]


class HealthResponse(BaseModel):
    status: str
    version: str
