"""FastAPI application exposing the run engine.

POST /density /spectrum /mc /transforms /examples take a RunRequest and
return the artifacts as CSV payload strings plus the run manifest.
Configuration errors surface as 400, numerical validation failures as 409
(the CLI maps these to exits 2 and 3).
"""

from __future__ import annotations

from fastapi import FastAPI, HTTPException

from .. import __version__
from ..presets import PRESET_NAMES
from ..runner import RunConfig, UsageError, ValidationFailure, compute
from .schemas import HealthResponse, PresetsResponse, RunRequest, RunResponse


def _run(subcommand: str, req: RunRequest) -> RunResponse:
    config = RunConfig(
        subcommand=subcommand,
        preset=req.preset,
        model=req.model,
        grid=req.grid,
        re_window=req.re_window,
        im_window=req.im_window,
        t=req.t,
        alpha=req.alpha,
        beta=req.beta,
        q=req.q,
        n=req.n,
        samples=req.samples,
        seed=req.seed,
        threads=req.threads,
    )
    try:
        result = compute(config)
    except UsageError as exc:
        raise HTTPException(status_code=400, detail=str(exc)) from exc
    except ValidationFailure as exc:
        raise HTTPException(status_code=409, detail=str(exc)) from exc
    return RunResponse(files=result.files, manifest=result.manifest)


def create_app() -> FastAPI:
    app = FastAPI(title="freespectra", version=__version__)

    @app.post("/density", response_model=RunResponse)
    def density(req: RunRequest) -> RunResponse:
        return _run("density", req)

    @app.post("/spectrum", response_model=RunResponse)
    def spectrum(req: RunRequest) -> RunResponse:
        return _run("spectrum", req)

    @app.post("/mc", response_model=RunResponse)
    def mc(req: RunRequest) -> RunResponse:
        return _run("mc", req)

    @app.post("/transforms", response_model=RunResponse)
    def transforms(req: RunRequest) -> RunResponse:
        return _run("transforms", req)

    @app.post("/examples", response_model=RunResponse)
    def examples(req: RunRequest) -> RunResponse:
        return _run("examples", req)

    @app.get("/presets", response_model=PresetsResponse)
    def presets() -> PresetsResponse:
        return PresetsResponse(presets=list(PRESET_NAMES))

    @app.get("/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        return HealthResponse(status="ok", version=__version__)

    return app
