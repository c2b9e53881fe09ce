"""FastAPI application exposing the simulator as an HTTP service."""

from __future__ import annotations

from fastapi import FastAPI, HTTPException

from .. import __version__
from ..errors import DenseCapExceeded, DimensionOverflow, HeraldImpossible, InvalidIR, QmalError
from . import handlers
from .schemas import (
    CompareRequest,
    CompareResponse,
    ReportRequest,
    ReportResponse,
    RunRequest,
    RunResponse,
    SweepRequest,
    SweepResponse,
)

app = FastAPI(
    title="qmal",
    version=__version__,
    description="Density-matrix simulation of lossy linear-optical circuits "
                "with partially distinguishable photons",
)


def _guard(fn, request):
    try:
        return fn(request)
    except InvalidIR as exc:
        raise HTTPException(status_code=422, detail=str(exc)) from exc
    except (DimensionOverflow, DenseCapExceeded, HeraldImpossible) as exc:
        raise HTTPException(status_code=409, detail=str(exc)) from exc
    except (QmalError, ValueError) as exc:
        raise HTTPException(status_code=400, detail=str(exc)) from exc


@app.get("/health")
def health() -> dict:
    return {"status": "ok", "version": __version__}


@app.post("/run", response_model=RunResponse)
def run_endpoint(request: RunRequest) -> RunResponse:
    return _guard(handlers.handle_run, request)


@app.post("/probs", response_model=RunResponse)
def probs_endpoint(request: RunRequest) -> RunResponse:
    return _guard(handlers.handle_run, request)


@app.post("/report", response_model=ReportResponse)
def report_endpoint(request: ReportRequest) -> ReportResponse:
    return _guard(handlers.handle_report, request)


@app.post("/compare", response_model=CompareResponse)
def compare_endpoint(request: CompareRequest) -> CompareResponse:
    return _guard(handlers.handle_compare, request)


@app.post("/sweep", response_model=SweepResponse)
def sweep_endpoint(request: SweepRequest) -> SweepResponse:
    return _guard(handlers.handle_sweep, request)
