import asyncio
import logging

import numpy as np
from fastapi import APIRouter, HTTPException
from starlette.status import HTTP_422_UNPROCESSABLE_ENTITY, HTTP_500_INTERNAL_SERVER_ERROR

from config import settings
from models import (
    AnalyzeRequest,
    CriteriaReport,
    HealthResponse,
    HistogramPayload,
    IntensityRequest,
    IntensityResponse,
    JointHistogram,
    ReconstructRequest,
    ReconstructionSummary,
    SimulateRequest,
    SimulateResponse,
)
from services.errors import TwinBeamError
from services.pipeline import twinbeam_service

logger = logging.getLogger(__name__)

# Create API router
router = APIRouter(prefix="/api/v1", tags=["Twin beam"])


def _histogram(payload: HistogramPayload) -> JointHistogram:
    try:
        return JointHistogram(np.array(payload.counts, dtype=np.int64), payload.shots)
    except ValueError as e:
        raise HTTPException(status_code=HTTP_422_UNPROCESSABLE_ENTITY, detail=f"Invalid histogram: {e}")


def _payload(h: JointHistogram) -> HistogramPayload:
    return HistogramPayload(counts=h.counts.tolist(), shots=h.shots)


def _fail(name: str, e: Exception) -> HTTPException:
    if isinstance(e, HTTPException):
        return e
    if isinstance(e, (TwinBeamError, ValueError)):
        logger.error(f"{name} rejected: {e}")
        return HTTPException(status_code=HTTP_422_UNPROCESSABLE_ENTITY, detail=str(e))
    logger.error(f"{name} error: {e}")
    return HTTPException(status_code=HTTP_500_INTERNAL_SERVER_ERROR, detail=str(e))


# Health endpoint
@router.get("/health", response_model=HealthResponse)
async def health_check():
    """Health check endpoint"""
    validation = settings.validate_configuration()
    return HealthResponse(
        status="healthy" if validation["overall_status"] != "error" else "degraded",
        version=settings.app_version,
        services={
            "configuration": validation["overall_status"],
            "extended_precision": "enabled" if settings.extended_precision else "disabled",
            "schema": settings.schema_version,
        },
    )


# Simulation endpoint
@router.post("/simulate", response_model=SimulateResponse)
async def simulate(request: SimulateRequest):
    """Simulate shots and return the histogram with its criteria"""
    try:
        _, _, histogram = await asyncio.to_thread(
            twinbeam_service.simulate, request.model, request.shots, request.seed
        )
        eta = 0.5 * (request.model.eta_s + request.model.eta_i)
        criteria = await asyncio.to_thread(twinbeam_service.analyze, histogram, eta)
        return SimulateResponse(success=True, histogram=_payload(histogram), criteria=criteria)
    except Exception as e:
        raise _fail("Simulation", e)


# Analysis endpoint
@router.post("/analyze", response_model=CriteriaReport)
async def analyze(request: AnalyzeRequest):
    """Nonclassicality criteria of a detected histogram"""
    histogram = _histogram(request.histogram)
    try:
        return await asyncio.to_thread(
            twinbeam_service.analyze, histogram, request.eta, request.bootstrap, request.seed
        )
    except Exception as e:
        raise _fail("Analysis", e)


# Reconstruction endpoint
@router.post("/reconstruct", response_model=ReconstructionSummary)
async def reconstruct(request: ReconstructRequest):
    """Fit the twin-beam model to a detected histogram"""
    histogram = _histogram(request.histogram)
    try:
        result = await asyncio.to_thread(twinbeam_service.reconstruct, histogram, request.options)
        return result.summary
    except Exception as e:
        raise _fail("Reconstruction", e)


# Intensity endpoint
@router.post("/intensity", response_model=IntensityResponse)
async def intensity(request: IntensityRequest):
    """Quasi-distribution grid plus its negativity summary"""
    source = request.model if request.model is not None else _histogram(request.histogram)
    try:
        grid = await asyncio.to_thread(twinbeam_service.intensity, source, request.grid)
        negativity = twinbeam_service.negativity(grid, request.eps_neg)
        return IntensityResponse(
            success=True,
            metadata=grid.metadata(),
            axis_s=grid.axis_s.tolist(),
            axis_i=grid.axis_i.tolist(),
            values=grid.values.tolist(),
            negativity=negativity,
        )
    except Exception as e:
        raise _fail("Intensity", e)
