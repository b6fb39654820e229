import logging

from fastapi import APIRouter, HTTPException
from pydantic import ValidationError
from starlette.concurrency import run_in_threadpool

from ...config import settings
from ...core.exceptions import ConfigError, NumericalError
from ...models.requests import CompareProjectionRequest, CompareSchemesRequest, ExperimentConfig, SweepRequest
from ...models.responses import ConstantsReport, NormTrace, ProjectionComparison, SchemeComparison, SweepReport
from ...services.experiments import (
    compare_projection_modes,
    compare_schemes,
    compute_constants,
    run_decay,
    stability_sweep,
)

logger = logging.getLogger(__name__)
router = APIRouter()


async def _run(name: str, func, *args):
    """Run a blocking experiment off the event loop and map harness errors to HTTP codes."""
    try:
        return await run_in_threadpool(func, *args)
    except ConfigError as e:
        logger.warning(f"{name}: invalid configuration: {e}")
        raise HTTPException(status_code=422, detail=str(e))
    except ValidationError as e:
        logger.warning(f"{name}: derived configuration rejected: {e.error_count()} error(s)")
        raise HTTPException(status_code=422, detail=e.errors(include_url=False, include_context=False))
    except NumericalError as e:
        logger.error(f"{name}: numerical failure: {e}")
        raise HTTPException(status_code=500, detail=str(e))


@router.get("/experiments/test")
async def test_endpoint():
    """Simple test endpoint"""
    logger.info("Test endpoint called!")
    return {
        "status": "success",
        "message": "Endpoint is working",
        "output_dir": settings.output_dir,
        "log_level": settings.log_level,
    }


@router.post("/experiments/constants", response_model=ConstantsReport)
async def constants(config: ExperimentConfig):
    return await _run("constants", compute_constants, config)


@router.post("/experiments/decay", response_model=NormTrace)
async def decay(config: ExperimentConfig):
    """
    Integrate one configuration until its energy decays or blows up.
    """
    logger.info(f"Received decay request: {config.scheme.name.value}, dt={config.scheme.dt}")
    return await _run("decay", run_decay, config)


@router.post("/experiments/sweep", response_model=SweepReport)
async def sweep(request: SweepRequest):
    logger.info(f"Received sweep request over n_per_side={request.n_per_side}")
    return await _run("sweep", stability_sweep, request.config, request.n_per_side, request.dt, request.ratio)


@router.post("/experiments/compare-schemes", response_model=SchemeComparison)
async def compare_schemes_endpoint(request: CompareSchemesRequest):
    return await _run("compare-schemes", compare_schemes, request.config, request.steps)


@router.post("/experiments/compare-projection", response_model=ProjectionComparison)
async def compare_projection_endpoint(request: CompareProjectionRequest):
    return await _run("compare-projection", compare_projection_modes, request.config, request.dt)
