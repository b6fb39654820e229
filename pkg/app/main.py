from fastapi import FastAPI
from fastapi.middleware.cors import CORSMiddleware
from contextlib import asynccontextmanager
import logging

from .config import settings
from .api.routes import experiments
from .core.logging import setup_logging
from .services.initialization import initialize_services

setup_logging()
logger = logging.getLogger(__name__)


@asynccontextmanager
async def lifespan(app: FastAPI):
    """Manage application lifespan events"""
    logger.info("Starting up DLR Heat Solver...")
    try:
        await initialize_services()
    except OSError as e:
        logger.error(f"Failed to initialize services: {e}")
        logger.warning("App starting without an output directory")

    yield

    logger.info("Shutting down DLR Heat Solver...")


app = FastAPI(
    title="DLR Heat Solver",
    description="Dynamical low-rank integrators for the heat equation with a random diffusion coefficient",
    version="1.0.0",
    docs_url="/docs",
    redoc_url="/redoc",
    lifespan=lifespan,
)

app.add_middleware(
    CORSMiddleware,
    allow_origins=settings.allowed_origins,
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)

app.include_router(experiments.router, prefix="/api/v1", tags=["experiments"])


@app.get("/")
async def root():
    """Root endpoint"""
    return {
        "message": "DLR Heat Solver",
        "version": "1.0.0",
        "docs": "/docs",
    }
