import logging
import sys
from ..config import settings


def setup_logging(level: str | None = None):
    """Setup application logging"""

    level = (level or settings.log_level).upper()

    # Configure root logger
    logging.basicConfig(
        level=getattr(logging, level),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=[
            logging.StreamHandler(sys.stdout),
        ],
        force=True,
    )

    # Solver logs follow the requested level, server logs stay at INFO
    logging.getLogger("app").setLevel(getattr(logging, level))
    logging.getLogger("uvicorn").setLevel(logging.INFO)
    logging.getLogger("uvicorn.access").setLevel(logging.INFO)

    logger = logging.getLogger(__name__)
    logger.info("Logging configured successfully")
    logger.info(f"Log level set to: {level}")
