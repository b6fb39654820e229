import sys

import uvicorn

if __name__ == "__main__":
    # Import settings here to avoid circular imports
    from app.config import settings

    if len(sys.argv) > 1:
        from app.cli import cli_main

        sys.exit(cli_main(sys.argv[1:]))

    uvicorn.run(
        "app.main:app",
        host=settings.host,
        port=settings.port,
        reload=settings.debug,
        log_level=settings.log_level.lower(),
    )
