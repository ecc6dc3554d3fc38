from contextlib import asynccontextmanager

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .config import settings
from .deps import clear_map_cache, close_oracles
from .errors import IntelliMoveError, error_to_text, status_code_for
from .logger import configure_logging, get_logger
from .routers import maps, oracle

configure_logging(settings.LOG_LEVEL)
logger = get_logger(__name__)


@asynccontextmanager
async def lifespan(app: FastAPI):
    yield
    close_oracles()
    clear_map_cache()


app = FastAPI(title="IntelliMove", docs_url="/docs", redoc_url=None, lifespan=lifespan)


@app.exception_handler(IntelliMoveError)
@app.exception_handler(FileNotFoundError)
async def library_error_handler(request: Request, exc: Exception):
    status_code = status_code_for(exc)
    if status_code >= 500:
        logger.error("%s %s failed: %s", request.method, request.url.path, exc)
    return JSONResponse({"detail": error_to_text(exc)}, status_code=status_code)


app.include_router(maps.router)
app.include_router(oracle.router)
