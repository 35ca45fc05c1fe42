"""FastAPI application exposing the refactoring engine."""

from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__
from ..config import CliConfig
from . import handlers
from .schemas import (
    DetectRequest,
    DetectResponse,
    EvalRequest,
    EvalResponse,
    IndexRequest,
    IndexResponse,
    RefactorRequest,
    RefactorResponse,
    ReplayRequest,
    ReplayResponse,
)


def create_app(config: CliConfig | None = None) -> FastAPI:
    cfg = config if config is not None else CliConfig()
    app = FastAPI(title="autorefactor", version=__version__)

    @app.exception_handler(handlers.HandlerError)
    async def _handler_error(request: Request, exc: handlers.HandlerError):
        return JSONResponse(
            status_code=400,
            content={"error": str(exc), "exit_code": exc.exit_code},
        )

    @app.get("/health")
    def health() -> dict:
        return {"status": "ok"}

    @app.post("/index", response_model=IndexResponse)
    def index(req: IndexRequest) -> IndexResponse:
        return handlers.do_index(cfg, req)

    @app.post("/refactor", response_model=RefactorResponse)
    def refactor(req: RefactorRequest) -> RefactorResponse:
        return handlers.do_refactor(cfg, req)

    @app.post("/detect", response_model=DetectResponse)
    def detect(req: DetectRequest) -> DetectResponse:
        return handlers.do_detect(cfg, req)

    @app.post("/eval", response_model=EvalResponse)
    def evaluate(req: EvalRequest) -> EvalResponse:
        return handlers.do_eval(cfg, req)

    @app.post("/replay", response_model=ReplayResponse)
    def replay(req: ReplayRequest) -> ReplayResponse:
        return handlers.do_replay(cfg, req)

    return app
