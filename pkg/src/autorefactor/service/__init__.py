"""HTTP service layer: pydantic schemas, handlers, FastAPI app factory."""

from .app import create_app
from .handlers import HandlerError

__all__ = ["create_app", "HandlerError"]
