from .base import HandlerFunc, Middleware, MiddlewareChain
from .common import LoggingMiddleware, SummaryMiddleware, ValidationMiddleware

__all__ = [
    "HandlerFunc",
    "LoggingMiddleware",
    "Middleware",
    "MiddlewareChain",
    "SummaryMiddleware",
    "ValidationMiddleware",
]
