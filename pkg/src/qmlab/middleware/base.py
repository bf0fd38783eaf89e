"""Base middleware framework."""
from abc import ABC, abstractmethod
from typing import Awaitable, Callable

from ..config import RunSummary
from ..events.dispatcher import Experiment

HandlerFunc = Callable[[Experiment], Awaitable[RunSummary]]


class Middleware(ABC):
    @abstractmethod
    async def process(self, experiment: Experiment, next_handler: HandlerFunc) -> RunSummary:
        pass


class MiddlewareChain:
    def __init__(self, middlewares: list[Middleware] | None = None):
        self.middlewares = middlewares or []

    def add(self, middleware: Middleware):
        self.middlewares.append(middleware)

    async def execute(self, experiment: Experiment, final_handler: HandlerFunc) -> RunSummary:
        handler = final_handler
        for middleware in reversed(self.middlewares):
            handler = _bind(middleware, handler)
        return await handler(experiment)


def _bind(middleware: Middleware, next_handler: HandlerFunc) -> HandlerFunc:
    async def handler(experiment: Experiment) -> RunSummary:
        return await middleware.process(experiment, next_handler)

    return handler
