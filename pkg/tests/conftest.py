from __future__ import annotations

import json
from pathlib import Path
from typing import Callable

import pytest

from locmap.gateway import CallableTransport, ChatRequest, Gateway, ResponseCache
from locmap.model import Edge, LocationGraph, LocationNode, LocationType, Relation

FIXTURES = Path(__file__).parent / "fixtures"


def graph(nodes: dict[str, str], edges=(), proximity=()) -> LocationGraph:
    """Build a graph from {name: type} plus inclusion and proximity pairs."""
    return LocationGraph(
        tuple(LocationNode(n, LocationType.parse(t)) for n, t in nodes.items()),
        tuple(Edge(a, b) for a, b in edges) + tuple(Edge(a, b, Relation.PROXIMITY) for a, b in proximity),
    )


def scripted(replies: list[str] | Callable[[ChatRequest], str]) -> CallableTransport:
    """Transport that answers each call with the next reply in order."""
    if callable(replies):
        return CallableTransport(replies)
    queue = list(replies)

    def answer(_req: ChatRequest) -> str:
        if not queue:
            raise AssertionError("scripted transport ran out of replies")
        return queue.pop(0)

    return CallableTransport(answer)


def as_json(obj) -> str:
    return json.dumps(obj)


@pytest.fixture
def make_gateway(tmp_path):
    def build(replies, cache: bool = True, **kwargs) -> Gateway:
        return Gateway(
            cache=ResponseCache(tmp_path / "cache") if cache else None,
            transport=scripted(replies),
            **kwargs,
        )

    return build
