"""Listening-test protocol: durable response store plus HTTP service."""

from .store import (
    DuplicateResponseError,
    ListeningStore,
    NotFoundError,
    RaterResponse,
    Session,
    Stimulus,
    TestDefinition,
    TestResults,
    load_test_definition_file,
)

__all__ = [
    "DuplicateResponseError",
    "ListeningStore",
    "NotFoundError",
    "RaterResponse",
    "Session",
    "Stimulus",
    "TestDefinition",
    "TestResults",
    "load_test_definition_file",
]
