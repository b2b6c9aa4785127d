import io
import json
import logging
import os
import sys

# Ensure project root is on sys.path
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

import pytest

from spinforge.utils.logging import LOG_LEVEL_ENV, resolve_level, setup_logging


@pytest.fixture
def stream():
    buffer = io.StringIO()
    yield buffer
    root = logging.getLogger()
    for handler in list(root.handlers):
        if getattr(handler, "_spinforge", False):
            root.removeHandler(handler)
    root.setLevel(logging.WARNING)


def test_json_lines_carry_context(stream):
    setup_logging("INFO", stream=stream, run_id="run-1")
    logging.getLogger("spinforge.test").info("hello")
    record = json.loads(stream.getvalue().splitlines()[-1])
    assert record["message"] == "hello"
    assert record["level"] == "INFO"
    assert record["run_id"] == "run-1"
    assert {"timestamp", "module", "function", "line"} <= set(record)


def test_exceptions_are_structured(stream):
    setup_logging("ERROR", stream=stream)
    try:
        raise ValueError("boom")
    except ValueError:
        logging.getLogger("spinforge.test").error("failed", exc_info=True)
    record = json.loads(stream.getvalue().splitlines()[-1])
    assert record["exception"]["type"] == "ValueError"
    assert record["exception"]["message"] == "boom"
    assert record["run_id"], "A run id should be generated when none is given"


def test_setup_does_not_stack_handlers(stream):
    setup_logging("INFO", stream=stream)
    setup_logging("INFO", stream=stream)
    logging.getLogger("spinforge.test").info("once")
    assert len(stream.getvalue().splitlines()) == 1


def test_level_from_environment(monkeypatch, stream):
    monkeypatch.setenv(LOG_LEVEL_ENV, "debug")
    assert resolve_level() == logging.DEBUG
    monkeypatch.setenv(LOG_LEVEL_ENV, "chatty")
    assert resolve_level() == logging.INFO
    setup_logging(stream=stream)
    logging.getLogger("spinforge.test").debug("quiet")
    assert "quiet" not in stream.getvalue()
