import logging
import os
import sys
import traceback
import uuid
from datetime import datetime, timezone

from pythonjsonlogger.json import JsonFormatter

LOG_LEVEL_ENV = "SPINFORGE_LOG_LEVEL"


class CustomJSONFormatter(JsonFormatter):
    def add_fields(self, log_record, record, message_dict):
        super().add_fields(log_record, record, message_dict)
        log_record["timestamp"] = datetime.now(timezone.utc).isoformat()
        log_record["level"] = record.levelname
        log_record["module"] = record.module
        log_record["function"] = record.funcName
        log_record["line"] = record.lineno
        log_record["run_id"] = getattr(record, "run_id", None)

        if record.exc_info:
            log_record.pop("exc_info", None)
            log_record["exception"] = {
                "type": record.exc_info[0].__name__,
                "message": str(record.exc_info[1]),
                "traceback": traceback.format_exception(*record.exc_info),
            }


class _RunIdFilter(logging.Filter):
    def __init__(self, run_id):
        super().__init__()
        self.run_id = run_id

    def filter(self, record):
        record.run_id = self.run_id
        return True


def run_id_filter(run_id=None):
    """Return a filter stamping ``run_id`` (a fresh uuid4 by default) on records."""
    return _RunIdFilter(run_id or str(uuid.uuid4()))


def resolve_level(level=None):
    if level is None:
        level = os.getenv(LOG_LEVEL_ENV, "INFO")
    if isinstance(level, int):
        return level
    value = logging.getLevelName(str(level).upper())
    if isinstance(value, int):
        return value
    logging.getLogger(__name__).warning(
        f"Unknown log level {level!r} in {LOG_LEVEL_ENV}; using INFO"
    )
    return logging.INFO


def setup_logging(level=None, stream=None, run_id=None):
    logger = logging.getLogger()
    for handler in list(logger.handlers):
        if getattr(handler, "_spinforge", False):
            logger.removeHandler(handler)

    handler = logging.StreamHandler(stream or sys.stderr)
    handler.setFormatter(CustomJSONFormatter("%(message)s"))
    handler.addFilter(run_id_filter(run_id))
    handler._spinforge = True
    logger.addHandler(handler)
    logger.setLevel(resolve_level(level))
    return handler
