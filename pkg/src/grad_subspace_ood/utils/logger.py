"""
Logging configuration for the gradient-subspace OOD toolkit.
Provides a centralized logging setup with console and optional file handlers,
plus a JSON-lines formatter for machine-readable stage records.
"""

import json
import logging
import sys
from logging.handlers import TimedRotatingFileHandler
from pathlib import Path

from grad_subspace_ood.config import settings
from grad_subspace_ood.config.config import LogLevel

LOGGER_NAME = "grad_subspace_ood"

# Attributes every LogRecord has; anything else was passed through ``extra``.
_STANDARD_ATTRS = set(
    logging.LogRecord("", 0, "", 0, "", None, None).__dict__.keys()
) | {"message", "asctime"}


def get_log_level(level_setting: LogLevel | str) -> int:
    """Convert LogLevel enum or string to logging constant.

    Args:
        level_setting: Log level from settings

    Returns:
        int: Logging level constant
    """
    level_map = {
        LogLevel.DEBUG: logging.DEBUG,
        LogLevel.INFO: logging.INFO,
        LogLevel.WARNING: logging.WARNING,
        LogLevel.ERROR: logging.ERROR,
        LogLevel.CRITICAL: logging.CRITICAL,
    }

    # If it's already a LogLevel enum
    if isinstance(level_setting, LogLevel):
        return level_map.get(level_setting, logging.INFO)

    # If it's a string, try to convert to LogLevel
    try:
        return level_map.get(LogLevel(str(level_setting).upper()), logging.INFO)
    except ValueError:
        return logging.INFO


class JsonLinesFormatter(logging.Formatter):
    """Render each record as one JSON object, including ``extra`` fields."""

    def format(self, record: logging.LogRecord) -> str:
        payload: dict[str, object] = {
            "time": self.formatTime(record),
            "logger": record.name,
            "level": record.levelname,
            "message": record.getMessage(),
        }
        for key, value in record.__dict__.items():
            if key not in _STANDARD_ATTRS and not key.startswith("_"):
                payload[key] = value
        if record.exc_info:
            payload["exception"] = self.formatException(record.exc_info)
        return json.dumps(payload, default=str)


def setup_logging(
    json_logs: bool | None = None,
    level: LogLevel | str | None = None,
    log_file: Path | None = None,
) -> logging.Logger:
    """
    Configure the toolkit logger.

    Args:
        json_logs: Emit JSON lines instead of the text format
        level: Override of ``settings.LOG_LEVEL``
        log_file: Override of ``settings.LOG_FILE``; daily rotation when set

    Returns:
        logging.Logger: Configured logger instance
    """
    use_json = settings.JSON_LOGS if json_logs is None else json_logs
    formatter: logging.Formatter = (
        JsonLinesFormatter() if use_json else logging.Formatter(settings.LOG_FORMAT)
    )

    # Logs go to stderr so stdout stays free for command output
    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setFormatter(formatter)

    logger = logging.getLogger(LOGGER_NAME)
    logger.setLevel(get_log_level(level or settings.LOG_LEVEL))

    # Remove any existing handlers to avoid duplicates
    logger.handlers.clear()
    logger.addHandler(console_handler)

    target = log_file or settings.LOG_FILE
    if target is not None:
        target = Path(target)
        target.parent.mkdir(parents=True, exist_ok=True)
        file_handler = TimedRotatingFileHandler(
            str(target), when="midnight", interval=1, backupCount=30, encoding="utf-8"
        )
        file_handler.setFormatter(formatter)
        file_handler.suffix = "%Y-%m-%d"
        logger.addHandler(file_handler)

    logger.propagate = True
    return logger


logger = setup_logging()
