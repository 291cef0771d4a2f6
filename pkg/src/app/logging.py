import logging
from typing import Any, Dict, Mapping

from rich.logging import RichHandler

LOG_FORMAT = "%(asctime)s | %(levelname)s | %(name)s | %(message)s"

# Chatty at DEBUG when decoding PNG datasets.
_QUIET = ("PIL",)


def configure_logging(level: int | str = logging.INFO) -> None:
    """Console logging for a CLI run; safe to call again with a new level."""
    if isinstance(level, str):
        level = level.upper()
    logging.basicConfig(
        level=level,
        format=LOG_FORMAT,
        handlers=[RichHandler(rich_tracebacks=True, show_path=False)],
        force=True,
    )
    for name in _QUIET:
        logging.getLogger(name).setLevel(logging.WARNING)


def _format_value(value: Any) -> str:
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def format_fields(fields: Mapping[str, Any] | None) -> str:
    return " ".join(f"{k}={_format_value(v)}" for k, v in (fields or {}).items())


def event(msg: str, extra: Dict[str, Any] | None = None, level: int = logging.INFO) -> None:
    """Log a one-line key=value event, e.g. ``event("epoch", {"epoch": 3, "train_loss": 0.12})``."""
    logging.getLogger("qpb.event").log(level, f"{msg} {format_fields(extra)}".strip())
