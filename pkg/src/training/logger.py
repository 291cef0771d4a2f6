"""Per-run file logging for training and evaluation runs."""
import logging
import pathlib
from datetime import datetime
from functools import wraps
from typing import Any, Callable, TypeVar

from src.app.logging import LOG_FORMAT
from src.app.settings import settings

T = TypeVar("T")

# one log file per run type, shared by every step of that run
_log_files: dict[str, pathlib.Path] = {}
_loggers_setup: set[str] = set()


def _get_log_file(run_type: str) -> pathlib.Path:
    if run_type not in _log_files:
        log_dir = pathlib.Path(settings.log_dir)
        log_dir.mkdir(parents=True, exist_ok=True)
        timestamp = datetime.now().strftime("%Y%m%d_%H%M%S")
        _log_files[run_type] = log_dir / f"qpb_{run_type}_{timestamp}.log"
    return _log_files[run_type]


def _setup_file_logger(run_type: str, logger_name: str) -> logging.Logger:
    logger = logging.getLogger(logger_name)
    logger.setLevel(settings.log_level)

    if logger_name not in _loggers_setup:
        logger.handlers.clear()

        log_file = _get_log_file(run_type)
        file_handler = logging.FileHandler(log_file, encoding="utf-8")
        file_handler.setFormatter(
            logging.Formatter(LOG_FORMAT, datefmt="%Y-%m-%d %H:%M:%S")
        )
        logger.addHandler(file_handler)
        # console output goes through the root RichHandler
        logger.propagate = True

        _loggers_setup.add(logger_name)
        logger.info(f"Log file created: {log_file}")

    return logger


def get_run_logger(run_type: str = "train") -> logging.Logger:
    """
    Logger for custom messages inside a run.

    Usage:
        logger = get_run_logger(run_type="train")
        logger.info("epoch 3 done")

    Args:
        run_type: 'train', 'evaluate', 'data', ... - determines the log file name
    """
    return _setup_file_logger(run_type, f"qpb.run.{run_type}")


def log_method_entry(run_type: str = "train"):
    """Decorator logging 'module:method is entered/exited' (and failures) to the run log."""

    def decorator(func: Callable[..., T]) -> Callable[..., T]:
        @wraps(func)
        def wrapper(*args: Any, **kwargs: Any) -> T:
            module_name = func.__module__.split(".")[-1]
            method_name = func.__name__
            logger = get_run_logger(run_type)

            logger.info(f"{module_name}:{method_name} is entered")
            try:
                result = func(*args, **kwargs)
            except Exception as exc:
                logger.error(f"{module_name}:{method_name} failed with error: {exc}", exc_info=True)
                raise
            logger.info(f"{module_name}:{method_name} is exited")
            return result

        return wrapper

    return decorator
