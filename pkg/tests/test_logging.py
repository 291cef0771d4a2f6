import logging

import pytest

from src.app.logging import event, format_fields
from src.training.logger import get_run_logger, log_method_entry


def test_format_fields():
    assert format_fields({"epoch": 3, "loss": 0.123456789, "val": None}) == "epoch=3 loss=0.123457 val=None"
    assert format_fields(None) == ""


def test_event_line(caplog):
    with caplog.at_level(logging.INFO, logger="qpb.event"):
        event("epoch", {"epoch": 1, "train_loss": "0.5"})
    assert caplog.records[-1].getMessage() == "epoch epoch=1 train_loss=0.5"


def test_run_logger_writes_file():
    run_log = get_run_logger("unit")
    run_log.info("hello from a unit run")
    handlers = [h for h in run_log.handlers if isinstance(h, logging.FileHandler)]
    assert handlers
    path = handlers[0].baseFilename
    handlers[0].flush()
    assert "qpb_unit_" in path
    with open(path, encoding="utf-8") as fh:
        assert "hello from a unit run" in fh.read()


def test_log_method_entry_logs_failure_and_reraises(caplog):
    @log_method_entry(run_type="unit")
    def broken():
        raise ValueError("boom")

    with caplog.at_level(logging.INFO), pytest.raises(ValueError, match="boom"):
        broken()
    messages = [r.getMessage() for r in caplog.records]
    assert "test_logging:broken is entered" in messages
    assert any(m.startswith("test_logging:broken failed with error: boom") for m in messages)
