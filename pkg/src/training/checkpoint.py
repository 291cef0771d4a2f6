"""Checkpoint and loss-history files.

A checkpoint is a JSON document (pydantic model, ``format_version`` 1) holding
the model kind, geometry, seed, selected epoch, the trained parameters as
named float lists and the Adam state. Floats are written with ``repr``
precision so a reload reproduces the arrays bit for bit.
"""
import csv
import logging
import pathlib
from typing import Dict, List, Literal, Optional

import numpy as np
from pydantic import BaseModel, Field

from src.app.errors import ConfigError, DataError
from src.app.schemas import AutoencoderConfig, LossRecord

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1


class Checkpoint(BaseModel):
    format_version: int = FORMAT_VERSION
    model_kind: Literal["quantum", "classical"]
    autoencoder: AutoencoderConfig
    patch_size: int
    stride: int
    seed: int
    epoch: int = Field(..., ge=0)
    params: Dict[str, List] = {}
    optimizer: Optional[dict] = None
    n_parameters: int = 0

    def arrays(self) -> Dict[str, np.ndarray]:
        return {k: np.asarray(v, dtype=float) for k, v in self.params.items()}

    @classmethod
    def from_arrays(cls, arrays: Dict[str, np.ndarray], **fields) -> "Checkpoint":
        params = {k: np.asarray(v, dtype=float).tolist() for k, v in arrays.items()}
        n_parameters = int(sum(np.asarray(v).size for v in arrays.values()))
        return cls(params=params, n_parameters=n_parameters, **fields)

    def check_geometry(self, patch_size: int, stride: int) -> None:
        if (self.patch_size, self.stride) != (patch_size, stride):
            raise ConfigError(
                f"checkpoint was trained with P={self.patch_size} S={self.stride}, "
                f"run asks for P={patch_size} S={stride}"
            )


def save_checkpoint(checkpoint: Checkpoint, path: pathlib.Path) -> pathlib.Path:
    path = pathlib.Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(checkpoint.model_dump_json(indent=2), encoding="utf-8")
    logger.info(f"checkpoint written: {path} ({checkpoint.model_kind}, epoch {checkpoint.epoch})")
    return path


def load_checkpoint(path: pathlib.Path) -> Checkpoint:
    path = pathlib.Path(path)
    if not path.is_file():
        raise DataError(f"checkpoint not found: {path}")
    checkpoint = Checkpoint.model_validate_json(path.read_text(encoding="utf-8"))
    if checkpoint.format_version != FORMAT_VERSION:
        raise DataError(f"unsupported checkpoint format_version {checkpoint.format_version}")
    return checkpoint


def write_loss_csv(history: List[LossRecord], path: pathlib.Path) -> pathlib.Path:
    path = pathlib.Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["epoch", "train_loss", "val_loss"])
        for row in history:
            writer.writerow([row.epoch, repr(row.train_loss), "" if row.val_loss is None else repr(row.val_loss)])
    return path


def read_loss_csv(path: pathlib.Path) -> List[LossRecord]:
    with pathlib.Path(path).open(newline="", encoding="utf-8") as f:
        return [
            LossRecord(
                epoch=int(r["epoch"]),
                train_loss=float(r["train_loss"]),
                val_loss=float(r["val_loss"]) if r["val_loss"] else None,
            )
            for r in csv.DictReader(f)
        ]
