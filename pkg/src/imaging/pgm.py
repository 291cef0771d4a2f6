"""Binary PGM (P5) files through Pillow's PPM plugin, 8-bit and 16-bit samples."""
import pathlib

import numpy as np
from PIL import Image

from src.app.errors import DataError


def read_pgm(path: pathlib.Path) -> np.ndarray:
    """Samples rescaled from the header maxval to full range: uint8 (maxval < 256) or uint16."""
    path = pathlib.Path(path)
    try:
        with path.open("rb") as fh:
            magic = fh.read(2)
            fh.seek(0)
            if magic == b"P5":
                with Image.open(fh, formats=["PPM"]) as im:
                    im.load()
                    mode, pixels = im.mode, np.asarray(im)
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if magic != b"P5":
        raise DataError(f"{path} is not a binary PGM (P5) file")
    # maxval > 255 opens as 32-bit "I", already scaled to 65535
    return pixels.astype(np.uint8 if mode == "L" else np.uint16)


def write_pgm(path: pathlib.Path, pixels: np.ndarray) -> pathlib.Path:
    """Write a uint8 image with maxval 255 or a uint16 image with maxval 65535."""
    pixels = np.asarray(pixels)
    if pixels.ndim != 2:
        raise DataError(f"PGM needs a 2-D array, got shape {pixels.shape}")
    if pixels.dtype == np.uint8:
        im = Image.fromarray(pixels)
    elif pixels.dtype == np.uint16:
        im = Image.fromarray(pixels.astype(np.int32))
    else:
        raise DataError(f"PGM samples must be uint8 or uint16, got {pixels.dtype}")
    path = pathlib.Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    try:
        im.save(path, format="PPM")
    except OSError as exc:
        raise DataError(f"cannot write {path}: {exc}") from exc
    return path


def to_uint16(values: np.ndarray) -> np.ndarray:
    """Scale [0, 1] scores to [0, 65535]."""
    return np.rint(np.clip(values, 0.0, 1.0) * 65535.0).astype(np.uint16)
