"""Patch extraction, amplitude embedding and overlap-averaged map assembly."""
import logging
from dataclasses import dataclass

import numpy as np

from src.app.errors import ArgumentError, DataError, DimensionError
from src.app.settings import settings
from src.quantum.statevec import StateVector, from_amplitudes

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ImageTensor:
    """Square grayscale image with intensities in [0, 1]."""

    pixels: np.ndarray

    def __post_init__(self) -> None:
        if self.pixels.ndim != 2 or self.pixels.shape[0] != self.pixels.shape[1]:
            raise ArgumentError(f"images must be square 2-D arrays, got shape {self.pixels.shape}")
        if not np.all(np.isfinite(self.pixels)) or self.pixels.min() < 0.0 or self.pixels.max() > 1.0:
            raise DataError("pixel intensities must be finite and within [0, 1]")

    @classmethod
    def from_uint8(cls, values: np.ndarray) -> "ImageTensor":
        return cls(np.asarray(values, dtype=float) / 255.0)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


@dataclass(frozen=True)
class PatchGrid:
    patch_size: int
    stride: int
    image_size: int
    patches: np.ndarray  # (N, P*P), row-major flattened
    anchors: np.ndarray  # (N, 2) top-left (row, col), raster order

    @property
    def n_patches(self) -> int:
        return self.patches.shape[0]


@dataclass(frozen=True)
class ScoreMap:
    values: np.ndarray  # (H, W) similarity Z or anomaly Y
    counts: np.ndarray  # (H, W) number of covering patches

    @property
    def covered(self) -> np.ndarray:
        return self.counts > 0

    def mean(self) -> float:
        """Mean over covered pixels."""
        return float(self.values[self.covered].mean())


def patch_count(image_size: int, patch_size: int, stride: int) -> int:
    side = (image_size - patch_size) // stride + 1
    return side * side


def _is_power_of_two(value: int) -> bool:
    return value >= 1 and value & (value - 1) == 0


def extract_patches(img: ImageTensor, patch_size: int, stride: int) -> PatchGrid:
    H = img.height
    if patch_size > H:
        raise ArgumentError(f"patch size {patch_size} exceeds image size {H}")
    if stride < 1:
        raise ArgumentError(f"stride must be >= 1, got {stride}")
    if not _is_power_of_two(patch_size * patch_size):
        raise ArgumentError(f"patch_size**2 must be a power of two, got P={patch_size}")

    windows = np.lib.stride_tricks.sliding_window_view(img.pixels, (patch_size, patch_size))[::stride, ::stride]
    side = windows.shape[0]
    rows, cols = np.meshgrid(np.arange(side) * stride, np.arange(side) * stride, indexing="ij")
    anchors = np.stack([rows.ravel(), cols.ravel()], axis=1)
    patches = windows.reshape(side * side, patch_size * patch_size).copy()
    return PatchGrid(patch_size=patch_size, stride=stride, image_size=H, patches=patches, anchors=anchors)


def zero_patch_rows(patches: np.ndarray) -> np.ndarray:
    """Rows whose norm is within ``settings.norm_tolerance`` of zero."""
    return np.linalg.norm(np.asarray(patches, dtype=float), axis=-1) <= settings.norm_tolerance


def embed_patches(patches: np.ndarray) -> StateVector:
    """Amplitude-encode each row; all-zero rows become the uniform superposition."""
    arr = np.atleast_2d(np.asarray(patches, dtype=float))
    length = arr.shape[-1]
    if not _is_power_of_two(length):
        raise DimensionError(f"patch length {length} is not a power of two")
    zero = zero_patch_rows(arr)
    if zero.any():
        logger.debug("%d all-zero patches mapped to the uniform state", int(zero.sum()))
        arr = np.where(zero[:, None], 1.0, arr)
    return from_amplitudes(arr, length.bit_length() - 1)


def embed_patch(patch: np.ndarray) -> StateVector:
    state = embed_patches(np.asarray(patch, dtype=float).reshape(1, -1))
    return StateVector(state.n_qubits, state.amplitudes[0])


def assemble_map(scores: np.ndarray, grid: PatchGrid, image_size: int) -> ScoreMap:
    """Average per-patch scores over every pixel each patch covers (raster-order accumulation)."""
    scores = np.asarray(scores, dtype=float)
    if scores.shape != (grid.n_patches,):
        raise DimensionError(f"expected {grid.n_patches} scores, got shape {scores.shape}")
    P = grid.patch_size
    sums = np.zeros((image_size, image_size))
    counts = np.zeros((image_size, image_size), dtype=np.int64)
    for score, (r, c) in zip(scores, grid.anchors):
        sums[r : r + P, c : c + P] += score
        counts[r : r + P, c : c + P] += 1
    covered = counts > 0
    if not covered.all():
        logger.warning("%d pixels are covered by no patch and are excluded", int((~covered).sum()))
    values = np.divide(sums, counts, out=np.zeros_like(sums), where=covered)
    return ScoreMap(values=values, counts=counts)


def to_anomaly(score_map: ScoreMap) -> ScoreMap:
    """Y = 1 - Z on covered pixels (Z clamped to [0, 1] first)."""
    values = np.where(score_map.covered, 1.0 - np.clip(score_map.values, 0.0, 1.0), 0.0)
    return ScoreMap(values=values, counts=score_map.counts)


def coverage_weights(grid: PatchGrid, image_size: int) -> np.ndarray:
    """w_p such that the covered-pixel mean of assemble_map(z) equals sum_p w_p z_p."""
    P = grid.patch_size
    counts = np.zeros((image_size, image_size))
    for r, c in grid.anchors:
        counts[r : r + P, c : c + P] += 1.0
    inverse = np.divide(1.0, counts, out=np.zeros_like(counts), where=counts > 0)
    n_covered = int((counts > 0).sum())
    return np.array([inverse[r : r + P, c : c + P].sum() for r, c in grid.anchors]) / n_covered
