"""Shared per-patch scoring interface.

Quantum and classical models differ only in how a batch of flattened patches
becomes a vector of similarity scores; extraction, map assembly and the
anomaly transform below are the same code path for both.
"""
from typing import Protocol

import numpy as np

from src.imaging.patchflow import ImageTensor, ScoreMap, assemble_map, extract_patches, to_anomaly


class PatchScorer(Protocol):
    def score(self, patches: np.ndarray) -> np.ndarray:
        """Map (N, P*P) raw patches to (N,) similarity scores."""
        ...


def similarity_map(img: ImageTensor, scorer: PatchScorer, patch_size: int, stride: int) -> ScoreMap:
    grid = extract_patches(img, patch_size, stride)
    return assemble_map(scorer.score(grid.patches), grid, img.height)


def anomaly_map(img: ImageTensor, scorer: PatchScorer, patch_size: int, stride: int) -> ScoreMap:
    return to_anomaly(similarity_map(img, scorer, patch_size, stride))
