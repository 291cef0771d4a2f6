"""Classical comparison model: a P*P -> 2**BD -> P*P dense autoencoder scored by cosine similarity.

At P=8, BD=2 this is the 64-4-64 network (584 weights and biases). ReLU
follows both layers, so reconstructions are nonnegative and with
nonnegative pixels the cosine score stays in [0, 1].
"""
import logging
from dataclasses import dataclass
from typing import Dict, Sequence, Tuple

import numpy as np

from src.app.errors import ArgumentError, DimensionError
from src.app.schemas import TrainConfig
from src.imaging.patchflow import ImageTensor, ScoreMap, coverage_weights, extract_patches
from src.imaging.scoring import anomaly_map, similarity_map
from src.training.logger import log_method_entry
from src.training.train import TrainState, optimize

logger = logging.getLogger(__name__)

PARAM_NAMES = ("w1", "b1", "w2", "b2")


@dataclass(frozen=True)
class DenseAutoencoder:
    w1: np.ndarray  # (hidden, d)
    b1: np.ndarray  # (hidden,)
    w2: np.ndarray  # (d, hidden)
    b2: np.ndarray  # (d,)

    def __post_init__(self) -> None:
        hidden, d = self.w1.shape
        if self.b1.shape != (hidden,) or self.w2.shape != (d, hidden) or self.b2.shape != (d,):
            raise DimensionError(
                f"inconsistent layer shapes w1={self.w1.shape} b1={self.b1.shape} "
                f"w2={self.w2.shape} b2={self.b2.shape}"
            )

    @property
    def input_dim(self) -> int:
        return self.w1.shape[1]

    @property
    def hidden_dim(self) -> int:
        return self.w1.shape[0]

    @property
    def n_parameters(self) -> int:
        return sum(getattr(self, name).size for name in PARAM_NAMES)

    @classmethod
    def initialize(cls, input_dim: int, hidden_dim: int, rng: np.random.Generator) -> "DenseAutoencoder":
        """Uniform in [-sqrt(1/fan_in), sqrt(1/fan_in)] for weights and biases."""
        a1 = np.sqrt(1.0 / input_dim)
        a2 = np.sqrt(1.0 / hidden_dim)
        return cls(
            w1=rng.uniform(-a1, a1, size=(hidden_dim, input_dim)),
            b1=rng.uniform(-a1, a1, size=hidden_dim),
            w2=rng.uniform(-a2, a2, size=(input_dim, hidden_dim)),
            b2=rng.uniform(-a2, a2, size=input_dim),
        )

    @classmethod
    def zeros(cls, input_dim: int, hidden_dim: int) -> "DenseAutoencoder":
        return cls(
            np.zeros((hidden_dim, input_dim)), np.zeros(hidden_dim), np.zeros((input_dim, hidden_dim)), np.zeros(input_dim)
        )

    def to_dict(self) -> Dict[str, np.ndarray]:
        return {name: getattr(self, name).copy() for name in PARAM_NAMES}

    @classmethod
    def from_dict(cls, params: Dict[str, np.ndarray]) -> "DenseAutoencoder":
        return cls(**{name: np.asarray(params[name], dtype=float) for name in PARAM_NAMES})


def _layers(patches: np.ndarray, model: DenseAutoencoder) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    z1 = patches @ model.w1.T + model.b1
    h1 = np.maximum(z1, 0.0)
    z2 = h1 @ model.w2.T + model.b2
    return z1, h1, z2, np.maximum(z2, 0.0)


def forward(patch: np.ndarray, model: DenseAutoencoder) -> np.ndarray:
    """Reconstruct one patch (length d) or a batch (N, d)."""
    x = np.asarray(patch, dtype=float)
    if x.shape[-1] != model.input_dim:
        raise DimensionError(f"patch length {x.shape[-1]} does not match input dim {model.input_dim}")
    return _layers(x, model)[3]


def cosine_similarity(x: np.ndarray, x_rec: np.ndarray) -> np.ndarray | float:
    """Row-wise cosine similarity; a zero vector on either side scores 0."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(x_rec, dtype=float)
    nx = np.linalg.norm(x, axis=-1)
    ny = np.linalg.norm(y, axis=-1)
    denom = nx * ny
    dots = np.sum(x * y, axis=-1)
    s = np.divide(dots, denom, out=np.zeros_like(dots, dtype=float), where=denom > 0)
    return float(s) if np.ndim(s) == 0 else s


class CosineScorer:
    def __init__(self, model: DenseAutoencoder):
        self.model = model

    def score(self, patches: np.ndarray) -> np.ndarray:
        return np.atleast_1d(cosine_similarity(patches, forward(patches, self.model)))


def image_cost(img: ImageTensor, model: DenseAutoencoder, patch_size: int, stride: int) -> float:
    return 1.0 - similarity_map(img, CosineScorer(model), patch_size, stride).mean()


def value_and_gradient(
    img: ImageTensor, model: DenseAutoencoder, patch_size: int, stride: int
) -> Tuple[float, Dict[str, np.ndarray]]:
    """Cost and its analytic gradient by backpropagation through cosine and both layers."""
    grid = extract_patches(img, patch_size, stride)
    x = grid.patches
    z1, h1, z2, y = _layers(x, model)
    weights = coverage_weights(grid, img.height)

    nx = np.linalg.norm(x, axis=1)
    ny = np.linalg.norm(y, axis=1)
    live = (nx > 0) & (ny > 0)
    s = np.zeros(len(x))
    s[live] = np.sum(x[live] * y[live], axis=1) / (nx[live] * ny[live])
    cost = 1.0 - float(weights @ s)

    ds_dy = np.zeros_like(y)
    ds_dy[live] = x[live] / (nx[live] * ny[live])[:, None] - (s[live] / ny[live] ** 2)[:, None] * y[live]
    g_z2 = -weights[:, None] * ds_dy * (z2 > 0)
    g_z1 = (g_z2 @ model.w2) * (z1 > 0)
    grads = {
        "w2": g_z2.T @ h1,
        "b2": g_z2.sum(axis=0),
        "w1": g_z1.T @ x,
        "b1": g_z1.sum(axis=0),
    }
    return cost, grads


@log_method_entry(run_type="train")
def train_baseline(
    train_images: Sequence[ImageTensor],
    val_images: Sequence[ImageTensor],
    tcfg: TrainConfig,
    patch_size: int = 8,
    stride: int = 8,
    bottleneck_dim: int = 2,
) -> TrainState[DenseAutoencoder]:
    """Same cost, optimizer, batching and seeding as the quantum fit."""
    if not train_images:
        raise ArgumentError("training set is empty")
    rng = np.random.default_rng(tcfg.seed)
    init = DenseAutoencoder.initialize(patch_size * patch_size, 2**bottleneck_dim, rng)
    logger.info(f"train_baseline: P={patch_size} S={stride} hidden={init.hidden_dim} parameters={init.n_parameters}")

    def vg(img: ImageTensor, d: Dict[str, np.ndarray]):
        return value_and_gradient(img, DenseAutoencoder.from_dict(d), patch_size, stride)

    def v(img: ImageTensor, d: Dict[str, np.ndarray]) -> float:
        return image_cost(img, DenseAutoencoder.from_dict(d), patch_size, stride)

    raw = optimize(train_images, val_images, tcfg, init.to_dict(), vg, v, rng)
    return TrainState(
        params=DenseAutoencoder.from_dict(raw.params),
        optimizer=raw.optimizer,
        history=raw.history,
        best_params=DenseAutoencoder.from_dict(raw.best_params),
        best_epoch=raw.best_epoch,
        best_val_loss=raw.best_val_loss,
        seed=tcfg.seed,
    )


def infer_map(img: ImageTensor, model: DenseAutoencoder, patch_size: int, stride: int) -> ScoreMap:
    return anomaly_map(img, CosineScorer(model), patch_size, stride)
