"""Image-level cost, parameter-shift gradients, Adam training loop and inference."""
import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, Generic, List, Optional, Sequence, Tuple, TypeVar

import numpy as np

from src.app.errors import ArgumentError
from src.app.logging import event
from src.app.schemas import AutoencoderConfig, LossRecord, TrainConfig
from src.imaging.patchflow import ImageTensor, ScoreMap, coverage_weights, embed_patches, extract_patches, zero_patch_rows
from src.imaging.scoring import anomaly_map, similarity_map
from src.quantum.ansatz import MpsParams, test_similarity, training_fidelity, training_gradient
from src.training.logger import get_run_logger, log_method_entry
from src.training.optim import Adam

logger = logging.getLogger(__name__)

P = TypeVar("P")
ParamDict = Dict[str, np.ndarray]


class QuantumTrainScorer:
    """Training score: trash-vs-reference <sigma_z>, clamped to [0, 1].

    Always exact; ``cfg.shots`` only affects the test-phase scorer.
    """

    def __init__(self, params: MpsParams, cfg: AutoencoderConfig):
        self.params = params
        self.cfg = cfg

    def score(self, patches: np.ndarray) -> np.ndarray:
        z = training_fidelity(embed_patches(patches), self.params, self.cfg)
        z = np.clip(np.atleast_1d(z), 0.0, 1.0)
        if self.cfg.zero_patch_rule == "unit_score":
            z[zero_patch_rows(patches)] = 1.0
        return z


class QuantumTestScorer:
    """Test score: input-vs-reconstruction SWAP test, prob_zero in [0.5, 1]."""

    def __init__(self, params: MpsParams, cfg: AutoencoderConfig, rng: Optional[np.random.Generator] = None):
        self.params = params
        self.cfg = cfg
        self.rng = rng

    def score(self, patches: np.ndarray) -> np.ndarray:
        z = np.atleast_1d(test_similarity(embed_patches(patches), self.params, self.cfg, shots=self.cfg.shots, rng=self.rng))
        if self.cfg.zero_patch_rule == "unit_score":
            z = z.copy()
            z[zero_patch_rows(patches)] = 1.0
        return z


def image_cost(img: ImageTensor, params: MpsParams, cfg: AutoencoderConfig, patch_size: int, stride: int) -> float:
    """C(theta) = 1 - mean over covered pixels of the assembled training map Z'."""
    return 1.0 - similarity_map(img, QuantumTrainScorer(params, cfg), patch_size, stride).mean()


def value_and_gradient(
    img: ImageTensor, params: MpsParams, cfg: AutoencoderConfig, patch_size: int, stride: int
) -> Tuple[float, np.ndarray]:
    grid = extract_patches(img, patch_size, stride)
    states = embed_patches(grid.patches)
    z = np.atleast_1d(training_fidelity(states, params, cfg))
    active = (z >= 0.0) & (z <= 1.0)  # the clamp passes gradient only inside [0, 1]
    z = np.clip(z, 0.0, 1.0)
    if cfg.zero_patch_rule == "unit_score":
        zero = zero_patch_rows(grid.patches)
        z[zero] = 1.0
        active &= ~zero
    weights = coverage_weights(grid, img.height)
    per_patch = training_gradient(states, params, cfg)
    cost = 1.0 - float(weights @ z)
    return cost, -(weights * active) @ per_patch


def gradient(img: ImageTensor, params: MpsParams, cfg: AutoencoderConfig, patch_size: int, stride: int) -> np.ndarray:
    """dC/dtheta_k by the parameter-shift rule through every patch circuit."""
    return value_and_gradient(img, params, cfg, patch_size, stride)[1]


@dataclass
class TrainState(Generic[P]):
    params: P
    optimizer: Adam
    history: List[LossRecord] = field(default_factory=list)
    best_params: Optional[P] = None
    best_epoch: int = 0
    best_val_loss: Optional[float] = None
    seed: int = 0


def _mean_cost(images: Sequence[ImageTensor], value: Callable[[ImageTensor, ParamDict], float], params: ParamDict) -> float:
    return float(np.mean([value(img, params) for img in images]))


def optimize(
    train_images: Sequence[ImageTensor],
    val_images: Sequence[ImageTensor],
    tcfg: TrainConfig,
    init: ParamDict,
    value_and_grad: Callable[[ImageTensor, ParamDict], Tuple[float, ParamDict]],
    value: Callable[[ImageTensor, ParamDict], float],
    rng: np.random.Generator,
) -> TrainState[ParamDict]:
    """Minibatch Adam on the mean image cost; shared by the quantum and classical models.

    History row 0 holds the losses at initialization. The best checkpoint is
    the lowest validation loss (training loss when there is no validation set).
    """
    if not train_images:
        raise ArgumentError("training set is empty")
    run_log = get_run_logger("train")
    optimizer = Adam(tcfg.learning_rate, tcfg.adam_beta1, tcfg.adam_beta2, tcfg.adam_eps)
    params = {k: v.copy() for k, v in init.items()}

    def record(epoch: int, train_loss: float) -> LossRecord:
        val_loss = _mean_cost(val_images, value, params) if val_images else None
        row = LossRecord(epoch=epoch, train_loss=train_loss, val_loss=val_loss)
        event("epoch", {"epoch": epoch, "train_loss": f"{train_loss:.6f}", "val_loss": val_loss})
        run_log.info(f"epoch={epoch} train_loss={train_loss:.6f} val_loss={val_loss}")
        return row

    state = TrainState(params=params, optimizer=optimizer)
    state.history.append(record(0, _mean_cost(train_images, value, params)))
    state.best_params = {k: v.copy() for k, v in params.items()}

    def selection_loss(row: LossRecord) -> float:
        return row.val_loss if row.val_loss is not None else row.train_loss

    best = selection_loss(state.history[0])
    for epoch in range(1, tcfg.epochs + 1):
        order = rng.permutation(len(train_images))
        batch_losses = []
        for start in range(0, len(order), tcfg.batch_size):
            batch = [train_images[i] for i in order[start : start + tcfg.batch_size]]
            costs, grads = zip(*(value_and_grad(img, params) for img in batch))
            mean_grad = {k: np.mean([g[k] for g in grads], axis=0) for k in params}
            batch_losses.append(float(np.mean(costs)))
            params = optimizer.step(params, mean_grad)
        row = record(epoch, float(np.mean(batch_losses)))
        state.history.append(row)
        if selection_loss(row) < best:
            best = selection_loss(row)
            state.best_params = {k: v.copy() for k, v in params.items()}
            state.best_epoch = epoch

    state.params = params
    state.best_val_loss = best
    return state


@log_method_entry(run_type="train")
def fit(
    train_images: Sequence[ImageTensor],
    val_images: Sequence[ImageTensor],
    tcfg: TrainConfig,
    acfg: AutoencoderConfig,
    patch_size: int,
    stride: int,
) -> TrainState[MpsParams]:
    """Train the MPS encoder on normal images; angles start uniform in [0, 2*pi)."""
    if not train_images:
        raise ArgumentError("training set is empty")
    n = acfg.n_data_qubits
    rng = np.random.default_rng(tcfg.seed)
    init = MpsParams.random(n, rng)
    logger.info(f"fit: P={patch_size} S={stride} BD={acfg.bottleneck_dim} n_train={init.n_train} seed={tcfg.seed}")

    def wrap(d: ParamDict) -> MpsParams:
        return MpsParams(d["theta"].copy(), n)

    def vg(img: ImageTensor, d: ParamDict) -> Tuple[float, ParamDict]:
        cost, grad = value_and_gradient(img, wrap(d), acfg, patch_size, stride)
        return cost, {"theta": grad}

    def v(img: ImageTensor, d: ParamDict) -> float:
        return image_cost(img, wrap(d), acfg, patch_size, stride)

    raw = optimize(train_images, val_images, tcfg, {"theta": init.angles.copy()}, vg, v, rng)
    return TrainState(
        params=wrap(raw.params),
        optimizer=raw.optimizer,
        history=raw.history,
        best_params=wrap(raw.best_params),
        best_epoch=raw.best_epoch,
        best_val_loss=raw.best_val_loss,
        seed=tcfg.seed,
    )


def infer_map(
    img: ImageTensor,
    params: MpsParams,
    acfg: AutoencoderConfig,
    patch_size: int,
    stride: int,
    rng: Optional[np.random.Generator] = None,
) -> ScoreMap:
    """Anomaly map Y from the test-phase SWAP test scores."""
    return anomaly_map(img, QuantumTestScorer(params, acfg, rng), patch_size, stride)
