from typing import List, Literal, Optional, Tuple

from pydantic import BaseModel, Field, model_validator


def _log2_exact(value: int) -> int | None:
    if value < 1 or value & (value - 1):
        return None
    return value.bit_length() - 1


class AutoencoderConfig(BaseModel):
    model_config = {"frozen": True}

    patch_size: int = Field(..., ge=2)
    bottleneck_dim: int = Field(..., ge=1)
    # Trash wires are reset to |0> between encoder and decoder.
    reset_trash_before_decode: bool = True
    # "uniform": all-zero patches embed as the uniform superposition.
    # "unit_score": all-zero patches skip the circuit and score 1.
    zero_patch_rule: Literal["uniform", "unit_score"] = "uniform"
    shots: Optional[int] = Field(None, ge=1)

    @model_validator(mode="after")
    def _check_geometry(self) -> "AutoencoderConfig":
        if _log2_exact(self.patch_size * self.patch_size) is None:
            raise ValueError(f"patch_size**2 must be a power of two, got P={self.patch_size}")
        if not 1 <= self.bottleneck_dim < self.n_data_qubits:
            raise ValueError(
                f"bottleneck_dim must satisfy 1 <= BD < n={self.n_data_qubits}, got {self.bottleneck_dim}"
            )
        return self

    @property
    def n_data_qubits(self) -> int:
        return (self.patch_size * self.patch_size).bit_length() - 1

    @property
    def n_trash(self) -> int:
        return self.n_data_qubits - self.bottleneck_dim

    @property
    def trash_qubits(self) -> Tuple[int, ...]:
        """Last n_t data qubits; the first n_BD carry the compressed state."""
        return tuple(range(self.bottleneck_dim, self.n_data_qubits))

    @property
    def n_train(self) -> int:
        return 2 * (self.n_data_qubits - 1)


class TrainConfig(BaseModel):
    model_config = {"frozen": True}

    epochs: int = Field(20, ge=0)
    learning_rate: float = Field(0.005, ge=0.0)
    batch_size: int = Field(4, ge=1)
    seed: int = 0
    adam_beta1: float = Field(0.9, ge=0.0, lt=1.0)
    adam_beta2: float = Field(0.999, ge=0.0, lt=1.0)
    adam_eps: float = Field(1e-8, gt=0.0)


class LossRecord(BaseModel):
    epoch: int
    train_loss: float
    val_loss: Optional[float] = None


class SynthSpec(BaseModel):
    model_config = {"frozen": True}

    n_train: int = Field(100, ge=1)
    n_val: int = Field(25, ge=0)
    n_test: int = Field(50, ge=1)
    image_size: int = Field(32, ge=2)
    texture: Literal["stripes", "blobs", "uniform-noise"] = "stripes"
    defect: Literal["square", "ellipse", "scratch"] = "square"
    defect_size: int = Field(8, ge=1)
    defect_intensity_delta: float = 0.3
    anomaly_fraction: float = Field(0.5, ge=0.0, le=1.0)
    seed: int = 0


class CurvePoint(BaseModel):
    threshold: float
    value: float


class EvalReport(BaseModel):
    auroc: float = Field(..., ge=0.0, le=1.0)
    aupro: float = Field(..., ge=0.0, le=1.0)
    fpr_limit: float = 0.3
    thresholds: List[float] = []
    dice_curve: List[CurvePoint] = []
    iou_curve: List[CurvePoint] = []
    n_images: int = 0

    @property
    def best_dice(self) -> CurvePoint | None:
        return max(self.dice_curve, key=lambda p: p.value, default=None)

    @property
    def best_iou(self) -> CurvePoint | None:
        return max(self.iou_curve, key=lambda p: p.value, default=None)


class SeedResult(BaseModel):
    model_kind: Literal["quantum", "classical"]
    seed: int
    auroc: float
    aupro: float
    n_parameters: int


class ComparisonRow(BaseModel):
    seed: Optional[int]  # None for the aggregate rows
    label: Optional[str] = None  # "mean" or "std" on aggregate rows
    quantum_auroc: float
    quantum_aupro: float
    classical_auroc: float
    classical_aupro: float
    quantum_parameters: int
    classical_parameters: int

