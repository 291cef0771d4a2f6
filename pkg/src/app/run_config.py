"""Run configuration: a flat ``key=value`` file plus command-line overrides.

The file is read as a dotenv file (``#`` comments, one ``key=value`` per
line, lists as JSON). Explicit CLI flags are passed as init arguments and win
over file values. Environment variables are not consulted, so a run is fully
described by its file and flags.
"""
import json
import pathlib
from typing import Any, Dict, List, Literal, Optional, Tuple

from pydantic import Field, ValidationError, model_validator
from pydantic_settings import BaseSettings, PydanticBaseSettingsSource, SettingsConfigDict

from src import __version__
from src.app.errors import ConfigError
from src.app.schemas import AutoencoderConfig, SynthSpec, TrainConfig

PATCH_SIZES = (2, 4, 8)
STRIDES = (1, 2, 4, 8)
BOTTLENECKS = (1, 2)


class RunConfig(BaseSettings):
    model_config = SettingsConfigDict(extra="forbid", case_sensitive=False, env_file_encoding="utf-8")

    model: Literal["quantum", "classical"] = "quantum"
    patch_size: int = 4
    stride: int = 1
    bottleneck: int = 2

    epochs: int = Field(20, ge=0)
    learning_rate: float = Field(0.005, ge=0.0)
    batch_size: int = Field(4, ge=1)
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    seeds: List[int] = []

    dataset: Literal["synthetic", "mvtec", "busi"] = "synthetic"
    data_root: Optional[str] = None
    category: str = "synthetic"
    data_seed: int = 0
    mask_rule: Literal["threshold", "any"] = "threshold"

    synth_n_train: int = 100
    synth_n_val: int = 25
    synth_n_test: int = 50
    synth_image_size: int = 32
    synth_texture: Literal["stripes", "blobs", "uniform-noise"] = "stripes"
    synth_defect: Literal["square", "ellipse", "scratch"] = "square"
    synth_defect_size: int = 8
    synth_defect_intensity_delta: float = 0.3
    synth_anomaly_fraction: float = 0.5

    shots: Optional[int] = Field(None, ge=1)
    reset_trash_before_decode: bool = True
    zero_patch_rule: Literal["uniform", "unit_score"] = "uniform"
    pro_averaging: Literal["components", "images"] = "components"
    per_image_auroc: bool = False

    out: str = "runs/default"

    @classmethod
    def settings_customise_sources(
        cls,
        settings_cls,
        init_settings: PydanticBaseSettingsSource,
        env_settings: PydanticBaseSettingsSource,
        dotenv_settings: PydanticBaseSettingsSource,
        file_secret_settings: PydanticBaseSettingsSource,
    ) -> Tuple[PydanticBaseSettingsSource, ...]:
        return init_settings, dotenv_settings

    @model_validator(mode="after")
    def _check_grid(self) -> "RunConfig":
        P, S, BD = self.patch_size, self.stride, self.bottleneck
        if P not in PATCH_SIZES:
            raise ValueError(f"patch_size must be one of {PATCH_SIZES}, got {P}")
        if S not in STRIDES or S > P:
            raise ValueError(f"stride must be one of {STRIDES} and <= patch_size={P}, got {S}")
        if BD not in BOTTLENECKS:
            raise ValueError(f"bottleneck must be one of {BOTTLENECKS}, got {BD}")
        if P == 2 and BD != 1:
            raise ValueError(f"patch_size=2 fixes bottleneck=1, got {BD}")
        return self

    @classmethod
    def full_grid(cls) -> List[Tuple[int, int, int]]:
        """Every valid (patch_size, stride, bottleneck) triple."""
        return [
            (P, S, BD)
            for P in PATCH_SIZES
            for S in STRIDES
            if S <= P
            for BD in BOTTLENECKS
            if not (P == 2 and BD != 1)
        ]

    @property
    def run_seeds(self) -> List[int]:
        return list(self.seeds) if self.seeds else [self.seed]

    def autoencoder(self) -> AutoencoderConfig:
        return AutoencoderConfig(
            patch_size=self.patch_size,
            bottleneck_dim=self.bottleneck,
            reset_trash_before_decode=self.reset_trash_before_decode,
            zero_patch_rule=self.zero_patch_rule,
            shots=self.shots,
        )

    def train_config(self, seed: Optional[int] = None) -> TrainConfig:
        return TrainConfig(
            epochs=self.epochs,
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            seed=self.seed if seed is None else seed,
            adam_beta1=self.adam_beta1,
            adam_beta2=self.adam_beta2,
            adam_eps=self.adam_eps,
        )

    def synth_spec(self) -> SynthSpec:
        return SynthSpec(
            n_train=self.synth_n_train,
            n_val=self.synth_n_val,
            n_test=self.synth_n_test,
            image_size=self.synth_image_size,
            texture=self.synth_texture,
            defect=self.synth_defect,
            defect_size=self.synth_defect_size,
            defect_intensity_delta=self.synth_defect_intensity_delta,
            anomaly_fraction=self.synth_anomaly_fraction,
            seed=self.data_seed,
        )

    def to_text(self) -> str:
        """Manifest text that re-parses to an equal RunConfig."""
        lines = [f"# qpb-ae {__version__}"]
        for name, value in self.model_dump().items():
            if value is None:
                continue
            if isinstance(value, bool):
                text = "true" if value else "false"
            elif isinstance(value, list):
                text = json.dumps(value)
            elif isinstance(value, float):
                text = repr(value)
            else:
                text = str(value)
            lines.append(f"{name}={text}")
        return "\n".join(lines) + "\n"

    def write(self, path: pathlib.Path) -> pathlib.Path:
        path = pathlib.Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_text(), encoding="utf-8")
        return path


def load_run_config(path: Optional[pathlib.Path] = None, overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
    """Parse ``path`` (if any) with ``overrides`` on top; invalid values raise ConfigError."""
    kwargs = {k: v for k, v in (overrides or {}).items() if v is not None}
    if path is not None and not pathlib.Path(path).is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        return RunConfig(_env_file=str(path) if path is not None else None, **kwargs)
    except ValidationError as exc:
        problems = "; ".join(f"{'.'.join(str(p) for p in e['loc']) or 'config'}: {e['msg']}" for e in exc.errors())
        raise ConfigError(f"invalid run configuration: {problems}") from exc
    except ValueError as exc:
        # malformed values in the file (e.g. a list that is not JSON)
        raise ConfigError(f"invalid run configuration: {exc}") from exc
