from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    model_config = SettingsConfigDict(env_prefix="QPB_", env_file=".env", env_file_encoding="utf-8", extra="ignore")

    # Simulator limits
    max_qubits: int = 14
    max_batch_amplitudes: int = 1 << 22  # chunk size bound for batched patch circuits
    norm_tolerance: float = 1e-10

    log_dir: str = "log"
    log_level: str = "INFO"

    # Evaluation
    sweep_thresholds: int = 101
    aupro_fpr_limit: float = 0.3
    component_connectivity: int = 8  # 4 or 8
    mask_binarize_threshold: float = 0.5


settings = Settings()  # load once at import
