from functools import lru_cache
from pathlib import Path

from pydantic_settings import BaseSettings, PydanticBaseSettingsSource, SettingsConfigDict


class Settings(BaseSettings):
    model_config = SettingsConfigDict(frozen=True)

    # App
    app_name: str = "treeharmonic"
    debug: bool = False

    # Fixed-point solves (first-passage probabilities)
    fixed_point_tol: float = 1e-12
    fixed_point_max_iter: int = 1_000_000
    transience_margin: float = 1e-9

    # Float tolerances for non-forward-only operators
    additivity_tol: float = 1e-10
    kernel_tol: float = 1e-10
    dirichlet_tol: float = 1e-9

    # Transfer through the hitting distribution
    share_denominator: int = 10**6  # hitting shares are rounded to this denominator
    transfer_tol: float = 1e-6

    # Exact arithmetic
    modulus_bits: int = 64  # precision of certified sqrt upper bounds

    # Enumeration limits
    metric_terms: int = 256
    enumeration_limit: int = 200_000

    # Monte Carlo
    walk_step_cap: int = 10_000
    n_jobs: int = 1
    seed: int = 0

    # Output
    out_dir: Path = Path("out")

    @classmethod
    def settings_customise_sources(
        cls,
        settings_cls: type[BaseSettings],
        init_settings: PydanticBaseSettingsSource,
        env_settings: PydanticBaseSettingsSource,
        dotenv_settings: PydanticBaseSettingsSource,
        file_secret_settings: PydanticBaseSettingsSource,
    ) -> tuple[PydanticBaseSettingsSource, ...]:
        # Invocations are fully described by their command line.
        return (init_settings,)


@lru_cache
def get_settings() -> Settings:
    return Settings()
