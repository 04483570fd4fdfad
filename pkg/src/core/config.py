"""Application configuration."""

from pathlib import Path
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Application settings."""

    model_config = SettingsConfigDict(
        env_prefix="TABATT_",
        env_file=".env",
        case_sensitive=False,
    )

    # Application settings
    app_name: str = "tabattention-lab"
    app_version: str = "1.0.0"

    # Storage settings
    data_dir: Path = Path("./data")
    runs_dir: Path = Path("./runs")

    # Logging settings
    log_level: str = "INFO"
    log_json: bool = True

    # Numerics
    debug_checks: bool = False

    # Experiment defaults
    default_seed: int = 0
    jobs: int = 1

    def setup_directories(self):
        """Create necessary directories."""
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self.runs_dir.mkdir(parents=True, exist_ok=True)


settings = Settings()
