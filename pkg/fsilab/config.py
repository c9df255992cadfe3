import os
from pathlib import Path
from pydantic_settings import BaseSettings

from . import __version__

APP_NAME = "FSI Stability Lab"
VERSION = __version__
LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


class Settings(BaseSettings):
    """Environment overrides. Everything that shapes a run's numbers lives in the TOML run config."""
    
    # Output
    output_dir: Path = Path("runs")
    
    # Parallelism degree for sweeps and ensembles
    max_workers: int = max(1, min(8, os.cpu_count() or 1))
    
    class Config:
        env_file = ".env"
        env_prefix = "FSILAB_"
        case_sensitive = False


# Global settings instance
settings = Settings()
